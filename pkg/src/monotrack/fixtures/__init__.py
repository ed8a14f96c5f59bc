"""Bundled plant fixtures for demos, the CLI and the acceptance suite."""

from importlib import resources
from pathlib import Path


def demo_system_path() -> Path:
    """Bi-proper 5-state, 4-input, 3-output continuous demo plant."""
    return Path(resources.files(__package__) / "demo_biproper.json")


def demo_replay_path() -> Path:
    """Replay bases and direction pairs reproducing the demo gain exactly."""
    return Path(resources.files(__package__) / "demo_replay.json")
