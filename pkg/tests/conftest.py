import json

import numpy as np
import pytest

import monotrack as mt
from monotrack.fixtures import demo_replay_path, demo_system_path


@pytest.fixture(scope="session")
def demo_system() -> mt.LtiSystem:
    """Bundled bi-proper 5-state continuous plant used across the suite."""
    return mt.LtiSystem.load(demo_system_path())


@pytest.fixture(scope="session")
def demo_zeros(demo_system):
    return mt.invariant_zeros(demo_system)


@pytest.fixture(scope="session")
def demo_replay() -> mt.Replay:
    payload = json.loads(demo_replay_path().read_text())
    return mt.Replay(
        vg_state=np.asarray(payload["V_g"], dtype=float),
        vg_input=np.asarray(payload["W_g"], dtype=float),
        directions={e["output"]: (e["v"], e["w"]) for e in payload["directions"]},
    )


@pytest.fixture(scope="session")
def demo_feedback(demo_system) -> mt.FeedbackResult:
    spec = mt.SynthesisSpec(lambdas=(-1.0, -2.0, -1.0), reference=(2.0, 2.0, 2.0))
    return mt.synthesize(demo_system, spec)


# Reference values for the bundled demo plant, frozen as exact rationals.
DEMO_GAIN = np.array(
    [
        [68419 / 8250, 802 / 125, -1121 / 125, -6, -1639 / 250],
        [-5351 / 2475, -16 / 75, 6 / 25, 0, 127 / 25],
        [5537 / 4950, -12 / 225, -36 / 25, 0, -162 / 25],
        [4 / 9, 4 / 3, 0, 0, 0],
    ]
)

DEMO_XSS = np.array([0.0, -2.0, 10 / 3, 0.0, -7 / 15])
DEMO_USS = np.array([-48 / 5, -14 / 15, -1.0, -2.0])

DEMO_ZEROS = (-6.0, 2.0, 3.0, 5.0)
