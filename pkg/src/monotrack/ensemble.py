"""Random plant generation and statistical genericity harness.

Planted invariant zeros are realized by cascading first-order (or rank-one
second-order, for conjugate pairs) inner factors onto a zero-free square
base; planted uncontrollable modes are added by block-triangular state
augmentation, which for right-invertible plants automatically makes them
invariant zeros as well. The genericity trial samples the randomized
constructions many times and counts rank-deficiency events, which the
underlying theory predicts to be measure zero.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationFailed, MonotrackError
from .numkernel import DEFAULT_POLICY, TolerancePolicy, nullspace, rank_of
from .seeding import DEFAULT_SEED, mixing_coefficients, rng_for
from .subspaces import _pencil_kernel, default_frequency_pool, rstar, vstar_g
from .sysmodel import LtiSystem, TimeDomain, audit_assumptions, invariant_zeros

_GENERATION_RETRIES = 20


@dataclass(frozen=True)
class GeneratorSpec:
    """Dimensions and planted structure for a random plant."""

    n: int
    m: int
    p: int
    domain: TimeDomain = TimeDomain.CONTINUOUS
    planted_zero_values: tuple = ()
    planted_uncontrollable_modes: tuple = ()
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if min(self.n, self.m, self.p) < 1:
            raise ValueError("dimensions must be positive")
        if self.m < self.p:
            raise ValueError("at least as many inputs as outputs required")
        zeros = tuple(complex(z) for z in self.planted_zero_values)
        object.__setattr__(self, "planted_zero_values", zeros)
        for z in zeros:
            if z.imag != 0.0 and not any(abs(other - z.conjugate()) < 1e-12 for other in zeros):
                raise ValueError("planted zero values must be conjugate-closed")
            if abs(z - self.domain.tracking_frequency) < 1e-9:
                raise ValueError("cannot plant a zero at the tracking frequency")
        modes = tuple(float(u) for u in self.planted_uncontrollable_modes)
        object.__setattr__(self, "planted_uncontrollable_modes", modes)
        for u in modes:
            if not self.domain.is_stable(u):
                raise ValueError(f"planted uncontrollable mode {u} must be stable")
        if self.zero_state_count + len(modes) > self.n:
            raise ValueError("planted structure requires more states than available")

    @property
    def zero_state_count(self) -> int:
        pairs = sum(1 for z in self.planted_zero_values if z.imag > 0.0)
        reals = sum(1 for z in self.planted_zero_values if z.imag == 0.0)
        return reals + 2 * pairs


def _series(first, second):
    """Series interconnection u -> first -> second -> y of square p x p quadruples."""
    A1, B1, C1, D1 = first
    A2, B2, C2, D2 = second
    n1, n2 = A1.shape[0], A2.shape[0]
    A = np.block([[A1, np.zeros((n1, n2))], [B2 @ C1, A2]])
    B = np.vstack([B1, B2 @ D1])
    C = np.hstack([D2 @ C1, C2])
    D = D2 @ D1
    return A, B, C, D


def _zero_factor(z: complex, channel: int, p: int, rng: np.random.Generator):
    """An inner factor whose only transmission zero is ``z`` (or the pair z, conj z)."""
    e_c = np.zeros((1, p))
    e_c[0, channel] = 1.0
    if z.imag == 0.0:
        gamma = float(rng.uniform(0.5, 2.0)) * float(rng.choice([-1.0, 1.0]))
        A = np.array([[z.real + gamma]])
        B = e_c.copy()
        C = gamma * e_c.T
        return A, B, C, np.eye(p)
    rotation = np.array([[z.real, -z.imag], [z.imag, z.real]])
    u = rng.uniform(-1.0, 1.0, 2)
    v = rng.uniform(-1.0, 1.0, 2)
    A = rotation + np.outer(u, v)
    B = np.outer(u, e_c[0])
    C = np.outer(e_c[0], v).reshape(p, 2)
    return A, B, C, np.eye(p)


def _extra_input_columns(A, B, C, D, planted: tuple, extra: int, rng: np.random.Generator, tol: TolerancePolicy):
    """Input columns that keep every planted zero a rank-drop point of the pencil.

    At a planted zero the square pencil has a nonzero left kernel; a new
    column preserves the rank drop iff it is orthogonal to that left kernel.
    """
    n = A.shape[0]
    constraints = []
    for z in {complex(z) for z in planted}:
        pencil = np.block(
            [[A - z * np.eye(n), B], [C.astype(complex), D.astype(complex)]]
        )
        left = nullspace(pencil.conj().T, tol).columns
        for k in range(left.shape[1]):
            # Complex SVD may rotate phases even at real zeros, so always
            # impose both real and imaginary constraint rows.
            constraints.append(left[:, k].conj().real)
            constraints.append(left[:, k].conj().imag)
    if constraints:
        admissible = nullspace(np.vstack(constraints), tol).columns
    else:
        admissible = np.eye(n + C.shape[0])
    if admissible.shape[1] == 0:
        raise GenerationFailed("no admissible extra input directions remain")
    cols = admissible @ rng.uniform(-1.0, 1.0, (admissible.shape[1], extra))
    return cols[:n, :], cols[n:, :]


def generate(spec: GeneratorSpec, tol: TolerancePolicy = DEFAULT_POLICY) -> LtiSystem:
    """Draw a plant that passes the assumption audit with the planted structure."""
    for attempt in range(_GENERATION_RETRIES):
        rng = rng_for(spec.seed, "generate", attempt)
        try:
            sys = _generate_once(spec, rng, tol)
        except (MonotrackError, ValueError, np.linalg.LinAlgError):
            continue
        if _verify_planted(sys, spec, tol):
            return sys
    raise GenerationFailed(f"no admissible plant found in {_GENERATION_RETRIES} attempts")


def _generate_once(spec: GeneratorSpec, rng: np.random.Generator, tol: TolerancePolicy) -> LtiSystem:
    p = spec.p
    n_core = spec.n - spec.zero_state_count - len(spec.planted_uncontrollable_modes)
    A = rng.uniform(-1.0, 1.0, (n_core, n_core))
    if spec.domain is TimeDomain.DISCRETE:
        A = 0.5 * A / max(1.0, np.max(np.abs(np.linalg.eigvals(A)))) if n_core else A
    B = rng.uniform(-1.0, 1.0, (n_core, p))
    C = np.zeros((p, n_core))
    D = np.eye(p)

    planted_order = [z for z in spec.planted_zero_values if z.imag > 0.0]
    planted_order += [z for z in spec.planted_zero_values if z.imag == 0.0]
    for idx, z in enumerate(planted_order):
        A, B, C, D = _series((A, B, C, D), _zero_factor(z, idx % p, p, rng))

    if spec.m > p:
        b_extra, d_extra = _extra_input_columns(A, B, C, D, spec.planted_zero_values, spec.m - p, rng, tol)
        B = np.hstack([B, b_extra])
        D = np.hstack([D, d_extra])

    for mode in spec.planted_uncontrollable_modes:
        size = A.shape[0]
        A = np.block([[np.array([[mode]]), np.zeros((1, size))], [rng.uniform(-1.0, 1.0, (size, 1)), A]])
        B = np.vstack([np.zeros((1, B.shape[1])), B])
        C = np.hstack([rng.uniform(-1.0, 1.0, (p, 1)), C])

    return LtiSystem(A, B, C, D, spec.domain)


def _verify_planted(sys: LtiSystem, spec: GeneratorSpec, tol: TolerancePolicy) -> bool:
    report = audit_assumptions(sys, tol, spec.seed)
    if not report.all_pass:
        return False
    try:
        zeros = invariant_zeros(sys, tol, spec.seed)
    except MonotrackError:
        return False
    computed = [z.value for z in zeros]
    for z in spec.planted_zero_values:
        if not any(abs(z - zc) <= 1e-6 * (1.0 + abs(z)) for zc in computed):
            return False
    for mode in spec.planted_uncontrollable_modes:
        pbh = rank_of(np.hstack([sys.A - mode * np.eye(sys.n), sys.B]), tol)
        if pbh == sys.n:
            return False
    return True


@dataclass(frozen=True)
class GenericityStats:
    """Aggregate outcome of repeated randomized-construction draws."""

    trials: int
    failures: int
    failing_seeds: tuple = ()
    notes: dict = field(default_factory=dict)

    @property
    def success_fraction(self) -> float:
        return 1.0 if self.trials == 0 else (self.trials - self.failures) / self.trials

    def to_json_dict(self) -> dict:
        return {
            "trials": self.trials,
            "failures": self.failures,
            "failing_seeds": list(self.failing_seeds),
            "success_fraction": self.success_fraction,
            "notes": self.notes,
        }


def genericity_trial(
    sys: LtiSystem,
    trials: int = 100,
    seed: int = DEFAULT_SEED,
    tol: TolerancePolicy = DEFAULT_POLICY,
) -> GenericityStats:
    """Sample the randomized constructions ``trials`` times without retries.

    Each trial draws fresh mixing coefficients for the reachability and
    stabilisability bases, plus randomized direction pairs, and checks that
    every draw is full rank with nonzero output couplings. Failures are
    counted, never retried, so the reported fraction estimates the raw
    genericity of a single draw.
    """
    zeros = invariant_zeros(sys, tol, seed)
    pool = default_frequency_pool(sys, zeros, tol, count=max(sys.n + 3, sys.p))
    failures = 0
    failing = []
    for t in range(trials):
        trial_seed = seed + 1000003 * (t + 1)
        ok = True
        try:
            rstar(sys, tol=tol, seed=trial_seed, zeros=zeros, max_retries=0)
            vg = vstar_g(sys, tol=tol, seed=trial_seed, zeros=zeros, max_retries=0)
            rng = rng_for(trial_seed, "trial-directions")
            direction_cols = []
            for j in range(sys.p):
                kernel = _pencil_kernel(sys, pool[j % len(pool)], j, tol)
                if kernel.shape[1] == 0:
                    continue
                col = kernel @ mixing_coefficients(rng, kernel.shape[1])
                beta = float(sys.C[j] @ col[: sys.n] + sys.D[j] @ col[sys.n :])
                if abs(beta) <= tol.absolute_floor:
                    ok = False
                    break
                direction_cols.append(col[: sys.n] / beta)
            if ok and vg.dim == sys.n - sys.p and len(direction_cols) == sys.p:
                V = np.column_stack(direction_cols + [vg.V]) if vg.dim else np.column_stack(direction_cols)
                ok = rank_of(V, tol) == sys.n
        except MonotrackError:
            ok = False
        if not ok:
            failures += 1
            failing.append(trial_seed)
    return GenericityStats(trials=trials, failures=failures, failing_seeds=tuple(failing))


def fixture_hash(sys: LtiSystem) -> str:
    """Stable content hash of a plant, for batch reports."""
    canonical = json.dumps(sys.to_json_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def batch_report(sys: LtiSystem, stats: GenericityStats) -> dict:
    return {"fixture_hash": fixture_hash(sys), **stats.to_json_dict()}
