"""Plant representation, pencil evaluation and invariant-zero analysis.

The central object is the quadruple (A, B, C, D) together with its time
domain. Invariant zeros are the frequencies where the system pencil

    [[A - lambda*I, B],
     [C,            D]]

loses rank relative to its normal rank; they are computed by compressing the
rectangular pencil to square generalized eigenproblems and confirming every
candidate with an explicit rank test.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import IllConditionedPencil
from .numkernel import DEFAULT_POLICY, TolerancePolicy, rank_of
from .seeding import DEFAULT_SEED, rng_for

_NORMAL_RANK_SAMPLES = 7
_CLUSTER_RTOL = 1e-6
_GRAY_ZONE = 10.0


class TimeDomain(enum.Enum):
    """Continuous (derivative operator) or discrete (unit shift) dynamics."""

    CONTINUOUS = "continuous"
    DISCRETE = "discrete"

    def is_stable(self, value: complex) -> bool:
        """Membership in the open stability region (left half-plane / unit disc)."""
        if self is TimeDomain.CONTINUOUS:
            return value.real < 0.0
        return abs(value) < 1.0

    def is_interior_stable(self, value: complex, margin: float) -> bool:
        """Strict membership with a safety belt; boundary points count as unstable."""
        if self is TimeDomain.CONTINUOUS:
            return value.real < -margin * (1.0 + abs(value))
        return abs(value) < 1.0 - margin

    @property
    def tracking_frequency(self) -> float:
        """Frequency at which steady-state tracking of a step is evaluated."""
        return 0.0 if self is TimeDomain.CONTINUOUS else 1.0


@dataclass(frozen=True)
class LtiSystem:
    """State-space plant with n states, m inputs and p outputs.

    The constructor enforces the standing structural conventions: the stacked
    input matrix [B; D] has full column rank and the concatenated output
    matrix [C D] has full row rank. Use :meth:`relaxed` to bypass these checks
    when deliberately building degenerate test systems.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    domain: TimeDomain = TimeDomain.CONTINUOUS

    def __post_init__(self):
        A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.A, self.B, self.C, self.D))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        n, m, p = A.shape[0], B.shape[1], C.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.shape != (n, m) or C.shape != (p, n) or D.shape != (p, m):
            raise ValueError("inconsistent state-space dimensions")
        if not all(np.all(np.isfinite(M)) for M in (A, B, C, D)):
            raise ValueError("matrices must be finite")
        if getattr(self, "_skip_rank_checks", False):
            return
        if rank_of(np.vstack([B, D])) != m:
            raise ValueError("[B; D] must have full column rank")
        if rank_of(np.hstack([C, D])) != p:
            raise ValueError("[C D] must have full row rank")

    @classmethod
    def relaxed(cls, A, B, C, D, domain: TimeDomain = TimeDomain.CONTINUOUS) -> "LtiSystem":
        """Build without the column/row rank checks (degenerate fixtures only)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "_skip_rank_checks", True)
        obj.__init__(A=A, B=B, C=C, D=D, domain=domain)
        return obj

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def output_deleted(self, j: int) -> "LtiSystem":
        """The plant with output row ``j`` removed from C and D."""
        if not 0 <= j < self.p:
            raise ValueError(f"output index {j} out of range")
        return LtiSystem.relaxed(
            self.A, self.B, np.delete(self.C, j, axis=0), np.delete(self.D, j, axis=0), self.domain
        )

    def to_json_dict(self) -> dict:
        return {
            "time_domain": self.domain.value,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "LtiSystem":
        domain = TimeDomain(payload["time_domain"])
        return cls(payload["A"], payload["B"], payload["C"], payload["D"], domain)

    @classmethod
    def load(cls, path) -> "LtiSystem":
        with open(Path(path), "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))

    def save(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class InvariantZero:
    value: complex
    geometric_multiplicity: int
    is_minimum_phase: bool


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the standing-assumption audit."""

    right_invertible: bool
    stabilizable: bool
    no_zero_at_tracking_frequency: bool
    distinct_min_phase_zeros: bool
    details: dict

    @property
    def all_pass(self) -> bool:
        return (
            self.right_invertible
            and self.stabilizable
            and self.no_zero_at_tracking_frequency
            and self.distinct_min_phase_zeros
        )


def rosenbrock(sys: LtiSystem, lam: complex) -> np.ndarray:
    """System pencil [[A - lam*I, B], [C, D]] of shape (n+p) x (n+m)."""
    shift = sys.A - lam * np.eye(sys.n)
    return np.block([[shift, sys.B.astype(shift.dtype)], [sys.C.astype(shift.dtype), sys.D.astype(shift.dtype)]])


def normal_rank(sys: LtiSystem, tol: TolerancePolicy = DEFAULT_POLICY, seed: int = DEFAULT_SEED) -> int:
    """Generic rank of the pencil, sampled at seeded complex frequencies.

    Samples are drawn away from the real axis, where all finite zeros of a
    real pencil would have to lie in conjugate pairs; the maximum over seven
    samples equals the true normal rank with probability one.
    """
    rng = rng_for(seed, "normal-rank")
    best = 0
    for _ in range(_NORMAL_RANK_SAMPLES):
        lam = complex(rng.normal(scale=2.0), (0.5 + abs(rng.normal(scale=2.0))) * rng.choice([-1.0, 1.0]))
        best = max(best, rank_of(rosenbrock(sys, lam), tol))
    return best


def _compression_candidates(sys: LtiSystem, seed: int, index: int) -> np.ndarray:
    """Finite generalized eigenvalues of one random square compression of the pencil."""
    P0 = rosenbrock(sys, 0.0)
    E = np.zeros_like(P0)
    E[: sys.n, : sys.n] = np.eye(sys.n)
    k = min(P0.shape)
    rng = rng_for(seed, "zero-compression", index)
    L = rng.standard_normal((k, P0.shape[0]))
    R = rng.standard_normal((P0.shape[1], k))
    ev = scipy.linalg.eigvals(L @ P0 @ R, L @ E @ R)
    finite = ev[np.isfinite(ev)]
    return finite[np.abs(finite) < 1.0 / np.sqrt(np.finfo(float).eps)]


def _polish_candidate(sys: LtiSystem, z: complex, steps: int = 2) -> complex:
    """Newton refinement of a candidate zero via the smallest singular pair.

    With u, v the left/right singular vectors of the smallest singular value
    of P(z), the correction solves u* P(z + dz) v = 0 to first order, where
    dP/dz is minus the identity on the state block. A candidate that is not
    actually a zero moves far away and is left untouched.
    """
    refined = z
    for _ in range(steps):
        P = rosenbrock(sys, refined)
        u, s, vh = np.linalg.svd(P)
        k = min(P.shape) - 1
        u_min, v_min = u[:, k], vh[k, :].conj()
        slope = -(u_min.conj() @ np.concatenate([v_min[: sys.n], np.zeros(P.shape[0] - sys.n)]))
        if abs(slope) < 1e-3:
            break
        step = (u_min.conj() @ (P @ v_min)) / slope
        refined = refined - step
    if abs(refined - z) > _CLUSTER_RTOL * (1.0 + abs(z)):
        return z
    return refined


def _cluster(values: np.ndarray) -> list[complex]:
    """Merge values within the relative clustering radius; snap near-real to real."""
    reps: list[complex] = []
    for z in sorted(values, key=lambda v: (v.real, v.imag)):
        tol = _CLUSTER_RTOL * (1.0 + abs(z))
        for i, r in enumerate(reps):
            if abs(z - r) <= tol:
                reps[i] = (r + z) / 2.0
                break
        else:
            reps.append(complex(z))
    return [complex(r.real, 0.0) if abs(r.imag) <= _CLUSTER_RTOL * (1.0 + abs(r)) else r for r in reps]


def invariant_zeros(
    sys: LtiSystem, tol: TolerancePolicy = DEFAULT_POLICY, seed: int = DEFAULT_SEED
) -> list[InvariantZero]:
    """All finite invariant zeros with geometric multiplicities.

    Two independent random compressions of the pencil are solved as
    generalized eigenproblems; a true zero appears in both spectra, while the
    spurious eigenvalues introduced by each compression differ almost surely.
    The intersection of the two candidate sets is then confirmed value by
    value through a rank test on the original rectangular pencil.

    Raises
    ------
    IllConditionedPencil
        If a candidate sits in the gray zone where the rank test can neither
        confirm nor reject it.
    """
    nr = normal_rank(sys, tol, seed)
    first = _compression_candidates(sys, seed, 0)
    second = _compression_candidates(sys, seed, 1)
    matched = [
        z for z in first if second.size and np.min(np.abs(second - z)) <= _CLUSTER_RTOL * (1.0 + abs(z))
    ]
    zeros: list[InvariantZero] = []
    for z in _cluster(np.asarray(matched)):
        z = _polish_candidate(sys, z)
        if abs(z.imag) <= _CLUSTER_RTOL * (1.0 + abs(z)):
            z = complex(z.real, 0.0)
        P = rosenbrock(sys, z)
        s = np.linalg.svd(P, compute_uv=False)
        threshold = tol.rank_threshold(P.shape, float(s[0]))
        rank = int(np.sum(s > threshold))
        if rank < nr:
            zeros.append(
                InvariantZero(
                    value=z,
                    geometric_multiplicity=nr - rank,
                    is_minimum_phase=sys.domain.is_interior_stable(z, tol.zero_exclusion),
                )
            )
        elif s[nr - 1] < _GRAY_ZONE * threshold:
            raise IllConditionedPencil(
                f"candidate {z} has marginal singular value {s[nr - 1]:.3e} near threshold {threshold:.3e}"
            )
    # A real pencil has conjugate-symmetric zeros; restore partners lost to numerics.
    by_key = {(round(z.value.real, 9), round(z.value.imag, 9)): z for z in zeros}
    for z in list(zeros):
        if abs(z.value.imag) > 0.0:
            conj_key = (round(z.value.real, 9), round(-z.value.imag, 9))
            if conj_key not in by_key:
                zeros.append(
                    InvariantZero(z.value.conjugate(), z.geometric_multiplicity, z.is_minimum_phase)
                )
    return sorted(zeros, key=lambda z: (z.value.real, z.value.imag))


def classify_zeros(
    sys: LtiSystem, zeros: list[InvariantZero] | None = None, tol: TolerancePolicy = DEFAULT_POLICY
) -> tuple[list[InvariantZero], list[InvariantZero]]:
    """Partition zeros into (minimum-phase, non-minimum-phase).

    Boundary zeros (imaginary axis / unit circle) count as non-minimum-phase
    because the stability region is open.
    """
    if zeros is None:
        zeros = invariant_zeros(sys, tol)
    minimum = [z for z in zeros if z.is_minimum_phase]
    non_minimum = [z for z in zeros if not z.is_minimum_phase]
    return minimum, non_minimum


def audit_assumptions(
    sys: LtiSystem, tol: TolerancePolicy = DEFAULT_POLICY, seed: int = DEFAULT_SEED
) -> AssumptionReport:
    """Check the four standing assumptions required by the tracking setup."""
    details: dict[str, str] = {}
    nr = normal_rank(sys, tol, seed)
    right_invertible = nr == sys.n + sys.p
    details["right_invertible"] = f"normal rank {nr} (full row rank is {sys.n + sys.p})"

    stabilizable = True
    bad_modes = []
    for lam in np.linalg.eigvals(sys.A):
        if not sys.domain.is_stable(lam):
            pbh = rank_of(np.hstack([sys.A - lam * np.eye(sys.n), sys.B.astype(complex)]), tol)
            if pbh < sys.n:
                stabilizable = False
                bad_modes.append(lam)
    details["stabilizable"] = (
        "all unstable modes controllable" if stabilizable else f"uncontrollable unstable modes {bad_modes}"
    )

    freq = sys.domain.tracking_frequency
    at_freq = rank_of(rosenbrock(sys, freq), tol)
    no_zero_at_freq = at_freq == sys.n + sys.p
    details["no_zero_at_tracking_frequency"] = f"pencil rank {at_freq} at frequency {freq}"

    distinct = True
    try:
        minimum, _ = classify_zeros(sys, invariant_zeros(sys, tol, seed), tol)
        for z in minimum:
            if z.geometric_multiplicity != 1:
                distinct = False
        for i, zi in enumerate(minimum):
            for zj in minimum[i + 1 :]:
                if abs(zi.value - zj.value) <= tol.zero_exclusion * (1.0 + abs(zi.value)):
                    distinct = False
        details["distinct_min_phase_zeros"] = f"minimum-phase zeros {[z.value for z in minimum]}"
    except IllConditionedPencil as exc:
        distinct = False
        details["distinct_min_phase_zeros"] = f"zero computation ill-conditioned: {exc}"

    return AssumptionReport(
        right_invertible=right_invertible,
        stabilizable=stabilizable,
        no_zero_at_tracking_frequency=no_zero_at_freq,
        distinct_min_phase_zeros=distinct,
        details=details,
    )


def exclusion_violation(
    value: float, zeros: list[InvariantZero], tol: TolerancePolicy = DEFAULT_POLICY
) -> bool:
    """True when ``value`` lies inside the exclusion radius of some invariant zero."""
    return any(abs(value - z.value) <= tol.zero_exclusion * (1.0 + abs(z.value)) for z in zeros)
