"""Output-nulling subspace constructions from pencil kernels.

Three families of subspaces drive the solvability theory and the synthesis:

* ``rstar_at``   - the state directions reachable with a single assigned real
  mode, for the full plant or with one output row deleted;
* ``rstar``      - their saturated sum over a pool of distinct stable
  frequencies, which yields the output-nulling reachability subspace;
* ``vstar_g``    - the largest output-nulling subspace with stable inner
  dynamics, assembled from the kernels at the minimum-phase invariant zeros
  plus reachability directions.

A classical fixed-point recursion (``vstar_recursive`` / ``rstar_recursive``)
is provided as an independent oracle for cross-checking the kernel-stacking
path; the two routes must agree and the test suite enforces that they do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AssumptionViolation,
    FrequencyIsZero,
    RankDeficientAfterRetries,
    SaturationFailure,
)
from .numkernel import (
    DEFAULT_POLICY,
    Basis,
    TolerancePolicy,
    containment_residual,
    nullspace,
    orthonormalize,
    rank_of,
    realify_pair,
)
from .seeding import DEFAULT_SEED, mixing_coefficients, rng_for
from .sysmodel import InvariantZero, LtiSystem, TimeDomain, exclusion_violation, invariant_zeros

# Relative residual above which a candidate column counts as extending a span.
_EXTEND_RTOL = 1e-8


@dataclass(frozen=True)
class PairedBasis:
    """State directions with their paired input directions.

    Each column ``i`` of ``V`` (state part) is matched by column ``i`` of
    ``W`` (input part) so that the pencil relation holds at the generating
    frequency ``modes[i]``. Realified complex pairs occupy adjacent slots
    ``(z, conj(z))`` and satisfy the 2x2 rotation-block relation instead of a
    scalar eigen-relation.
    """

    V: np.ndarray
    W: np.ndarray
    modes: tuple

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)
        if V.shape[1] != W.shape[1] or len(self.modes) != V.shape[1]:
            raise ValueError("V, W and modes must agree in column count")

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    def validate(self, sys: LtiSystem, tol: TolerancePolicy = DEFAULT_POLICY, excluded_output: int | None = None) -> None:
        """Check the pencil residual invariants and full column rank of V."""
        C = sys.C if excluded_output is None else np.delete(sys.C, excluded_output, axis=0)
        D = sys.D if excluded_output is None else np.delete(sys.D, excluded_output, axis=0)
        scale = max(1.0, float(np.linalg.norm(sys.A)), float(np.linalg.norm(sys.B)))
        i = 0
        while i < self.dim:
            mode = self.modes[i]
            if isinstance(mode, complex) and mode.imag != 0.0:
                v_pair, w_pair = self.V[:, i : i + 2], self.W[:, i : i + 2]
                rot = np.array([[mode.real, -mode.imag], [mode.imag, mode.real]])
                res_state = sys.A @ v_pair + sys.B @ w_pair - v_pair @ rot
                res_out = C @ v_pair + D @ w_pair
                i += 2
            else:
                mu = float(np.real(mode))
                v, w = self.V[:, i], self.W[:, i]
                res_state = (sys.A - mu * np.eye(sys.n)) @ v + sys.B @ w
                res_out = C @ v + D @ w
                i += 1
            if np.linalg.norm(res_state) > tol.residual_tol * scale or np.linalg.norm(res_out) > tol.residual_tol * scale:
                raise ValueError(f"pencil residual invariant violated at column {i - 1}")
        if self.dim and rank_of(self.V, tol) != self.dim:
            raise ValueError("state directions are rank deficient")


def _pencil_kernel(sys: LtiSystem, mu: complex, excluded_output: int | None, tol: TolerancePolicy) -> np.ndarray:
    """Orthonormal kernel of the pencil, optionally with one output row deleted."""
    C = sys.C if excluded_output is None else np.delete(sys.C, excluded_output, axis=0)
    D = sys.D if excluded_output is None else np.delete(sys.D, excluded_output, axis=0)
    shift = sys.A - mu * np.eye(sys.n)
    pencil = np.block([[shift, sys.B.astype(shift.dtype)], [C.astype(shift.dtype), D.astype(shift.dtype)]])
    return nullspace(pencil, tol).columns


class _SpanTracker:
    """Incrementally orthonormalized span with an extension test.

    Orthogonalization is applied twice per candidate; a single pass loses
    orthogonality when consecutive kernel directions are nearly parallel
    (neighboring pool frequencies produce nearly parallel resolvent
    directions) and would let the tracked dimension inflate past truth.
    """

    def __init__(self, ambient: int):
        self.ambient = ambient
        self.Q = np.zeros((ambient, 0))

    @property
    def dim(self) -> int:
        return self.Q.shape[1]

    def _orthogonalize(self, col: np.ndarray, extra: list) -> np.ndarray:
        res = col
        for _ in range(2):
            if self.Q.shape[1]:
                res = res - self.Q @ (self.Q.T @ res)
            for q in extra:
                res = res - q * (q @ res)
        return res

    def try_add(self, block: np.ndarray) -> bool:
        """Add ``block`` only if it enlarges the span by its full column count."""
        if self.dim + block.shape[1] > self.ambient:
            return False
        added = []
        for k in range(block.shape[1]):
            col = block[:, k]
            nrm = np.linalg.norm(col)
            if nrm == 0.0:
                break
            res = self._orthogonalize(col, added)
            if np.linalg.norm(res) <= _EXTEND_RTOL * nrm:
                break
            added.append(res / np.linalg.norm(res))
        if len(added) != block.shape[1]:
            return False
        self.Q = np.hstack([self.Q] + [a.reshape(-1, 1) for a in added])
        return True

    def extension_quality(self, block: np.ndarray) -> float:
        """Worst normalized orthogonal residual of the block against the span."""
        if self.dim + block.shape[1] > self.ambient:
            return 0.0
        added = []
        worst = np.inf
        for k in range(block.shape[1]):
            col = block[:, k]
            nrm = np.linalg.norm(col)
            if nrm == 0.0:
                return 0.0
            res = self._orthogonalize(col, added)
            worst = min(worst, float(np.linalg.norm(res) / nrm))
            if np.linalg.norm(res) == 0.0:
                return 0.0
            added.append(res / np.linalg.norm(res))
        return float(worst)


# Default pool values this close (relative) to a requested mode are skipped,
# so assigned and invisible modes never produce a nearly defective closed loop.
_POOL_AVOID_RTOL = 5e-3


def default_frequency_pool(
    sys: LtiSystem,
    zeros: list[InvariantZero],
    tol: TolerancePolicy = DEFAULT_POLICY,
    count: int | None = None,
    avoid: tuple = (),
) -> tuple[float, ...]:
    """Distinct stable real frequencies avoiding the invariant zeros.

    Continuous systems use -1, -1.5, -2, ...; discrete systems take the
    dyadic spread 1/2, 1/4, 3/4, 1/8, 5/8, ... so that any prefix keeps the
    values well separated inside the unit interval (tightly packed values
    give nearly parallel resolvent directions and a badly conditioned
    eigenvector basis). Values inside the exclusion radius of a zero or near
    an ``avoid`` entry (e.g. the requested closed-loop modes) are skipped.
    """
    count = count if count is not None else sys.n + 3
    if sys.domain is TimeDomain.CONTINUOUS:
        candidates = (-1.0 - 0.5 * k for k in range(4 * count + 16))
    else:
        dyadic = [
            num / (1 << level)
            for level in range(1, 10)
            for num in range(1, 1 << level, 2)
        ]
        candidates = (x for x in dyadic if 0.02 < x < 0.98)
    pool = []
    for mu in candidates:
        if exclusion_violation(mu, zeros, tol):
            continue
        if any(abs(mu - q) <= tol.zero_exclusion for q in pool):
            continue
        if any(abs(mu - a) <= _POOL_AVOID_RTOL * (1.0 + abs(a)) for a in avoid):
            continue
        pool.append(mu)
        if len(pool) == count:
            return tuple(pool)
    raise SaturationFailure(f"could not assemble a pool of {count} admissible frequencies")


def rstar_at(
    sys: LtiSystem,
    mu: float,
    excluded_output: int | None = None,
    tol: TolerancePolicy = DEFAULT_POLICY,
    zeros: list[InvariantZero] | None = None,
) -> PairedBasis:
    """Directions with a single assignable real mode ``mu``.

    The state parts of the returned basis span the kernel-projected subspace
    for the plant with output ``excluded_output`` deleted (or the full plant
    when None). Kernel columns whose state parts are linearly dependent on
    earlier ones are dropped, so V always has full column rank; the paired
    input columns are kept aligned.
    """
    mu = float(mu)
    if zeros is None:
        zeros = invariant_zeros(sys, tol)
    if exclusion_violation(mu, zeros, tol):
        raise FrequencyIsZero(f"frequency {mu} is within the exclusion radius of an invariant zero")
    kernel = _pencil_kernel(sys, mu, excluded_output, tol)
    tracker = _SpanTracker(sys.n)
    keep = [k for k in range(kernel.shape[1]) if tracker.try_add(kernel[: sys.n, k : k + 1])]
    V = kernel[: sys.n, keep] if keep else np.zeros((sys.n, 0))
    W = kernel[sys.n :, keep] if keep else np.zeros((sys.m, 0))
    return PairedBasis(V=V, W=W, modes=(mu,) * len(keep))


def _validated_pool(
    sys: LtiSystem,
    stable_pool,
    zeros: list[InvariantZero],
    tol: TolerancePolicy,
    avoid: tuple = (),
) -> tuple[float, ...]:
    if stable_pool is None:
        return default_frequency_pool(sys, zeros, tol, avoid=avoid)
    pool = tuple(float(mu) for mu in stable_pool)
    if len(set(pool)) != len(pool):
        raise ValueError("pool values must be pairwise distinct")
    for mu in pool:
        if not sys.domain.is_stable(mu):
            raise ValueError(f"pool value {mu} is not stable for the {sys.domain.value} domain")
        if exclusion_violation(mu, zeros, tol):
            raise FrequencyIsZero(f"pool value {mu} is within the exclusion radius of an invariant zero")
    return pool


def rstar(
    sys: LtiSystem,
    excluded_output: int | None = None,
    stable_pool=None,
    tol: TolerancePolicy = DEFAULT_POLICY,
    seed: int = DEFAULT_SEED,
    zeros: list[InvariantZero] | None = None,
    max_retries: int = 5,
) -> PairedBasis:
    """Output-nulling reachability subspace via kernel accumulation.

    Phase one accumulates the full kernels over the frequency pool until the
    subspace dimension saturates (a fresh frequency adds nothing). Phase two
    assembles a minimal paired basis by drawing one random mixing vector per
    kernel visit, keeping columns that extend the span, and re-drawing on a
    rank-deficient pass up to ``max_retries`` times.
    """
    if zeros is None:
        zeros = invariant_zeros(sys, tol)
    pool = _validated_pool(sys, stable_pool, zeros, tol)

    tracker = _SpanTracker(sys.n)
    visited: list[tuple[float, np.ndarray]] = []
    saturated = False
    for mu in pool:
        kernel = _pencil_kernel(sys, mu, excluded_output, tol)
        before = tracker.dim
        for k in range(kernel.shape[1]):
            tracker.try_add(kernel[: sys.n, k : k + 1])
        visited.append((mu, kernel))
        if tracker.dim == before:
            saturated = True
            break
    if not saturated and tracker.dim > 0:
        raise SaturationFailure("subspace dimension still growing at pool exhaustion")
    target = tracker.dim
    if target == 0:
        return PairedBasis(V=np.zeros((sys.n, 0)), W=np.zeros((sys.m, 0)), modes=())

    rng = rng_for(seed, "rstar-mixing", 0 if excluded_output is None else excluded_output + 1)
    for _ in range(max_retries + 1):
        span = _SpanTracker(sys.n)
        cols_v, cols_w, modes = [], [], []
        for _cycle in range(max_retries + 1):
            for mu, kernel in visited:
                if len(modes) == target:
                    break
                if kernel.shape[1] == 0:
                    continue
                col = _best_mixed_column(span, kernel, sys.n, rng)
                if col is not None and span.try_add(col[: sys.n].reshape(-1, 1)):
                    cols_v.append(col[: sys.n])
                    cols_w.append(col[sys.n :])
                    modes.append(mu)
            if len(modes) == target:
                break
        if len(modes) != target:
            continue
        V = np.column_stack(cols_v)
        if rank_of(V, tol) == target:
            return PairedBasis(V=V, W=np.column_stack(cols_w), modes=tuple(modes))
    raise RankDeficientAfterRetries(f"could not assemble a rank-{target} paired basis after retries")


def _best_mixed_column(span: _SpanTracker, kernel: np.ndarray, n: int, rng) -> np.ndarray | None:
    """Best of ``kernel-dim`` random in-kernel combinations, by extension quality.

    Drawing several candidates and keeping the best-conditioned one bounds the
    skew of the assembled basis, which the gain solve would otherwise amplify.
    The draw count is fixed by the kernel dimension, so results stay
    deterministic for a given seed.
    """
    best, best_quality = None, 0.0
    for _ in range(kernel.shape[1]):
        cand = kernel @ mixing_coefficients(rng, kernel.shape[1])
        quality = span.extension_quality(cand[:n].reshape(-1, 1))
        if quality > best_quality:
            best, best_quality = cand, quality
    return best


def _conformable_min_phase(zeros: list[InvariantZero]) -> list[InvariantZero]:
    """Minimum-phase zeros with conjugate pairs first (one representative each), reals last."""
    minimum = [z for z in zeros if z.is_minimum_phase]
    pairs = sorted((z for z in minimum if z.value.imag > 0.0), key=lambda z: (z.value.real, z.value.imag))
    reals = sorted((z for z in minimum if z.value.imag == 0.0), key=lambda z: z.value.real)
    return pairs + reals


def _check_distinct_min_phase(sys: LtiSystem, zeros: list[InvariantZero], tol: TolerancePolicy) -> None:
    minimum = [z for z in zeros if z.is_minimum_phase]
    for z in minimum:
        if z.geometric_multiplicity != 1:
            raise AssumptionViolation(f"minimum-phase zero {z.value} has multiplicity {z.geometric_multiplicity}")
    for i, zi in enumerate(minimum):
        for zj in minimum[i + 1 :]:
            if abs(zi.value - zj.value) <= tol.zero_exclusion * (1.0 + abs(zi.value)):
                raise AssumptionViolation(f"coincident minimum-phase zeros near {zi.value}")


def vstar_g(
    sys: LtiSystem,
    free_pool=None,
    tol: TolerancePolicy = DEFAULT_POLICY,
    seed: int = DEFAULT_SEED,
    zeros: list[InvariantZero] | None = None,
    max_retries: int = 5,
    avoid: tuple = (),
) -> PairedBasis:
    """Stabilisability output-nulling subspace with paired input directions.

    The kernels at the minimum-phase invariant zeros are consumed first (they
    carry the inner modes that are fixed anyway, and may cover reachability
    directions as well, in which case those closed-loop modes land on the
    zeros); remaining dimensions are filled with directions generated at
    free-pool frequencies. Complex zeros contribute realified column pairs
    satisfying the rotation-block relation. Mixing coefficients are drawn from
    the seeded stream with conjugate pairing enforced, and the assembly is
    re-drawn up to ``max_retries`` times if a rank-deficient combination
    occurs.
    """
    if zeros is None:
        zeros = invariant_zeros(sys, tol)
    _check_distinct_min_phase(sys, zeros, tol)
    min_phase = _conformable_min_phase(zeros)
    pool = _validated_pool(sys, free_pool, zeros, tol, avoid)

    zero_kernels: list[tuple[InvariantZero, np.ndarray]] = []
    discovery = _SpanTracker(sys.n)
    for z in min_phase:
        # Real zeros keep a real pencil so the kernel carries no complex phase.
        at = z.value if z.value.imag > 0.0 else float(z.value.real)
        kernel = _pencil_kernel(sys, at, None, tol)
        zero_kernels.append((z, kernel))
        for k in range(kernel.shape[1]):
            if z.value.imag > 0.0:
                discovery.try_add(realify_pair(kernel[: sys.n, k], "odd").reshape(-1, 1))
                discovery.try_add(realify_pair(np.conj(kernel[: sys.n, k]), "even").reshape(-1, 1))
            else:
                discovery.try_add(kernel[: sys.n, k : k + 1].real)
    pool_kernels: list[tuple[float, np.ndarray]] = []
    saturated = False
    for mu in pool:
        kernel = _pencil_kernel(sys, mu, None, tol)
        before = discovery.dim
        for k in range(kernel.shape[1]):
            discovery.try_add(kernel[: sys.n, k : k + 1])
        pool_kernels.append((mu, kernel))
        if discovery.dim == before:
            saturated = True
            break
    if not saturated and discovery.dim > 0 and pool_kernels:
        raise SaturationFailure("stabilisability subspace still growing at pool exhaustion")
    target = discovery.dim

    rng = rng_for(seed, "vstar-g-mixing")
    for _ in range(max_retries + 1):
        span = _SpanTracker(sys.n)
        cols_v, cols_w, modes = [], [], []
        for z, kernel in zero_kernels:
            if kernel.shape[1] == 0:
                continue
            is_pair = z.value.imag > 0.0
            for _slot in range(kernel.shape[1]):
                best_blocks, best_quality = None, 0.0
                for _draw in range(kernel.shape[1]):
                    col = kernel @ mixing_coefficients(rng, kernel.shape[1], complex_valued=is_pair)
                    if is_pair:
                        block_v = np.column_stack(
                            [realify_pair(col[: sys.n], "odd"), realify_pair(np.conj(col[: sys.n]), "even")]
                        )
                        block_w = np.column_stack(
                            [realify_pair(col[sys.n :], "odd"), realify_pair(np.conj(col[sys.n :]), "even")]
                        )
                    else:
                        block_v = col.real[: sys.n].reshape(-1, 1)
                        block_w = col.real[sys.n :].reshape(-1, 1)
                    quality = span.extension_quality(block_v)
                    if quality > best_quality:
                        best_blocks, best_quality = (block_v, block_w), quality
                if best_blocks is None or not span.try_add(best_blocks[0]):
                    continue
                block_v, block_w = best_blocks
                for c in range(block_v.shape[1]):
                    cols_v.append(block_v[:, c])
                    cols_w.append(block_w[:, c])
                if is_pair:
                    modes.extend([complex(z.value), complex(z.value.conjugate())])
                else:
                    modes.append(float(z.value.real))
        for _cycle in range(max_retries + 1):
            if len(modes) == target:
                break
            for mu, kernel in pool_kernels:
                if len(modes) == target:
                    break
                if kernel.shape[1] == 0:
                    continue
                col = _best_mixed_column(span, kernel, sys.n, rng)
                if col is not None and span.try_add(col[: sys.n].reshape(-1, 1)):
                    cols_v.append(col[: sys.n])
                    cols_w.append(col[sys.n :])
                    modes.append(mu)
        if len(modes) != target:
            continue
        if target == 0:
            return PairedBasis(V=np.zeros((sys.n, 0)), W=np.zeros((sys.m, 0)), modes=())
        V = np.column_stack(cols_v)
        if rank_of(V, tol) == target:
            return PairedBasis(V=V, W=np.column_stack(cols_w), modes=tuple(modes))
    raise RankDeficientAfterRetries(f"could not assemble a rank-{target} stabilisability basis after retries")


# ---------------------------------------------------------------------------
# Classical fixed-point recursions (independent oracle path)
# ---------------------------------------------------------------------------


def _complement(V: np.ndarray, n: int, tol: TolerancePolicy) -> np.ndarray:
    if V.shape[1] == 0:
        return np.eye(n)
    return nullspace(V.T, tol).columns


def _isa(A, B, C, D, tol: TolerancePolicy) -> np.ndarray:
    """Largest output-nulling subspace by the standard shrinking recursion."""
    n = A.shape[0]
    Vk = np.eye(n)
    for _ in range(n + 1):
        N = _complement(Vk, n, tol)
        M = np.vstack([np.hstack([N.T @ A, N.T @ B]), np.hstack([C, D])])
        kernel = nullspace(M, tol).columns
        Vnew = orthonormalize(kernel[:n, :], tol)
        if Vnew.shape[1] == Vk.shape[1]:
            return Vnew
        Vk = Vnew
    return Vk


def vstar_recursive(sys: LtiSystem, tol: TolerancePolicy = DEFAULT_POLICY) -> Basis:
    """Fixed point of V0 = X, V(k+1) = {x | exists u: Ax+Bu in Vk, Cx+Du = 0}."""
    return Basis(_isa(sys.A, sys.B, sys.C, sys.D, tol))


def _intersect(X: np.ndarray, Y: np.ndarray, n: int, tol: TolerancePolicy) -> np.ndarray:
    NX, NY = _complement(X, n, tol), _complement(Y, n, tol)
    stacked = np.vstack([NX.T, NY.T])
    if stacked.shape[0] == 0:
        return np.eye(n)
    return nullspace(stacked, tol).columns


def rstar_recursive(sys: LtiSystem, tol: TolerancePolicy = DEFAULT_POLICY) -> Basis:
    """Oracle for the output-nulling reachability subspace.

    Intersects the largest output-nulling subspace with the strongly
    reachable subspace, the latter obtained by duality as the orthogonal
    complement of the largest output-nulling subspace of the transposed
    quadruple.
    """
    V = _isa(sys.A, sys.B, sys.C, sys.D, tol)
    V_dual = _isa(sys.A.T, sys.C.T, sys.B.T, sys.D.T, tol)
    S = _complement(V_dual, sys.n, tol)
    return Basis(_intersect(V, S, sys.n, tol))


def spans_match(first, second, tol: TolerancePolicy = DEFAULT_POLICY, residual: float = 1e-8) -> bool:
    """Convenience wrapper: two-sided containment of basis spans."""
    first_m = first.V if isinstance(first, PairedBasis) else first
    second_m = second.V if isinstance(second, PairedBasis) else second
    return (
        containment_residual(first_m, second_m, tol) <= residual
        and containment_residual(second_m, first_m, tol) <= residual
    )
