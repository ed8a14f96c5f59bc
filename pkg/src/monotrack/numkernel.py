"""Tolerance-governed dense linear-algebra primitives.

All structural decisions made by the library (rank tests, kernel extraction,
dimension counts) route through this module so that a single tolerance policy
governs every one of them. Complex arithmetic stays confined here and in
:mod:`monotrack.sysmodel`; every basis exported to callers is real.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, Unsolvable

_EPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class TolerancePolicy:
    """Shared numerical tolerances.

    Parameters
    ----------
    relative_rank_tol : float or None
        Explicit relative threshold for rank decisions. When None, the
        threshold for a matrix with largest singular value ``smax`` is
        ``max(shape) * eps * smax * rank_safety``.
    absolute_floor : float
        Magnitudes below this are treated as exact zero.
    residual_tol : float
        Relative residual accepted for linear solves and basis invariants.
    zero_exclusion : float
        Relative radius around invariant zeros inside which a requested
        frequency is rejected.
    rank_safety : float
        Safety factor applied to the machine-epsilon rank threshold.
    """

    relative_rank_tol: float | None = None
    absolute_floor: float = 1e-12
    residual_tol: float = 1e-9
    zero_exclusion: float = 1e-6
    rank_safety: float = 10.0

    def __post_init__(self):
        for name in ("absolute_floor", "residual_tol", "zero_exclusion", "rank_safety"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.relative_rank_tol is not None and self.relative_rank_tol <= 0.0:
            raise ValueError("relative_rank_tol must be strictly positive")

    def rank_threshold(self, shape: tuple[int, int], smax: float) -> float:
        if self.relative_rank_tol is not None:
            return self.relative_rank_tol * smax
        return max(shape) * _EPS * smax * self.rank_safety


DEFAULT_POLICY = TolerancePolicy()


@dataclass(frozen=True)
class Basis:
    """A subspace represented by a full-column-rank matrix.

    ``tags`` records per-column provenance: the generating frequency for
    columns extracted from a pencil kernel, or ``"free"`` for columns with no
    attached frequency.
    """

    columns: np.ndarray
    tags: tuple = field(default=())

    def __post_init__(self):
        cols = np.atleast_2d(np.asarray(self.columns))
        object.__setattr__(self, "columns", cols)
        if not self.tags:
            object.__setattr__(self, "tags", ("free",) * cols.shape[1])
        if len(self.tags) != cols.shape[1]:
            raise ValueError("one tag per column required")
        if cols.shape[1] > cols.shape[0]:
            raise ValueError("more columns than ambient dimension")

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    @property
    def ambient(self) -> int:
        return self.columns.shape[0]


def _as_matrix(obj) -> np.ndarray:
    """Accept a Basis, a PairedBasis-like object (``.V``) or a raw array."""
    if hasattr(obj, "columns"):
        return np.atleast_2d(obj.columns)
    if hasattr(obj, "V"):
        return np.atleast_2d(obj.V)
    return np.atleast_2d(np.asarray(obj))


def rank_of(M, tol: TolerancePolicy = DEFAULT_POLICY) -> int:
    """Number of singular values of ``M`` above the policy threshold."""
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol.rank_threshold(M.shape, float(s[0]))))


def nullspace(M, tol: TolerancePolicy = DEFAULT_POLICY) -> Basis:
    """Orthonormal basis of the kernel of ``M``.

    The returned column count is ``cols(M) - rank_of(M)``; an empty basis is
    a legal result for injective maps.
    """
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        raise ValueError("nullspace of an empty matrix is undefined")
    _, s, vh = np.linalg.svd(M)
    rank = int(np.sum(s > tol.rank_threshold(M.shape, float(s[0])))) if s.size else 0
    return Basis(vh[rank:].conj().T)


def min_norm_solve(M, b, tol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Moore-Penrose minimum-norm solution of ``M x = b``.

    Raises
    ------
    Unsolvable
        If the residual exceeds ``residual_tol * (|M| |x| + |b|)``, i.e. the
        right-hand side is not in the range of ``M`` at tolerance.
    """
    M = np.atleast_2d(np.asarray(M))
    b = np.asarray(b).reshape(-1)
    if b.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"rhs length {b.shape[0]} != rows {M.shape[0]}")
    u, s, vh = np.linalg.svd(M, full_matrices=False)
    thr = tol.rank_threshold(M.shape, float(s[0])) if s.size else 0.0
    keep = s > thr
    coeff = (u.conj().T @ b)[keep] / s[keep]
    x = vh.conj().T[:, keep] @ coeff
    if not (np.iscomplexobj(M) or np.iscomplexobj(b)):
        x = x.real
    smax = float(s[0]) if s.size else 0.0
    residual = float(np.linalg.norm(M @ x - b))
    bound = tol.residual_tol * (smax * float(np.linalg.norm(x)) + float(np.linalg.norm(b)))
    if residual > max(bound, tol.absolute_floor):
        raise Unsolvable(f"residual {residual:.3e} exceeds tolerance {bound:.3e}")
    return x


def subspace_sum_dim(bases, tol: TolerancePolicy = DEFAULT_POLICY) -> int:
    """Dimension of the sum of the given subspaces (rank of the concatenation)."""
    mats = [_as_matrix(b) for b in bases]
    mats = [m for m in mats if m.shape[1] > 0]
    if not mats:
        return 0
    rows = {m.shape[0] for m in mats}
    if len(rows) != 1:
        raise DimensionMismatch(f"bases live in different ambient spaces: {sorted(rows)}")
    return rank_of(np.hstack(mats), tol)


def realify_pair(v, position: str) -> np.ndarray:
    """Real or imaginary part of a (possibly complex) vector.

    ``position`` follows the conjugate-pair convention: the odd slot of a
    realified pair carries the real part, the even slot the imaginary part of
    the conjugated partner column.
    """
    v = np.asarray(v)
    if position == "odd":
        return np.real(v).astype(float)
    if position == "even":
        return np.imag(v).astype(float)
    raise ValueError("position must be 'odd' or 'even'")


def orthonormalize(M, tol: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Orthonormal basis of the column span of ``M`` (may shrink the column count)."""
    M = _as_matrix(M)
    if M.shape[1] == 0:
        return M.astype(float)
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > tol.rank_threshold(M.shape, float(s[0]))))
    return u[:, :rank]


def containment_residual(inner, outer, tol: TolerancePolicy = DEFAULT_POLICY) -> float:
    """Worst-case relative distance of unit vectors of span(inner) from span(outer).

    Zero (up to roundoff) iff span(inner) is contained in span(outer).
    """
    X = _as_matrix(inner)
    if X.shape[1] == 0:
        return 0.0
    Q = orthonormalize(outer, tol)
    worst = 0.0
    for k in range(X.shape[1]):
        c = X[:, k]
        nrm = float(np.linalg.norm(c))
        if nrm <= tol.absolute_floor:
            continue
        c = c / nrm
        res = c - Q @ (Q.conj().T @ c) if Q.shape[1] else c
        worst = max(worst, float(np.linalg.norm(res)))
    return worst


def span_equal(first, second, tol: TolerancePolicy = DEFAULT_POLICY, residual: float = 1e-8) -> bool:
    """Two-sided containment test at the given residual."""
    return (
        containment_residual(first, second, tol) <= residual
        and containment_residual(second, first, tol) <= residual
    )
