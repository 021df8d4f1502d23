"""The map C^U on real weak-value matrices and the minimality decision built on it.

For a transition matrix U, ``C^U : M_d(R) -> Herm(d)`` sends a real matrix w to

    C^U(w)_jk = i * sum_l (w_jl - w_kl) * conj(U_kl) * U_jl.

Its kernel always contains T = span{A_k, B_l} (rows / columns of ones, dimension
2d - 1). When U has no zero entries, the KD-positive states are exactly the
convex hull of the 2d basis projectors iff the kernel is no bigger than T.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np

from .core_types import (
    DimensionMismatch,
    KDError,
    UnitaryMatrix,
    hermitian_coordinates,
    min_abs_entry,
    validate_unitary,
)
from .rank import RankPolicy, gap_ratio, numerical_rank, rank_threshold

__all__ = [
    "BadDimension",
    "CacheDimensionMismatch",
    "SubspaceBasis",
    "RealLinearMap",
    "MinimalityReport",
    "GoodnessValue",
    "WitnessCache",
    "Verdict",
    "t_basis",
    "n_basis",
    "c_map_apply",
    "c_map_matrix",
    "kernel_dimension",
    "kernel_basis",
    "restricted_margin",
    "is_minimal",
    "witness_unitary",
    "witness_z",
    "witness_cache",
    "goodness_polynomial",
]

Verdict = Literal["minimal", "non_minimal", "indeterminate", "not_applicable"]


class BadDimension(KDError):
    pass


class CacheDimensionMismatch(KDError):
    pass


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """An ordered list of matrices spanning a subspace of M_d(R) or Herm(d).

    ``elements`` need not be independent (the row/column generators of T are
    not); ``rank`` tells the dimension of their span.
    """

    ambient: Literal["real", "hermitian"]
    elements: np.ndarray  # (n, d, d)
    orthonormal: bool = False
    orthonormalized: "SubspaceBasis | None" = field(default=None, repr=False)

    def __post_init__(self):
        if self.orthonormal and len(self.elements):
            gram = self.gram()
            if np.max(np.abs(gram - np.eye(len(gram)))) > 1e-12:
                raise ValueError("elements flagged orthonormal but Gram matrix is not the identity")

    def __len__(self):
        return len(self.elements)

    def vectors(self) -> np.ndarray:
        """Elements flattened row-major into the columns of a d^2 x n matrix."""
        n = len(self.elements)
        return self.elements.reshape(n, -1).T

    def gram(self) -> np.ndarray:
        v = self.vectors()
        return v.conj().T @ v

    @property
    def rank(self) -> int:
        v = self.vectors()
        if v.size == 0:
            return 0
        s = np.linalg.svd(v, compute_uv=False)
        return int(np.count_nonzero(s > 1e-10 * s[0]))


@dataclass(frozen=True, eq=False)
class RealLinearMap:
    matrix: np.ndarray
    domain_basis: str
    codomain_basis: str
    singular_values: np.ndarray | None = None

    @property
    def domain_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def codomain_dim(self) -> int:
        return self.matrix.shape[0]

    def with_spectrum(self) -> "RealLinearMap":
        if self.singular_values is not None:
            return self
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return RealLinearMap(self.matrix, self.domain_basis, self.codomain_basis, s)


@dataclass(frozen=True)
class GoodnessValue:
    value: float
    log_abs: float
    sign: int


@dataclass(frozen=True, eq=False)
class MinimalityReport:
    d: int
    in_omega: bool
    m_min: float
    kernel_dim: int
    sv_spectrum: np.ndarray
    gap_ratio: float
    margin: float
    verdict: Verdict
    tolerances: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sv_spectrum"] = [float(x) for x in self.sv_spectrum]
        return out


# -- the subspaces T and N -----------------------------------------------------


def t_basis(d: int) -> SubspaceBasis:
    """Generators ``A_1..A_d`` (row k of ones) then ``B_1..B_d`` (column k of ones)."""
    if d < 1:
        raise BadDimension("d must be >= 1")
    A = np.zeros((d, d, d))
    for k in range(d):
        A[k, k, :] = 1.0
    B = A.transpose(0, 2, 1)
    return SubspaceBasis("real", np.concatenate([A, B]))


@lru_cache(maxsize=None)
def n_basis(d: int) -> SubspaceBasis:
    """Basis ``(e_i - e_d)(e_j - e_d)^T`` (i, j < d) of the matrices with zero row and column sums.

    The attached ``orthonormalized`` basis is Gram-Schmidt in the same order.
    """
    if d < 2:
        raise BadDimension("the zero-row/column-sum subspace is {0} for d < 2")
    elems = []
    for i in range(d - 1):
        for j in range(d - 1):
            u = np.zeros(d)
            v = np.zeros(d)
            u[i], u[d - 1] = 1.0, -1.0
            v[j], v[d - 1] = 1.0, -1.0
            elems.append(np.outer(u, v))
    elems = np.array(elems)
    q, r = np.linalg.qr(elems.reshape(len(elems), -1).T)
    # positive diagonal of R makes the QR factor coincide with Gram-Schmidt
    q = q * np.sign(np.diag(r))
    ortho = SubspaceBasis("real", q.T.reshape(-1, d, d), orthonormal=True)
    for arr in (elems, ortho.elements):
        arr.setflags(write=False)
    return SubspaceBasis("real", elems, orthonormalized=ortho)


# -- C^U -------------------------------------------------------------------------


def c_map_apply(w, U) -> np.ndarray:
    """Apply ``C^U`` to one real matrix (or a stack of them), returning Hermitian matrices."""
    U = np.asarray(U, dtype=complex)
    w = np.asarray(w)
    # M_jk = sum_l w_jl U_jl conj(U_kl);  C = i (M - M^dag)
    M = (w * U) @ U.conj().T
    return 1j * (M - np.swapaxes(M, -1, -2).conj())


def c_map_matrix(U) -> RealLinearMap:
    """d^2 x d^2 real matrix of ``C^U``.

    Domain coordinates are the entries of w (row-major); codomain
    coordinates are those of :func:`~kdminimal.core_types.hermitian_basis`.
    """
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {U.shape}")
    d = U.shape[0]
    units = np.eye(d * d).reshape(d * d, d, d)
    images = c_map_apply(units, U)
    return RealLinearMap(hermitian_coordinates(images).T, "real_standard", "hermitian")


def kernel_dimension(U, policy: RankPolicy | None = None) -> tuple[int, np.ndarray, float]:
    """Numerical ``dim Ker C^U``, the singular spectrum, and the gap ratio at the cut."""
    policy = policy or RankPolicy()
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    s = np.linalg.svd(c_map_matrix(U).matrix, compute_uv=False)
    rank = numerical_rank(s, d, policy)
    return d * d - rank, s, gap_ratio(s, rank)


def kernel_basis(U, policy: RankPolicy | None = None) -> np.ndarray:
    """Orthonormal basis of the numerical kernel of ``C^U`` as columns in R^{d^2}."""
    policy = policy or RankPolicy()
    U = np.asarray(U, dtype=complex)
    C = c_map_matrix(U).matrix
    _, s, vt = np.linalg.svd(C)
    rank = numerical_rank(s, U.shape[0], policy)
    return vt[rank:].T


def _restricted(U) -> tuple[np.ndarray, np.ndarray]:
    U = np.asarray(U, dtype=complex)
    C = c_map_matrix(U).matrix
    N = n_basis(U.shape[0]).orthonormalized.vectors()
    return C, C @ N


def restricted_margin(U) -> float:
    """Smallest singular value of ``C^U`` restricted to the orthonormalized N basis.

    Positive exactly when ``Ker C^U`` is no larger than T.
    """
    U = np.asarray(U, dtype=complex)
    if U.shape[0] < 2:
        raise BadDimension("restricted margin needs d >= 2")
    _, CN = _restricted(U)
    return float(np.linalg.svd(CN, compute_uv=False)[-1])


def is_minimal(U, policy: RankPolicy | None = None) -> MinimalityReport:
    """Decide whether the KD-positive states for U are exactly conv(A u B).

    Returns ``not_applicable`` when U has a (numerically) zero entry, since the
    kernel criterion says nothing there, and ``indeterminate`` when the
    singular-value gap at the rank cut is below ``policy.gap_min``.
    """
    policy = policy or RankPolicy()
    U = validate_unitary(U)
    d = U.d
    m, in_omega = min_abs_entry(U, policy.tol_omega)
    kdim, s, gap = kernel_dimension(U, policy)
    margin = restricted_margin(U) if d >= 2 else math.inf
    t_dim = 2 * d - 1
    if not in_omega:
        verdict = "not_applicable"
    elif gap < policy.gap_min or kdim < t_dim:
        verdict = "indeterminate"
    elif kdim == t_dim:
        verdict = "minimal"
    else:
        verdict = "non_minimal"
    return MinimalityReport(d, in_omega, m, kdim, s, gap, margin, verdict, policy.as_dict())


# -- witness and the goodness polynomial -----------------------------------------


def witness_z(d: int) -> complex:
    return (np.exp(1j) - 1) / d


def witness_unitary(d: int) -> UnitaryMatrix:
    """``exp(i J_d / d) = Id + z J_d`` with ``z = (e^i - 1)/d`` and J_d the all-ones matrix."""
    if d < 1:
        raise BadDimension("d must be >= 1")
    return validate_unitary(np.eye(d) + witness_z(d) * np.ones((d, d)), tol=1e-12)


@dataclass(frozen=True, eq=False)
class WitnessCache:
    """Orthonormal basis of the range of ``C^{U*}`` for the witness U* (columns, Hermitian coords)."""

    d: int
    range_basis: np.ndarray
    policy: RankPolicy


@lru_cache(maxsize=None)
def _witness_cache(d: int, policy: RankPolicy) -> WitnessCache:
    C = c_map_matrix(witness_unitary(d)).matrix
    u, s, _ = np.linalg.svd(C)
    r = numerical_rank(s, d, policy)
    if r != (d - 1) ** 2:
        raise RuntimeError(f"witness range has dimension {r}, expected {(d - 1) ** 2}")
    basis = u[:, :r]
    # fix SVD sign freedom: largest-magnitude component of each vector is positive
    pivots = np.argmax(np.abs(basis), axis=0)
    basis = basis * np.sign(basis[pivots, np.arange(r)])
    basis.setflags(write=False)
    return WitnessCache(d, basis, policy)


def witness_cache(d: int, policy: RankPolicy | None = None) -> WitnessCache:
    if d < 2:
        raise BadDimension("goodness polynomial needs d >= 2")
    return _witness_cache(d, policy or RankPolicy())


def goodness_polynomial(U, cache: WitnessCache | None = None) -> GoodnessValue:
    """``det(P* C^U |_N)`` in fixed orthonormal bases of N and of ``Ran C^{U*}``.

    A nonzero value certifies ``Ker C^U = T``. The sign is reported as 0 when
    the compressed matrix is numerically singular under the rank policy.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    cache = cache or witness_cache(d)
    if cache.d != d:
        raise CacheDimensionMismatch(f"cache built for d={cache.d}, unitary has d={d}")
    C, CN = _restricted(U)
    compressed = cache.range_basis.T @ CN
    sign, log_abs = np.linalg.slogdet(compressed)
    s_full = np.linalg.svd(C, compute_uv=False)
    s_comp = np.linalg.svd(compressed, compute_uv=False)
    tau = rank_threshold(s_full, d, cache.policy)
    if sign == 0 or s_comp[-1] <= tau:
        return GoodnessValue(0.0, float(log_abs), 0)
    return GoodnessValue(float(sign * np.exp(log_abs)), float(log_abs), int(sign))
