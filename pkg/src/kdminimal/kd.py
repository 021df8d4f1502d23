"""Kirkwood-Dirac distributions, weak values and the space of KD-real Hermitian operators."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core_types import (
    TOL_OMEGA,
    DensityMatrix,
    DimensionMismatch,
    KDError,
    as_complex_matrix,
    hermitian_basis,
    min_abs_entry,
)
from .rank import RankPolicy, numerical_rank

__all__ = [
    "NotInOmega",
    "KDDistribution",
    "MarginalReport",
    "PositivityReport",
    "WeakValueMatrix",
    "kd_symbol",
    "kd_marginals",
    "is_kd_positive",
    "weak_values",
    "operator_from_weak_values",
    "self_adjoint_residual",
    "imag_kd_map",
    "kd_real_dimension_direct",
]


class NotInOmega(KDError):
    def __init__(self, m_min: float, tol: float):
        super().__init__(
            f"transition matrix has a (near-)zero entry: min|U_ij| = {m_min:.3e} <= {tol:.1e}"
        )
        self.m_min = m_min


@dataclass(frozen=True, eq=False)
class KDDistribution:
    entries: np.ndarray
    source_kind: Literal["state", "operator"] = "operator"

    @property
    def d(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class MarginalReport:
    row_residual: float
    column_residual: float
    total_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.row_residual, self.column_residual, self.total_residual)


@dataclass(frozen=True)
class PositivityReport:
    is_kd_positive: bool
    max_imag: float
    min_real: float
    tol: float


@dataclass(frozen=True, eq=False)
class WeakValueMatrix:
    entries: np.ndarray

    @property
    def d(self) -> int:
        return self.entries.shape[0]


def _pair(F, U) -> tuple[np.ndarray, np.ndarray]:
    F = as_complex_matrix(F)
    U = np.asarray(U, dtype=complex)
    if F.shape != U.shape or F.shape[0] != F.shape[1]:
        raise DimensionMismatch(f"operator shape {F.shape} does not match unitary shape {U.shape}")
    return F, U


def _require_omega(U: np.ndarray, tol_omega: float) -> None:
    m, ok = min_abs_entry(U, tol_omega)
    if not ok:
        raise NotInOmega(m, tol_omega)


def kd_symbol(F, U) -> KDDistribution:
    """KD symbol ``Q_ij(F) = <b_j|a_i><a_i|F|b_j> = conj(U_ij) (F U)_ij``."""
    kind = "state" if isinstance(F, DensityMatrix) else "operator"
    F, U = _pair(F, U)
    return KDDistribution(U.conj() * (F @ U), kind)


def kd_marginals(Q: KDDistribution, rho, U) -> MarginalReport:
    """Residuals of the three Born-rule marginals of ``Q`` against ``rho``."""
    rho, U = _pair(rho, U)
    q = np.asarray(Q.entries)
    if q.shape != rho.shape:
        raise DimensionMismatch(f"distribution shape {q.shape} does not match state {rho.shape}")
    b_diag = np.einsum("ij,ik,kj->j", U.conj(), rho, U)
    return MarginalReport(
        row_residual=float(np.max(np.abs(q.sum(axis=1) - np.diag(rho)))),
        column_residual=float(np.max(np.abs(q.sum(axis=0) - b_diag))),
        total_residual=float(abs(q.sum() - 1)),
    )


def is_kd_positive(rho, U, tol: float = 1e-10) -> PositivityReport:
    """Entrywise ``Q(rho) >= 0`` up to ``tol`` on both the imaginary parts and negativity."""
    q = kd_symbol(rho, U).entries
    max_imag = float(np.max(np.abs(q.imag)))
    min_real = float(np.min(q.real))
    return PositivityReport(max_imag <= tol and min_real >= -tol, max_imag, min_real, tol)


def weak_values(F, U, tol_omega: float = TOL_OMEGA) -> WeakValueMatrix:
    """``W_ij(F) = <a_i|F|b_j> / <a_i|b_j>``; requires U without zero entries."""
    F, U = _pair(F, U)
    _require_omega(U, tol_omega)
    return WeakValueMatrix((F @ U) / U)


def operator_from_weak_values(w, U, tol_omega: float = TOL_OMEGA) -> np.ndarray:
    """The unique F with ``<a_i|F|b_j> = w_ij <a_i|b_j>``, i.e. ``F = (w * U) U^dag``."""
    w = w.entries if isinstance(w, WeakValueMatrix) else w
    w, U = _pair(w, U)
    _require_omega(U, tol_omega)
    return (w * U) @ U.conj().T


def self_adjoint_residual(w, U) -> float:
    """``max_ij |sum_l (w_il - w_jl) conj(U_jl) U_il|``.

    For real ``w`` this vanishes exactly when the operator reconstructed from
    the weak values is self-adjoint.
    """
    w, U = _pair(w, U)
    # S_ij = sum_l w_il U_il conj(U_jl) - sum_l w_jl U_il conj(U_jl)
    M = (w * U) @ U.conj().T
    N = U @ (w * U.conj()).T
    return float(np.max(np.abs(M - N)))


def imag_kd_map(U) -> np.ndarray:
    """Real d^2 x d^2 matrix of ``H -> Im Q(H)`` from Hermitian coordinates to R^{d^2}.

    Column k is ``Im Q(E_k)`` flattened row-major, with ``E_k`` the k-th
    element of :func:`hermitian_basis`.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    E = hermitian_basis(d).elements
    Q = U.conj()[None] * (E @ U)
    return Q.imag.reshape(d * d, d * d).T


def kd_real_dimension_direct(U, policy: RankPolicy | None = None) -> tuple[int, np.ndarray]:
    """``dim V_KDr = d^2 - rank(Im Q on Herm(d))`` together with the singular spectrum.

    Does not go through weak values, so it is defined for every unitary.
    """
    policy = policy or RankPolicy()
    U = np.asarray(U, dtype=complex)
    L = imag_kd_map(U)
    s = np.linalg.svd(L, compute_uv=False)
    rank = numerical_rank(s, U.shape[0], policy)
    return L.shape[1] - rank, s
