"""Membership in conv(A u B), the convex hull of the 2d basis projectors.

The projectors satisfy one linear relation, ``sum_i P^A_i = sum_j P^B_j = Id``,
so for U without zero entries their real span has dimension 2d - 1 and the
decomposition ``rho = sum_i lam_i P^A_i + sum_j mu_j P^B_j`` is unique up to the
gauge ``lam -> lam + t``, ``mu -> mu - t``. Feasibility of nonnegative
weights is then a one-dimensional interval test.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core_types import (
    DimensionMismatch,
    KDError,
    as_complex_matrix,
    hermitian_coordinates,
    validate_density,
    DensityMatrix,
)

__all__ = [
    "BadWeights",
    "MembershipReport",
    "projectors",
    "project_to_span",
    "membership",
    "mix",
    "gauge_interval",
    "state_outside_polytope",
]

SPAN_TOL = 1e-8
COEFF_TOL = 1e-9


class BadWeights(KDError):
    pass


@dataclass(frozen=True, eq=False)
class MembershipReport:
    in_span: bool
    span_residual: float
    in_polytope: bool
    lam: np.ndarray
    mu: np.ndarray
    gauge_t: float
    tol: float

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.lam, self.mu])

    def to_dict(self) -> dict:
        return {
            "in_span": self.in_span,
            "span_residual": self.span_residual,
            "in_polytope": self.in_polytope,
            "lambda": [float(x) for x in self.lam],
            "mu": [float(x) for x in self.mu],
            "gauge_t": self.gauge_t,
            "tol": self.tol,
        }


def projectors(U) -> np.ndarray:
    """Stack ``[P^A_1..P^A_d, P^B_1..P^B_d]``; ``P^B_j`` projects on column j of U."""
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    pa = np.zeros((d, d, d), complex)
    pa[np.arange(d), np.arange(d), np.arange(d)] = 1.0
    pb = np.einsum("ij,kj->jik", U, U.conj())
    return np.concatenate([pa, pb])


def _check(rho, U) -> tuple[np.ndarray, np.ndarray]:
    rho = as_complex_matrix(rho)
    U = np.asarray(U, dtype=complex)
    if rho.shape != U.shape:
        raise DimensionMismatch(f"state shape {rho.shape} does not match unitary shape {U.shape}")
    return rho, U


def _design(U) -> np.ndarray:
    return hermitian_coordinates(projectors(U)).T


def project_to_span(rho, U) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares weights of rho on the 2d projectors, and the HS misfit."""
    rho, U = _check(rho, U)
    A = _design(U)
    b = hermitian_coordinates(rho)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    residual = float(np.linalg.norm(A @ coef - b))
    return coef, residual


def gauge_interval(lam, mu) -> tuple[float, float]:
    """Interval of t keeping ``lam + t >= 0`` and ``mu - t >= 0``; empty when lo > hi."""
    return -float(np.min(lam)), float(np.min(mu))


def membership(rho, U, tol: float = COEFF_TOL, span_tol: float = SPAN_TOL) -> MembershipReport:
    """Decide ``rho in conv(A u B)`` and return nonnegative weights when it is."""
    rho, U = _check(rho, U)
    d = U.shape[0]
    coef, residual = project_to_span(rho, U)
    lam, mu = coef[:d], coef[d:]
    if residual > span_tol:
        return MembershipReport(False, residual, False, lam, mu, 0.0, tol)

    A = _design(U)
    if np.linalg.matrix_rank(A) < 2 * d - 1:
        # U has zero entries: more relations than the single gauge, fall back to an LP
        return _membership_lp(rho, U, residual, tol)

    lo, hi = gauge_interval(lam, mu)
    feasible = lo <= hi + 2 * tol
    t = max(0.0, lo)
    t = min(max(t, lo), hi) if feasible else t
    lam_t, mu_t = lam + t, mu - t
    return MembershipReport(True, residual, bool(feasible), lam_t, mu_t, float(t), tol)


def _membership_lp(rho, U, residual, tol) -> MembershipReport:
    d = U.shape[0]
    A = _design(U)
    b = hermitian_coordinates(rho)
    res = linprog(
        np.zeros(2 * d), A_eq=A, b_eq=b, bounds=[(0, None)] * (2 * d), method="highs"
    )
    if res.status == 0:
        x = res.x
        return MembershipReport(True, residual, True, x[:d], x[d:], 0.0, tol)
    coef, _ = project_to_span(rho, U)
    return MembershipReport(True, residual, False, coef[:d], coef[d:], 0.0, tol)


def mix(weights, U) -> DensityMatrix:
    """``sum_i lam_i P^A_i + sum_j mu_j P^B_j`` for nonnegative weights summing to 1."""
    U = np.asarray(U, dtype=complex)
    w = np.asarray(weights, dtype=float)
    d = U.shape[0]
    if w.shape != (2 * d,):
        raise BadWeights(f"expected {2 * d} weights, got shape {w.shape}")
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise BadWeights("weights must be nonnegative and sum to 1")
    rho = np.tensordot(w, projectors(U), axes=1)
    return validate_density((rho + rho.conj().T) / 2)


def state_outside_polytope(U, rng: np.random.Generator, attempts: int = 500, margin: float = 0.05):
    """Find a density matrix in span(A u B) that is not in conv(A u B).

    Searches random traceless directions X in the span from the maximally mixed
    state: the ray ``Id/d + s X`` leaves the polytope at a closed-form s and
    leaves the PSD cone at an eigenvalue root; any direction where the polytope
    exit comes first yields a witness strictly between the two. Returns
    ``(rho, lam, mu)`` with the particular weights used, or None.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    P = projectors(U)
    base = np.full(2 * d, 1 / (2 * d))
    for _ in range(attempts):
        c = rng.standard_normal(2 * d)
        c -= c.mean()  # traceless, since every projector has trace 1
        X = np.tensordot(c, P, axes=1)
        if np.linalg.norm(X) < 1e-8:
            continue
        # polytope exit: smallest s where the gauge interval of base + s c closes
        s_poly = _first_exit(lambda s: _gauge_gap(base + s * c, d), 0.0, 10.0)
        s_psd = _first_exit(lambda s: np.linalg.eigvalsh(np.eye(d) / d + s * X)[0], 0.0, 10.0)
        if s_poly is None or s_psd is None or s_psd < (1 + 4 * margin) * s_poly:
            continue
        s = (1 + 2 * margin) * s_poly
        weights = base + s * c
        rho = np.tensordot(weights, P, axes=1)
        rho = (rho + rho.conj().T) / 2
        return validate_density(rho), weights[:d], weights[d:]
    return None


def _gauge_gap(w, d) -> float:
    lo, hi = gauge_interval(w[:d], w[d:])
    return hi - lo


def _first_exit(f, a, b, iters: int = 100):
    """Bisection for the sign change of a function positive at a."""
    if f(b) > 0:
        return None
    for _ in range(iters):
        m = (a + b) / 2
        if f(m) > 0:
            a = m
        else:
            b = m
    return b
