"""Matrix types, validation, seeded randomness and canonical Hermitian coordinates.

The A-basis is always the standard basis of C^d, so a pair of orthonormal
bases is fully described by the transition matrix ``U[i, j] = <a_i|b_j>``
and ``|b_j>`` is the j-th column of ``U``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "KDError",
    "NotSquare",
    "NotUnitary",
    "NotOrthonormal",
    "NotDensityMatrix",
    "BadRank",
    "DimensionMismatch",
    "MatrixFileError",
    "Seed",
    "UnitaryMatrix",
    "DensityMatrix",
    "HermitianBasis",
    "TOL_UNITARY",
    "TOL_OMEGA",
    "as_complex_matrix",
    "validate_unitary",
    "validate_density",
    "transition_matrix",
    "haar_sample",
    "min_abs_entry",
    "dft_unitary",
    "random_density_matrix",
    "random_hermitian",
    "hermitian_basis",
    "hermitian_coordinates",
    "hermitian_from_coordinates",
    "read_matrix",
    "write_matrix",
    "matrix_to_json",
    "matrix_from_json",
    "MATRIX_FILE_SCHEMA",
]

TOL_UNITARY = 1e-10
TOL_OMEGA = 1e-8

TOL_HERMITIAN = 1e-12
TOL_EIGEN = 1e-10
TOL_TRACE = 1e-10


class KDError(ValueError):
    """Base class for input errors raised by this package."""


class NotSquare(KDError):
    pass


class NotUnitary(KDError):
    def __init__(self, residual: float, tol: float):
        super().__init__(f"matrix is not unitary: max|U^dag U - I| = {residual:.3e} > tol {tol:.1e}")
        self.residual = residual
        self.tol = tol


class NotOrthonormal(KDError):
    def __init__(self, pair: tuple[int, int], residual: float):
        super().__init__(
            f"basis vectors {pair[0]} and {pair[1]} violate orthonormality by {residual:.3e}"
        )
        self.pair = pair
        self.residual = residual


class NotDensityMatrix(KDError):
    pass


class BadRank(KDError):
    pass


class DimensionMismatch(KDError):
    pass


class MatrixFileError(KDError):
    pass


@dataclass(frozen=True)
class Seed:
    """Counter-style seed: ``(seed, stream_index)`` names one independent stream.

    Streams are drawn from PCG64 fed by ``numpy.random.SeedSequence(seed,
    spawn_key=(stream_index, *sub))``. The same pair always gives the same
    bits, independent of how many other streams were used before.
    """

    seed: int = 0
    stream_index: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_index"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self, *sub: int) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_index), *sub))
        return np.random.Generator(np.random.PCG64(seq))


def _rng(seed: Seed | int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, Seed):
        return seed.generator()
    return Seed(0 if seed is None else int(seed)).generator()


def as_complex_matrix(M) -> np.ndarray:
    """Coerce to a finite 2-D complex array."""
    arr = np.array(M, dtype=complex)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise KDError("matrix has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    entries: np.ndarray
    unitarity_residual: float

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class HermitianBasis:
    """Orthonormal basis of Herm(d) under ``<A, B> = Tr(A^dag B)``.

    Order: diagonal units ``E_ii``, then ``(E_ij + E_ji)/sqrt2`` for i < j,
    then ``i(E_ij - E_ji)/sqrt2`` for i < j, pairs in lexicographic order.
    """

    d: int
    elements: np.ndarray = field(repr=False)  # shape (d*d, d, d)

    def __len__(self):
        return len(self.elements)

    def gram(self) -> np.ndarray:
        return np.einsum("kab,lab->kl", self.elements.conj(), self.elements)


def _max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def validate_unitary(M, tol: float = TOL_UNITARY) -> UnitaryMatrix:
    """Check ``max|M^dag M - I| <= tol`` and wrap ``M`` as a :class:`UnitaryMatrix`."""
    if isinstance(M, UnitaryMatrix):
        if M.unitarity_residual <= tol:
            return M
        raise NotUnitary(M.unitarity_residual, tol)
    arr = as_complex_matrix(M)
    if arr.shape[0] != arr.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {arr.shape}")
    residual = _max_abs(arr.conj().T @ arr - np.eye(arr.shape[0]))
    if residual > tol:
        raise NotUnitary(residual, tol)
    return UnitaryMatrix(arr, residual)


def validate_density(M) -> DensityMatrix:
    """Check Hermiticity, positivity and unit trace, and wrap as :class:`DensityMatrix`."""
    if isinstance(M, DensityMatrix):
        return M
    arr = as_complex_matrix(M)
    if arr.shape[0] != arr.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {arr.shape}")
    herm = _max_abs(arr - arr.conj().T)
    if herm > TOL_HERMITIAN:
        raise NotDensityMatrix(f"not hermitian: max|rho - rho^dag| = {herm:.3e}")
    lam_min = float(np.linalg.eigvalsh(arr).min())
    if lam_min < -TOL_EIGEN:
        raise NotDensityMatrix(f"not positive semidefinite: smallest eigenvalue {lam_min:.3e}")
    tr = np.trace(arr)
    if abs(tr - 1) > TOL_TRACE:
        raise NotDensityMatrix(f"trace {tr.real:.12g} is not 1")
    return DensityMatrix(arr)


def transition_matrix(basis_a: Sequence, basis_b: Sequence) -> UnitaryMatrix:
    """Return ``U[i, j] = <a_i|b_j>`` for two orthonormal bases given as vector lists."""
    A = np.array([np.asarray(v, dtype=complex).ravel() for v in basis_a])
    B = np.array([np.asarray(v, dtype=complex).ravel() for v in basis_b])
    if A.ndim != 2 or A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"need two lists of d vectors in C^d, got {A.shape} and {B.shape}")
    for vecs in (A, B):
        gram = vecs.conj() @ vecs.T
        err = np.abs(gram - np.eye(len(vecs)))
        i, j = np.unravel_index(np.argmax(err), err.shape)
        if err[i, j] > 1e-10:
            raise NotOrthonormal((int(i), int(j)), float(err[i, j]))
    # rows of A hold <a_i| after conjugation; columns of B.T hold |b_j>
    return validate_unitary(A.conj() @ B.T)


def haar_sample(d: int, seed: Seed | int | np.random.Generator | None = None) -> UnitaryMatrix:
    """Draw a Haar-random unitary from a Ginibre matrix by phase-corrected QR."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = _rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    q = q * (diag / np.abs(diag))
    return validate_unitary(q)


def min_abs_entry(U, tol_omega: float = TOL_OMEGA) -> tuple[float, bool]:
    """Smallest ``|U_ij|`` and whether it clears ``tol_omega`` (membership in Omega)."""
    m = float(np.min(np.abs(np.asarray(U))))
    return m, m > tol_omega


def dft_unitary(d: int) -> UnitaryMatrix:
    if d < 1:
        raise ValueError("d must be >= 1")
    jk = np.outer(np.arange(d), np.arange(d))
    return validate_unitary(np.exp(2j * np.pi * jk / d) / math.sqrt(d))


def random_density_matrix(d: int, seed=None, rank: int | None = None) -> DensityMatrix:
    """``G G^dag / Tr(G G^dag)`` with ``G`` a d x rank complex Gaussian matrix."""
    if rank is None:
        rank = d
    if not 1 <= rank <= d:
        raise BadRank(f"rank must lie in [1, {d}], got {rank}")
    rng = _rng(seed)
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return validate_density(rho / np.trace(rho).real)


def random_hermitian(d: int, seed=None) -> np.ndarray:
    """Random Hermitian matrix (GUE shape) with unit Hilbert-Schmidt norm."""
    rng = _rng(seed)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = (g + g.conj().T) / 2
    return h / np.linalg.norm(h)


def _pairs(d: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


@lru_cache(maxsize=None)
def hermitian_basis(d: int) -> HermitianBasis:
    if d < 1:
        raise ValueError("d must be >= 1")
    s = 1 / math.sqrt(2)
    elems = []
    for i in range(d):
        e = np.zeros((d, d), complex)
        e[i, i] = 1
        elems.append(e)
    pairs = _pairs(d)
    for i, j in pairs:
        e = np.zeros((d, d), complex)
        e[i, j] = e[j, i] = s
        elems.append(e)
    for i, j in pairs:
        e = np.zeros((d, d), complex)
        e[i, j] = 1j * s
        e[j, i] = -1j * s
        elems.append(e)
    arr = np.array(elems)
    arr.setflags(write=False)
    return HermitianBasis(d, arr)


def hermitian_coordinates(H) -> np.ndarray:
    """Coordinates ``<E_k, H>`` of H in :func:`hermitian_basis` order.

    Works on a stack ``(..., d, d)``. Only the Hermitian part of H is seen:
    diagonal reals, then ``sqrt2 Re H_ij``, then ``sqrt2 Im H_ij`` (i < j).
    """
    H = np.asarray(H)
    d = H.shape[-1]
    iu, ju = np.triu_indices(d, k=1)
    upper = (H[..., iu, ju] + H[..., ju, iu].conj()) / 2
    diag = np.diagonal(H, axis1=-2, axis2=-1).real
    return np.concatenate(
        [diag, math.sqrt(2) * upper.real, math.sqrt(2) * upper.imag], axis=-1
    )


def hermitian_from_coordinates(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.tensordot(x, hermitian_basis(d).elements, axes=(-1, 0))


# -- matrix files ------------------------------------------------------------

MATRIX_FILE_SCHEMA = {
    "type": "object",
    "required": ["d", "entries"],
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "entries": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
    },
}


def _num(x: float) -> str:
    return format(float(x), ".17g")


def matrix_to_json(M) -> str:
    """Serialize as ``{"d": d, "entries": [[[re, im], ...], ...]}`` with 17 significant digits."""
    arr = as_complex_matrix(M)
    if arr.shape[0] != arr.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {arr.shape}")
    rows = []
    for row in arr:
        cells = ", ".join(f"[{_num(z.real)}, {_num(z.imag)}]" for z in row)
        rows.append(f"    [{cells}]")
    return '{"d": %d, "entries": [\n%s\n]}\n' % (arr.shape[0], ",\n".join(rows))


def matrix_from_json(text: str) -> np.ndarray:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MatrixFileError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "d" not in obj or "entries" not in obj:
        raise MatrixFileError('expected an object with keys "d" and "entries"')
    d = obj["d"]
    entries = obj["entries"]
    if not isinstance(d, int) or d < 1:
        raise MatrixFileError(f'"d" must be a positive integer, got {d!r}')
    try:
        arr = np.array(entries, dtype=float)
    except (TypeError, ValueError) as exc:
        raise MatrixFileError(f"malformed entries: {exc}") from exc
    if arr.shape != (d, d, 2):
        raise MatrixFileError(f"entries must have shape ({d}, {d}, 2), got {arr.shape}")
    out = arr[..., 0] + 1j * arr[..., 1]
    if not np.all(np.isfinite(out)):
        raise MatrixFileError("entries must be finite")
    return out


def write_matrix(path, M) -> None:
    Path(path).write_text(matrix_to_json(M))


def read_matrix(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MatrixFileError(f"cannot read {path}: {exc}") from exc
    return matrix_from_json(text)
