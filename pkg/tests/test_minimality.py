import math

import numpy as np
import pytest
import scipy.linalg

from kdminimal.core_types import Seed, dft_unitary, haar_sample, hermitian_coordinates
from kdminimal.kd import kd_real_dimension_direct
from kdminimal.minimality import (
    BadDimension,
    CacheDimensionMismatch,
    c_map_apply,
    c_map_matrix,
    goodness_polynomial,
    is_minimal,
    kernel_basis,
    kernel_dimension,
    n_basis,
    restricted_margin,
    t_basis,
    witness_cache,
    witness_unitary,
    witness_z,
)
from kdminimal.rank import RankPolicy, gap_ratio, numerical_rank, rank_threshold

HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def c_oracle(w, U):
    """Direct loop over C^U_jk(w) = i sum_l (w_jl - w_kl) conj(U_kl) U_jl."""
    d = U.shape[0]
    out = np.zeros((d, d), complex)
    for j in range(d):
        for k in range(d):
            out[j, k] = 1j * sum((w[j, l] - w[k, l]) * U[k, l].conj() * U[j, l] for l in range(d))
    return out


def random_diag_phase(d, rng):
    return np.diag(np.exp(2j * np.pi * rng.random(d)))


# -- T and N -----------------------------------------------------------------------


def test_t_basis_d2():
    T = t_basis(2).elements
    np.testing.assert_array_equal(T[0], [[1, 1], [0, 0]])
    np.testing.assert_array_equal(T[3], [[0, 1], [0, 1]])
    assert not t_basis(2).orthonormal


@pytest.mark.parametrize("d", [1, 2, 5, 7])
def test_t_basis_rank_and_relation(d):
    T = t_basis(d)
    assert len(T) == 2 * d
    assert T.rank == 2 * d - 1
    E = T.elements
    assert np.array_equal(E[:d].sum(axis=0) - E[d:].sum(axis=0), np.zeros((d, d)))


def test_t_basis_rank_d5_svd():
    s = np.linalg.svd(t_basis(5).vectors().T, compute_uv=False)
    assert np.count_nonzero(s > 1e-10) == 9


def test_n_basis_d2():
    N = n_basis(2)
    assert len(N) == 1
    np.testing.assert_array_equal(N.elements[0], [[1, -1], [-1, 1]])


@pytest.mark.parametrize("d", range(2, 9))
def test_n_basis_structure(d):
    N = n_basis(d)
    assert len(N) == (d - 1) ** 2
    assert np.all(N.elements.sum(axis=1) == 0)
    assert np.all(N.elements.sum(axis=2) == 0)
    assert N.rank == (d - 1) ** 2
    O = N.orthonormalized
    assert O.orthonormal
    assert np.max(np.abs(O.gram() - np.eye(len(O)))) <= 1e-12
    # orthogonal to T and spanning the same space as the raw elements
    assert np.max(np.abs(t_basis(d).vectors().T @ O.vectors())) <= 1e-12
    both = np.hstack([N.vectors(), O.vectors()])
    assert np.linalg.matrix_rank(both) == (d - 1) ** 2


def test_n_basis_bad_dimension():
    with pytest.raises(BadDimension):
        n_basis(1)


# -- C^U ---------------------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_c_map_apply_matches_formula(d):
    rng = np.random.default_rng(d)
    U = haar_sample(d, rng).entries
    w = rng.standard_normal((d, d))
    np.testing.assert_allclose(c_map_apply(w, U), c_oracle(w, U), atol=1e-13)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_c_map_matrix_columns(d):
    U = haar_sample(d, Seed(d, 3)).entries
    C = c_map_matrix(U)
    assert C.matrix.shape == (d * d, d * d)
    assert (C.domain_basis, C.codomain_basis) == ("real_standard", "hermitian")
    for idx in range(d * d):
        w = np.zeros(d * d)
        w[idx] = 1
        expected = hermitian_coordinates(c_oracle(w.reshape(d, d), U))
        np.testing.assert_allclose(C.matrix[:, idx], expected, atol=1e-13)


@pytest.mark.parametrize("seed", range(10))
def test_c_image_hermitian_zero_diagonal(seed):
    rng = np.random.default_rng(seed)
    d = 2 + seed % 5
    U = haar_sample(d, rng).entries
    img = c_map_apply(rng.standard_normal((d, d)), U)
    assert np.max(np.abs(img - img.conj().T)) <= 1e-12
    assert np.max(np.abs(np.diag(img))) <= 1e-12


@pytest.mark.parametrize("d", [2, 4, 8])
def test_c_map_identity_is_zero(d):
    assert np.all(c_map_matrix(np.eye(d)).matrix == 0)


def test_c_map_hadamard_rank_one():
    C = c_map_matrix(HADAMARD).with_spectrum()
    assert np.count_nonzero(C.singular_values > 1e-12) == 1
    # kernel: w11 - w21 = w12 - w22
    for w in [np.array([[1, 0], [1, 0]]), np.array([[0, 1], [0, 1]]), np.array([[1, 1], [0, 0]])]:
        assert np.max(np.abs(c_map_apply(w, HADAMARD))) < 1e-15
    w = np.array([[1.0, 0], [0, 0]])
    np.testing.assert_allclose(c_map_apply(w, HADAMARD)[0, 1], 0.5j, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3, 6])
@pytest.mark.parametrize("seed", range(3))
def test_t_in_kernel(d, seed):
    U = haar_sample(d, Seed(seed, d)).entries
    C = c_map_matrix(U).with_spectrum()
    smax = C.singular_values[0]
    for g in t_basis(d).elements:
        assert np.linalg.norm(C.matrix @ g.ravel()) <= 1e-12 * smax


# -- rank policy ------------------------------------------------------------------


def test_rank_helpers():
    p = RankPolicy()
    s = np.array([2.0, 1.0, 1e-17, 0.0])
    assert rank_threshold(s, 2, p) == pytest.approx(100 * np.finfo(float).eps * 2 * 4)
    assert numerical_rank(s, 2, p) == 2
    assert gap_ratio(s, 2) == pytest.approx(1e17)
    assert gap_ratio(np.array([1.0, 0.0]), 1) == math.inf
    assert gap_ratio(np.array([1.0, 1.0]), 2) == math.inf
    assert gap_ratio(np.zeros(3), 0) == math.inf


def test_rank_threshold_floor():
    # a map that is pure roundoff has rank 0
    s = np.array([4.3e-17, 3.3e-18, 0.0, 0.0])
    assert numerical_rank(s, 2, RankPolicy()) == 0


# -- kernel dimension -------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 3, 6])
def test_kernel_dimension_identity(d):
    dim, s, _ = kernel_dimension(np.eye(d))
    assert dim == d * d
    assert s.max() == 0


@pytest.mark.parametrize("d", range(2, 9))
def test_kernel_dimension_witness(d):
    dim, _, gap = kernel_dimension(witness_unitary(d).entries)
    assert dim == 2 * d - 1
    assert gap >= 1e3


def test_kernel_dimension_haar_d4():
    for t in range(200):
        dim, _, gap = kernel_dimension(haar_sample(4, Seed(4, t)).entries)
        assert dim == 7 and gap >= 1e3


@pytest.mark.parametrize("d", [2, 3, 5])
@pytest.mark.parametrize("seed", range(5))
def test_kernel_dimension_lower_bound(d, seed):
    rng = np.random.default_rng(seed)
    # includes unitaries with zero entries, where C^U is still defined
    U = haar_sample(d, rng).entries
    P = np.eye(d)[rng.permutation(d)]
    phase = np.array([[np.exp(1j * rng.random())]])
    block = scipy.linalg.block_diag(phase, haar_sample(d - 1, rng).entries)
    for V in (U, P, P @ U, block):
        assert kernel_dimension(V)[0] >= 2 * d - 1


@pytest.mark.parametrize("seed", range(10))
def test_permutation_covariance(seed):
    rng = np.random.default_rng(seed)
    d = 4
    U = haar_sample(d, rng).entries
    P = np.eye(d)[rng.permutation(d)]
    Q = np.eye(d)[rng.permutation(d)]
    assert kernel_dimension(P @ U @ Q)[0] == kernel_dimension(U)[0]
    D = dft_unitary(d).entries
    assert kernel_dimension(P @ D @ Q)[0] == kernel_dimension(D)[0]


@pytest.mark.parametrize("seed", range(10))
def test_rephasing_kernel_invariance(seed):
    rng = np.random.default_rng(seed)
    d = 4
    U = haar_sample(d, rng).entries
    V = random_diag_phase(d, rng) @ U @ random_diag_phase(d, rng)
    KU, KV = kernel_basis(U), kernel_basis(V)
    assert KU.shape == KV.shape
    assert np.max(np.abs(c_map_matrix(V).matrix @ KU)) <= 1e-9
    assert np.max(np.abs(c_map_matrix(U).matrix @ KV)) <= 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_rephasing_margin_invariance(seed):
    rng = np.random.default_rng(seed)
    for U in (haar_sample(4, rng).entries, witness_unitary(5).entries):
        d = U.shape[0]
        V = random_diag_phase(d, rng) @ U @ random_diag_phase(d, rng)
        assert restricted_margin(V) == pytest.approx(restricted_margin(U), abs=1e-10)


# -- margin, witness, verdicts ----------------------------------------------------


def test_restricted_margin_identity():
    assert restricted_margin(np.eye(3)) == 0


@pytest.mark.parametrize("d", range(2, 9))
def test_restricted_margin_witness(d):
    U = witness_unitary(d).entries
    s = np.linalg.svd(c_map_matrix(U).matrix, compute_uv=False)
    tau = rank_threshold(s, d, RankPolicy())
    assert restricted_margin(U) > 10 * tau


def test_restricted_margin_needs_d2():
    with pytest.raises(BadDimension):
        restricted_margin(np.eye(1))


@pytest.mark.parametrize("d", range(1, 13))
def test_witness_unitary(d):
    U = witness_unitary(d)
    assert U.unitarity_residual <= 1e-12
    expm = scipy.linalg.expm(1j * np.ones((d, d)) / d)
    np.testing.assert_allclose(U.entries, expm, atol=1e-13)
    if d >= 2:
        z = witness_z(d)
        assert z.real != 0 and z.imag != 0
        assert is_minimal(U).in_omega


def test_witness_d2_reduced_formula():
    d = 2
    U = witness_unitary(d).entries
    z = witness_z(d)
    N = n_basis(d).elements[0]
    full = c_map_apply(N, U)
    assert np.max(np.abs(full)) > 0.1
    reduced = np.array([[(N[j, j] - N[k, j]) * z.conjugate() + (N[j, k] - N[k, k]) * z for k in range(d)]
                        for j in range(d)])
    np.testing.assert_allclose(-1j * full, reduced, atol=1e-12)


@pytest.mark.parametrize("d", range(2, 7))
def test_witness_reduction_on_n(d):
    rng = np.random.default_rng(d)
    U = witness_unitary(d).entries
    z = witness_z(d)
    N = np.tensordot(rng.standard_normal((d - 1) ** 2), n_basis(d).elements, axes=1)
    reduced = np.array([[(N[j, j] - N[k, j]) * z.conjugate() + (N[j, k] - N[k, k]) * z for k in range(d)]
                        for j in range(d)])
    np.testing.assert_allclose(-1j * c_map_apply(N, U), reduced, atol=1e-12)


def test_is_minimal_identity():
    rep = is_minimal(np.eye(3))
    assert rep.verdict == "not_applicable"
    assert rep.m_min == 0
    assert rep.kernel_dim == 9


def test_is_minimal_hadamard():
    rep = is_minimal(HADAMARD)
    assert rep.verdict == "minimal"
    assert rep.kernel_dim == 3
    assert rep.gap_ratio >= 1e3


@pytest.mark.parametrize("seed", range(20))
def test_is_minimal_haar_d3(seed):
    assert is_minimal(haar_sample(3, Seed(seed))).verdict == "minimal"


def test_is_minimal_d1():
    rep = is_minimal(np.array([[1j]]))
    assert rep.verdict == "minimal"
    assert rep.kernel_dim == 1


def test_is_minimal_indeterminate_when_gap_small():
    U = haar_sample(3, Seed(1))
    rep = is_minimal(U, RankPolicy(gap_min=1e300))
    assert rep.verdict == "indeterminate"


def test_is_minimal_non_minimal_dft4():
    rep = is_minimal(dft_unitary(4))
    assert rep.verdict == "non_minimal"
    assert rep.kernel_dim > 7
    assert rep.margin < 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_report_invariants(seed):
    rng = np.random.default_rng(seed)
    d = 2 + seed % 4
    candidates = [haar_sample(d, rng), dft_unitary(d), witness_unitary(d), np.eye(d)]
    for U in candidates:
        rep = is_minimal(U)
        assert rep.kernel_dim >= 2 * d - 1
        assert (rep.verdict == "not_applicable") == (not rep.in_omega)
        if rep.verdict in ("minimal", "non_minimal"):
            assert rep.gap_ratio >= 1e3
        if rep.verdict == "minimal":
            assert rep.kernel_dim == 2 * d - 1
        if rep.verdict == "non_minimal":
            assert rep.kernel_dim > 2 * d - 1
        assert list(rep.sv_spectrum) == sorted(rep.sv_spectrum, reverse=True)


# -- goodness polynomial ----------------------------------------------------------


def test_goodness_identity_zero():
    g = goodness_polynomial(np.eye(3))
    assert g.value == 0 and g.sign == 0


@pytest.mark.parametrize("d", range(2, 9))
def test_goodness_witness_nonzero(d):
    g = goodness_polynomial(witness_unitary(d).entries)
    assert g.sign != 0
    assert math.isfinite(g.log_abs)


def test_goodness_haar_d3():
    for t in range(100):
        U = haar_sample(3, Seed(33, t)).entries
        assert goodness_polynomial(U).sign != 0


def test_goodness_certifies_minimality():
    for t in range(50):
        U = haar_sample(4, Seed(44, t)).entries
        if goodness_polynomial(U).sign != 0:
            assert is_minimal(U).verdict == "minimal"


def test_goodness_is_polynomial_degree():
    # c(e^{i phi} U) = c(U): every matrix entry of C^U is invariant under a global phase
    U = haar_sample(3, Seed(5)).entries
    a = goodness_polynomial(U)
    b = goodness_polynomial(np.exp(0.7j) * U)
    assert b.value == pytest.approx(a.value, rel=1e-10)


def test_goodness_cache_mismatch():
    with pytest.raises(CacheDimensionMismatch):
        goodness_polynomial(np.eye(3), witness_cache(4))


def test_witness_cache_range():
    d = 4
    cache = witness_cache(d)
    R = cache.range_basis
    assert R.shape == (d * d, (d - 1) ** 2)
    assert np.max(np.abs(R.T @ R - np.eye(R.shape[1]))) <= 1e-12
    assert witness_cache(d) is cache


def test_direct_and_c_route_on_structured():
    for U in (HADAMARD, np.eye(2), dft_unitary(4).entries, witness_unitary(5).entries):
        assert kd_real_dimension_direct(U)[0] == kernel_dimension(U)[0]
