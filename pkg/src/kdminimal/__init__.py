"""Decide when the Kirkwood-Dirac-positive states of two bases form the minimal polytope.

With the first basis fixed to the standard basis, everything depends on the
transition matrix ``U[i, j] = <a_i|b_j>``. The main entry point is
:func:`is_minimal`.
"""
from .core_types import (
    DensityMatrix,
    HermitianBasis,
    Seed,
    UnitaryMatrix,
    dft_unitary,
    haar_sample,
    hermitian_basis,
    min_abs_entry,
    random_density_matrix,
    transition_matrix,
    validate_density,
    validate_unitary,
)
from .kd import (
    is_kd_positive,
    kd_marginals,
    kd_real_dimension_direct,
    kd_symbol,
    operator_from_weak_values,
    self_adjoint_residual,
    weak_values,
)
from .minimality import (
    c_map_matrix,
    goodness_polynomial,
    is_minimal,
    kernel_dimension,
    n_basis,
    restricted_margin,
    t_basis,
    witness_unitary,
)
from .polytope import membership, mix, project_to_span
from .rank import RankPolicy

__version__ = "0.1.0"
