"""Wiener-Hopf factorization and discounted first-passage functionals for
finite-state Markov chains with piecewise-constant generators."""

from .chain import (
    AugmentedModel,
    DriftModel,
    GeneratorMatrix,
    RegimeSchedule,
    ValidationReport,
    build_augmented_generator,
    marginal_counter_generator,
    matrix_exp,
    reflect_problem,
    sign_major_permutation,
    transition_matrix,
    validate_generator,
)
from .exceptions import (
    ConfigError,
    InversionError,
    ModelError,
    NumericalError,
    ScalarRootError,
    SingularSystemError,
    SpectralSplitError,
)
from .factorization import (
    BlockFactorization,
    SpectralSplit,
    WHQuadruple,
    block_factorize,
    classical_factorize,
    direct_augmented_factorize,
    factorization_residual,
    scalar_factorize,
    spectral_split,
)
from .functionals import (
    FunctionalValue,
    functional,
    hat_pi_plus,
    hat_psi_plus,
    pi_minus,
    pi_plus,
    psi_minus,
    psi_plus,
)
from .laplace import (
    InversionConfig,
    gs_invert_1d,
    gs_invert_nd,
    gs_weights,
    invert,
    stehfest_weights,
    talbot_invert_1d,
    talbot_invert_2d,
)

__version__ = "0.1.0"
