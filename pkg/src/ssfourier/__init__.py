"""Fourier transforms of self-similar measures, their large deviations, and the envelope checks."""

__version__ = "0.1.0"

from .errors import BudgetError, ConvergenceError, ResolutionError, ValidationError
from .ifs import (
    AffineMap,
    ContractionStats,
    IfsSystem,
    Word,
    build_system,
    compose_word,
    contraction_band,
    iterate_system,
    kappa,
    lyapunov_exponent,
    normalize_coordinates,
    normalizing_conjugacy,
    prepare_system,
)
from .fourier import (
    birkhoff_average,
    fourier_chaos_game,
    fourier_mu_n,
    fourier_product,
    log_modulus_psi_sum,
    mu_n_convergence,
    psi,
    spectrum,
)
from .deviation import (
    band_decay_rate,
    corollary_band_probability,
    deviation_profile,
    strichartz_average,
    superlevel_measure,
    theorem_bound,
    word_tail_probability,
)
from .rate import check_observations, pressure_curve, rate_function, transfer_pressure
from .envelope import (
    accumulated_contraction,
    build_partitions,
    envelope_recursion,
    r_indicator,
    verify_lipschitz,
    verify_main_estimate,
)
