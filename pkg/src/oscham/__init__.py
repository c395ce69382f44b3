"""Oscillatory Hermite matrix elements, their decay, and reducibility of the
quantum harmonic oscillator under time-quasiperiodic perturbations."""

from .decay import DecayLaw, c_k_beta, decay_law, decay_scan, l_exponent, mu_admissible, mu_window
from .hermite import eigenvalue, hermite_deriv, hermite_eval, langer_psi1, turning_point
from .kam import (
    DivergenceError,
    KamSchedule,
    MelnikovParams,
    ResonanceError,
    SmallDivisorError,
    check_A1,
    excluded_measure,
    homological_solve,
    is_nonresonant,
    kam_iterate,
    transform_closeness,
)
from .perturbation import PerturbationSpec, TruncatedOperator, assemble_P, load_spec, malpha_norm
from .quadrature import OscIntegralQuery, ToleranceNotMetError, matrix_element
from .simulator import StepSizeError, integrate, reduced_flow_compare

__version__ = "0.1.0"
