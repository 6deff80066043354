"""Robust P-spline regression with difference penalties and M-type losses."""

from .basis import (
    BSplineBasis,
    KnotVector,
    design_matrix,
    eval_basis,
    evaluate_spline,
    gram_matrix,
    make_basis,
    spline_derivative_coeffs,
)
from .errors import (
    DegenerateScaleError,
    DimensionMismatchError,
    DomainError,
    InsufficientDataError,
    InvalidParameterError,
    PSplineError,
    SaturatedFitError,
    SingularSystemError,
)
from .loss import LossSpec, make_loss, psi, rho, weight
from .penalty import DifferencePenalty, penalty_matrix, penalty_ratio_bracket, penalty_value
from .scale import ScaleEstimate, m_scale
from .solver import FitConfig, FitResult, fit, gcv_score, irls_fit, pwls_solve, select_lambda

__version__ = "0.1.0"
