"""Causal time-series models with exogenous covariates.

Simulation, Gaussian quasi-maximum likelihood estimation, boundary-aware
Wald-type significance testing and penalized model selection for a family
of conditionally heteroskedastic autoregressions driven by covariates.
"""

from .asymptotics import (
    Cone,
    SandwichEstimate,
    all_free_cone,
    build_cone,
    cone_project,
    cone_project_many,
    estimate_sandwich,
)
from .errors import (
    AcxError,
    ConfigError,
    DimensionError,
    EstimationError,
    InvertibilityError,
    NumericsError,
    SingularMatrixError,
)
from .estimate import FitResult, fit_qmle, fit_submodel
from .inference import (
    WaldResult,
    critical_value_chisq,
    critical_value_cone_mc,
    significance_test,
    wald_statistic,
)
from .likelihood import LikelihoodState, eval_loglik, fd_gradient, per_obs_scores, score_fd
from .models import (
    ModelSpec,
    ParamSpace,
    PsiWeights,
    armax_psi_weights,
    check_space,
    conditional_moments,
    default_space,
    space_from_json,
    space_to_json,
    stationarity_margin,
    validate_theta,
)
from .select import (
    FitCache,
    PenaltySchedule,
    SelectionResult,
    criterion,
    fdarx_order_supports,
    fit_collection,
    select_from_fits,
    select_model,
)
from .simulate import NoiseConfig, Sample, simulate_covariates, simulate_response

__version__ = "0.1.0"

__all__ = [
    "AcxError",
    "ConfigError",
    "Cone",
    "DimensionError",
    "EstimationError",
    "FitCache",
    "FitResult",
    "InvertibilityError",
    "LikelihoodState",
    "ModelSpec",
    "NoiseConfig",
    "NumericsError",
    "ParamSpace",
    "PenaltySchedule",
    "PsiWeights",
    "Sample",
    "SandwichEstimate",
    "SelectionResult",
    "SingularMatrixError",
    "WaldResult",
    "all_free_cone",
    "armax_psi_weights",
    "build_cone",
    "check_space",
    "conditional_moments",
    "cone_project",
    "cone_project_many",
    "criterion",
    "critical_value_chisq",
    "critical_value_cone_mc",
    "default_space",
    "estimate_sandwich",
    "eval_loglik",
    "fd_gradient",
    "fdarx_order_supports",
    "fit_collection",
    "fit_qmle",
    "fit_submodel",
    "per_obs_scores",
    "score_fd",
    "select_from_fits",
    "select_model",
    "significance_test",
    "simulate_covariates",
    "simulate_response",
    "space_from_json",
    "space_to_json",
    "stationarity_margin",
    "validate_theta",
    "wald_statistic",
]
