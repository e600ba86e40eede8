"""Unbiased score and Hessian estimation for partially observed diffusions.

The package is organised bottom-up: models and Euler discretisation,
couplings of resampling distributions, coupled conditional particle
filters, path functionals, the randomized-level estimator, exact
linear-Gaussian oracles, and the optimizers driven by the estimates.
"""

from .errors import CouplingCapError, DivergenceError, MeetingTimeoutError
from .models import (
    DiffusionModel,
    FitzHughNagumo,
    MultivariateOU2D,
    OrnsteinUhlenbeck1D,
    get_model,
    simulate_observations,
)
from .discretization import GridPath
from .functionals import Bundle, eval_bundle
from .estimator import (
    EstimatorConfig,
    HessianEstimate,
    LevelDistribution,
    ScoreEstimate,
    estimate_derivatives,
    estimate_hessian,
    estimate_score,
    hessian_replicate,
    score_level_sum,
    unbiased_increment,
)
from .oracle import (
    kalman_loglik,
    oracle_loglik,
    oracle_mle,
    oracle_score_hessian,
)
from .optimize import (
    FitConfig,
    FitResult,
    estimated_derivative_fn,
    estimated_score_fn,
    newton_fit,
    oracle_derivative_fn,
    oracle_score_fn,
    sgd_fit,
)

__version__ = "0.1.0"

__all__ = [
    "Bundle",
    "CouplingCapError",
    "DiffusionModel",
    "DivergenceError",
    "EstimatorConfig",
    "FitConfig",
    "FitResult",
    "FitzHughNagumo",
    "GridPath",
    "HessianEstimate",
    "LevelDistribution",
    "MeetingTimeoutError",
    "MultivariateOU2D",
    "OrnsteinUhlenbeck1D",
    "ScoreEstimate",
    "estimate_derivatives",
    "estimate_hessian",
    "estimate_score",
    "estimated_derivative_fn",
    "estimated_score_fn",
    "eval_bundle",
    "get_model",
    "hessian_replicate",
    "kalman_loglik",
    "newton_fit",
    "oracle_derivative_fn",
    "oracle_loglik",
    "oracle_mle",
    "oracle_score_hessian",
    "oracle_score_fn",
    "score_level_sum",
    "sgd_fit",
    "simulate_observations",
    "unbiased_increment",
    "__version__",
]
