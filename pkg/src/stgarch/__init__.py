"""Bayesian estimation, prediction and model choice for smooth-transition
ARMA-GARCH-M models with Gaussian or Student-t errors."""

from .errors import (
    DegenerateSample,
    DomainError,
    ExplosivePath,
    NoConvergence,
    NonFiniteError,
    NonPositivePrice,
    NotEnoughData,
    NumericalError,
    ParseError,
    SingularDesign,
    StgarchError,
    ZeroDenominator,
)
from .forecast import ForecastRecord, mse_ratio, predict_variance, rolling_forecast
from .model import ErrorFamily, FilterOutput, ModelSpec, ParamState, Transition, filter
from .priors import NuPrior, PriorConfig, likelihood_wellbehaved_test, log_jeffreys_nu, log_posterior
from .sampler import Chain, McmcConfig, run_chain
from .selection import MarginalLikelihood, bayes_test, newton_raftery, shifted_gamma
from .simulate import StudyConfig, StudyReport, run_study, simulate_dataset
from .special import digamma, trigamma

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "DegenerateSample",
    "DomainError",
    "ErrorFamily",
    "ExplosivePath",
    "FilterOutput",
    "ForecastRecord",
    "MarginalLikelihood",
    "McmcConfig",
    "ModelSpec",
    "NoConvergence",
    "NonFiniteError",
    "NonPositivePrice",
    "NotEnoughData",
    "NuPrior",
    "NumericalError",
    "ParamState",
    "ParseError",
    "PriorConfig",
    "SingularDesign",
    "StgarchError",
    "StudyConfig",
    "StudyReport",
    "Transition",
    "ZeroDenominator",
    "bayes_test",
    "digamma",
    "filter",
    "likelihood_wellbehaved_test",
    "log_jeffreys_nu",
    "log_posterior",
    "mse_ratio",
    "newton_raftery",
    "predict_variance",
    "rolling_forecast",
    "run_chain",
    "run_study",
    "shifted_gamma",
    "simulate_dataset",
    "trigamma",
]
