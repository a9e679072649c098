"""Instrumental variable quantile regression for randomly right-censored durations."""

__version__ = "0.1.0"

from .data import Dataset, Observation, check_quantile, validate
from .km import KmCurve, km_eval, km_fit
from .moment import MomentContext, a_hat, objective
from .optim import OptimConfig, OptimResult, multi_start, nelder_mead
from .inference import BootstrapResult, FitConfig, FitResult, bootstrap, estimate, fit, percentile_ci

__all__ = [
    "Dataset", "Observation", "validate", "check_quantile",
    "KmCurve", "km_fit", "km_eval",
    "MomentContext", "a_hat", "objective",
    "OptimConfig", "OptimResult", "nelder_mead", "multi_start",
    "FitConfig", "FitResult", "BootstrapResult", "fit", "estimate", "bootstrap", "percentile_ci",
]
