"""Kernel-regularized impulse-response estimation from Lebesgue-sampled data.

A Lebesgue (level-crossing) sampler records a signal only when it crosses
one of the amplitude thresholds spaced h apart, so between crossings the
output is known only up to a band [eta, eta+h). This package estimates a
continuous-time impulse response from such set-valued data: a stable-spline
kernel prior, an EM solver for the representer weights, empirical-Bayes
hyperparameter tuning driven by truncated-Gaussian Monte Carlo, and a
simulation/benchmark harness with a CLI.
"""

from .errors import LebidError, NumericError, ValidationError
from .domain import (
    BandSequence,
    Dataset,
    Hyperparameters,
    SamplingConfig,
    ZohInput,
    load_dataset,
    save_dataset,
)
from .harness import (
    EstimateConfig,
    ExperimentConfig,
    default_experiment_config,
    emit_results,
    estimate_baseline,
    estimate_lebesgue,
    fit_metric,
    make_run_dataset,
    run_case_study,
)

__version__ = "0.1.0"

__all__ = [
    "LebidError",
    "NumericError",
    "ValidationError",
    "BandSequence",
    "Dataset",
    "Hyperparameters",
    "SamplingConfig",
    "ZohInput",
    "load_dataset",
    "save_dataset",
    "EstimateConfig",
    "ExperimentConfig",
    "default_experiment_config",
    "emit_results",
    "estimate_baseline",
    "estimate_lebesgue",
    "fit_metric",
    "make_run_dataset",
    "run_case_study",
    "__version__",
]
