"""Robust location-scale inference with log-Pareto-tailed distributions."""

__version__ = "0.1.0"

from ._backend import NAME as BACKEND
from .dist import (
    LocationScaleModel,
    NormalCore,
    StudentTCore,
    TailedDistribution,
    UniformCore,
    construct_direct,
    construct_from_core_mass,
    reference_models,
)
from .infer import (
    FitResult,
    GridSpec,
    OutlierConfig,
    PosteriorGrid,
    Prior,
    log_likelihood,
    marginal_ratio,
    mle_fit,
    posterior_grid,
    posterior_l1_distance,
    posterior_summaries,
)

__all__ = [
    "BACKEND",
    "LocationScaleModel",
    "NormalCore",
    "StudentTCore",
    "TailedDistribution",
    "UniformCore",
    "construct_direct",
    "construct_from_core_mass",
    "reference_models",
    "FitResult",
    "GridSpec",
    "OutlierConfig",
    "PosteriorGrid",
    "Prior",
    "log_likelihood",
    "marginal_ratio",
    "mle_fit",
    "posterior_grid",
    "posterior_l1_distance",
    "posterior_summaries",
]
