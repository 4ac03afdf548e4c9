"""Selection bias of the additive hazard difference under effect heterogeneity."""

from .model import (
    BHN,
    BaselineSpec,
    Degenerate,
    EffectSpec,
    GammaFrailty,
    ModelError,
    ScmSpec,
    ShiftedGamma,
    cumulative_hazard,
    hazard,
    invert_cumulative_hazard,
)
from .stochastics import Gaussian, Independence, RngStream, kendall_to_pearson

__version__ = "0.1.0"

__all__ = [
    "BHN",
    "BaselineSpec",
    "Degenerate",
    "EffectSpec",
    "GammaFrailty",
    "Gaussian",
    "Independence",
    "ModelError",
    "RngStream",
    "ScmSpec",
    "ShiftedGamma",
    "cumulative_hazard",
    "hazard",
    "invert_cumulative_hazard",
    "kendall_to_pearson",
]
