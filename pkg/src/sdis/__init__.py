"""Sequential directional importance sampling for rare-event probabilities."""

from .engine import (
    DirectionalLevel,
    SdisConfig,
    SdisResult,
    estimate_cv,
    run_ds,
    run_mcs,
    run_sdis,
)
from .limit_states import LimitState, make_model
from .mathcore import make_rng

__all__ = [
    "DirectionalLevel",
    "LimitState",
    "SdisConfig",
    "SdisResult",
    "estimate_cv",
    "make_model",
    "make_rng",
    "run_ds",
    "run_mcs",
    "run_sdis",
]

__version__ = "0.1.0"
