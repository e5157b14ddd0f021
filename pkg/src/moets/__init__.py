"""Mixture-of-experts time-series forecasting on a small numpy autodiff engine."""

from .config import RunConfig, load_config, parse_config
from .data import load_csv, make_windows, split, standardize
from .experts import EXPERT_KINDS, Expert, ExpertConfig, expert_forward
from .gating import GatingConfig, MixtureOfExperts, MixtureOutput, build_moe, mix, moe_forward, smooth_logits
from .training import TrainConfig, combined_loss, evaluate, mae, mse, train

__version__ = "0.1.0"

__all__ = [
    "EXPERT_KINDS",
    "Expert",
    "ExpertConfig",
    "GatingConfig",
    "MixtureOfExperts",
    "MixtureOutput",
    "RunConfig",
    "TrainConfig",
    "build_moe",
    "combined_loss",
    "evaluate",
    "expert_forward",
    "load_config",
    "load_csv",
    "mae",
    "make_windows",
    "mix",
    "moe_forward",
    "mse",
    "parse_config",
    "smooth_logits",
    "split",
    "standardize",
    "train",
]
