"""Minimal dense-tensor engine: reverse-mode autodiff plus Adam."""

from . import ops
from .core import (
    Parameter,
    Tape,
    Tensor,
    as_tensor,
    backward,
    current_tape,
    get_dtype,
    no_record,
    precision,
    set_debug,
    set_precision,
)
from .gradcheck import check_gradients
from .init import seeded_init
from .ops import matmul, softmax_lastdim
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam",
    "AdamState",
    "Parameter",
    "Tape",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "check_gradients",
    "current_tape",
    "get_dtype",
    "matmul",
    "no_record",
    "ops",
    "precision",
    "seeded_init",
    "set_debug",
    "set_precision",
    "softmax_lastdim",
]
