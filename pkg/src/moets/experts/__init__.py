"""Expert forecasters and the shared pre/post-processing wrapper."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError
from ..nn import Module
from ..preprocess import Decomposition, DecompositionConfig, PatchConfig, RevIN
from ..tensor import Tensor
from .elm import ELMCore
from .mingru import MinGRUCore, MinGRULayer, min_gru_step, sequential_scan
from .patchtst import PatchTSTCore
from .slstm import SLSTMCore, SLstmState, slstm_cell, slstm_cell_naive, slstm_step

EXPERT_KINDS = ("elm", "patchtst", "mingru", "slstm")


@dataclass(frozen=True)
class ExpertConfig:
    lookback: int
    horizon: int
    variates: int
    kernel: int = 25
    learnable_ma: bool = False
    revin: bool = True
    patch_len: int = 16
    stride: int = 8
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    dropout: float = 0.0
    mingru_hidden: int = 64
    mingru_layers: int = 2
    slstm_hidden: int = 64


def expert_rng(seed: int, kind: str) -> np.random.Generator:
    return np.random.default_rng([seed, EXPERT_KINDS.index(kind)])


def _build_core(kind: str, cfg: ExpertConfig, rng: np.random.Generator) -> Module:
    L, T = cfg.lookback, cfg.horizon
    if kind == "elm":
        return ELMCore(L, T, rng)
    if kind == "patchtst":
        if cfg.d_model % cfg.n_heads:
            raise ConfigError(f"d_model={cfg.d_model} is not divisible by n_heads={cfg.n_heads}")
        return PatchTSTCore(L, T, PatchConfig(cfg.patch_len, cfg.stride), cfg.d_model, cfg.n_heads,
                            cfg.n_layers, cfg.d_ff, rng, cfg.dropout)
    if kind == "mingru":
        return MinGRUCore(L, T, cfg.mingru_hidden, rng, layers=cfg.mingru_layers)
    if kind == "slstm":
        return SLSTMCore(L, T, cfg.slstm_hidden, rng)
    raise ConfigError(f"unknown expert kind {kind!r}; expected one of {EXPERT_KINDS}")


class Expert(Module):
    """RevIN -> decomposition -> core (per variate, shared weights) -> inverse RevIN.

    Maps [B, L, m] to [B, T, m]. Cores see one univariate series per row.
    """

    def __init__(self, kind: str, cfg: ExpertConfig, seed: int = 0):
        if kind not in EXPERT_KINDS:
            raise ConfigError(f"unknown expert kind {kind!r}; expected one of {EXPERT_KINDS}")
        self.kind = kind
        self.cfg = cfg
        self.revin = RevIN(cfg.variates) if cfg.revin else None
        self.decomposition = Decomposition(DecompositionConfig(cfg.kernel, cfg.learnable_ma))
        self.core = _build_core(kind, cfg, expert_rng(seed, kind))

    def forward(self, x: Tensor) -> Tensor:
        B, L, m = x.shape
        if (L, m) != (self.cfg.lookback, self.cfg.variates):
            raise DimensionError(f"{self.kind} expects [B, {self.cfg.lookback}, {self.cfg.variates}], got {x.shape}")
        stats = None
        if self.revin is not None:
            x, stats = self.revin.normalize(x)
        trend, seasonal = self.decomposition(x)

        def per_variate(t: Tensor) -> Tensor:
            return t.transpose(0, 2, 1).reshape(B * m, L)

        if self.core.consumes_components:
            y = self.core(per_variate(trend), per_variate(seasonal))
        else:
            y = self.core(per_variate(trend + seasonal))
        y = y.reshape(B, m, -1).transpose(0, 2, 1)
        if stats is not None:
            y = self.revin.denormalize(y, stats)
        return y


def build_expert(kind: str, cfg: ExpertConfig, seed: int = 0) -> Expert:
    return Expert(kind, cfg, seed)


def expert_forward(expert: Expert, x: np.ndarray) -> np.ndarray:
    """Forecast one window [L, m] -> [T, m] (or a batch [B, L, m] -> [B, T, m])."""
    x = np.asarray(x)
    single = x.ndim == 2
    batch = Tensor(x[None] if single else x)
    y = expert(batch).data
    return y[0] if single else y


__all__ = [
    "EXPERT_KINDS",
    "ELMCore",
    "Expert",
    "ExpertConfig",
    "MinGRUCore",
    "MinGRULayer",
    "PatchTSTCore",
    "SLSTMCore",
    "SLstmState",
    "build_expert",
    "expert_forward",
    "min_gru_step",
    "sequential_scan",
    "slstm_cell",
    "slstm_cell_naive",
    "slstm_step",
]
