"""Shared pre/post-processing: series decomposition, RevIN, patching.

Each transform exists twice: a plain numpy function used for data handling
and verification, and a :class:`~moets.nn.Module` used inside expert models
so gradients flow through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .nn import Module
from .tensor import Tensor, ops, seeded_init


@dataclass(frozen=True)
class DecompositionConfig:
    kernel: int = 25
    learnable: bool = False

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"decomposition kernel must be odd and >= 1, got {self.kernel}")


@dataclass(frozen=True)
class PatchConfig:
    patch_len: int = 16
    stride: int = 8

    def __post_init__(self):
        if self.patch_len < 1 or not 1 <= self.stride <= self.patch_len:
            raise ConfigError(f"need 1 <= stride <= patch_len, got P={self.patch_len}, S={self.stride}")

    def count(self, lookback: int) -> int:
        if self.patch_len > lookback:
            raise ConfigError(f"patch length {self.patch_len} exceeds lookback {lookback}")
        return (lookback - self.patch_len) // self.stride + 2


def moving_average(x: np.ndarray, kernel: int, axis: int = 0) -> np.ndarray:
    """Centered window-``kernel`` mean along ``axis`` with edge-value padding."""
    if kernel < 1 or kernel % 2 == 0:
        raise ConfigError(f"moving-average window must be odd and >= 1, got {kernel}")
    x = np.asarray(x)
    m = ops.average_matrix(x.shape[axis], kernel, np.float64)
    moved = np.moveaxis(x.astype(np.float64), axis, -1)
    return np.moveaxis(moved @ m.T, -1, axis)


def series_decompose(x: np.ndarray, cfg: DecompositionConfig = DecompositionConfig()):
    """Split ``x`` [L, m] into (trend, seasonal) along the time axis.

    The trend keeps the input dtype. The seasonal residual ``x - trend`` is
    formed in float64, where the difference of two float32 values is exact,
    so ``trend + seasonal == x`` holds bit for bit for float32 input.
    """
    x = np.asarray(x)
    trend = moving_average(x, cfg.kernel, axis=0).astype(x.dtype)
    seasonal = x.astype(np.float64) - trend.astype(np.float64)
    return trend, seasonal


@dataclass
class RevINState:
    """Per-instance statistics plus the learnable per-variate affine map."""

    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5
    mean: np.ndarray | None = field(default=None)
    std: np.ndarray | None = field(default=None)

    @classmethod
    def identity(cls, m: int, eps: float = 1e-5) -> RevINState:
        return cls(gamma=np.ones(m), beta=np.zeros(m), eps=eps)


GAMMA_FLOOR = 1e-8


def _safe_gamma(gamma: np.ndarray) -> np.ndarray:
    return np.where(np.abs(gamma) < GAMMA_FLOOR, np.where(gamma < 0, -GAMMA_FLOOR, GAMMA_FLOOR), gamma)


def revin_normalize(x: np.ndarray, state: RevINState) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    state.mean = x.mean(axis=0)
    state.std = np.sqrt(x.var(axis=0) + state.eps)
    return state.gamma * (x - state.mean) / state.std + state.beta


def revin_denormalize(y: np.ndarray, state: RevINState) -> np.ndarray:
    if state.mean is None:
        raise ContractError("revin_denormalize called before revin_normalize")
    y = np.asarray(y, dtype=np.float64)
    return (y - state.beta) / _safe_gamma(state.gamma) * state.std + state.mean


def patch_indices(lookback: int, cfg: PatchConfig) -> np.ndarray:
    """Index array [n, P] into a series right-padded with S copies of its last value."""
    n = cfg.count(lookback)
    starts = np.arange(n) * cfg.stride
    idx = starts[:, None] + np.arange(cfg.patch_len)[None, :]
    return np.minimum(idx, lookback - 1)


def patchify(u: np.ndarray, cfg: PatchConfig) -> np.ndarray:
    u = np.asarray(u)
    return u[patch_indices(u.shape[0], cfg)]


class Decomposition(Module):
    """Trend/seasonal split along axis 1 of a [B, L, m] tensor.

    The default window is a fixed uniform kernel. In learnable mode the
    window weights are ``softmax(theta)``, so the filter stays an average.
    """

    def __init__(self, cfg: DecompositionConfig):
        self.kernel = cfg.kernel
        self.learnable = cfg.learnable
        self.theta = seeded_init((cfg.kernel,), "zeros", parameter=True) if cfg.learnable else None
        self._index_cache: dict[int, np.ndarray] = {}

    def _window_index(self, length: int) -> np.ndarray:
        if length not in self._index_cache:
            half = self.kernel // 2
            idx = np.arange(length)[:, None] + np.arange(-half, self.kernel - half)[None, :]
            self._index_cache[length] = np.clip(idx, 0, length - 1)
        return self._index_cache[length]

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        if self.learnable:
            windows = ops.take(x, self._window_index(x.shape[1]), axis=1)  # [B, L, k, m]
            w = ops.softmax(self.theta).reshape(1, 1, self.kernel, 1)
            trend = (windows * w).sum(axis=2)
        else:
            trend = ops.moving_average(x, self.kernel, axis=1)
        return trend, x - trend


class RevIN(Module):
    """Reversible instance normalisation over the time axis of [B, L, m].

    Instance statistics are treated as constants (no gradient through them).
    """

    def __init__(self, m: int, eps: float = 1e-5, affine: bool = True):
        self.eps = eps
        self.affine = affine
        if affine:
            self.gamma = seeded_init((m,), "ones", parameter=True)
            self.beta = seeded_init((m,), "zeros", parameter=True)

    def normalize(self, x: Tensor) -> tuple[Tensor, tuple[np.ndarray, np.ndarray]]:
        mean = x.data.mean(axis=1, keepdims=True)
        std = np.sqrt(x.data.var(axis=1, keepdims=True) + self.eps)
        out = (x - Tensor(mean)) / Tensor(std)
        if self.affine:
            out = out * self.gamma + self.beta
        return out, (mean, std)

    def denormalize(self, y: Tensor, stats: tuple[np.ndarray, np.ndarray]) -> Tensor:
        mean, std = stats
        if self.affine:
            gamma = self.gamma.data
            floor = Tensor(_safe_gamma(gamma) - gamma)  # zero unless |gamma| < floor
            y = (y - self.beta) / (self.gamma + floor)
        return y * Tensor(std) + Tensor(mean)


__all__ = [
    "Decomposition",
    "DecompositionConfig",
    "PatchConfig",
    "RevIN",
    "RevINState",
    "moving_average",
    "patch_indices",
    "patchify",
    "revin_denormalize",
    "revin_normalize",
    "series_decompose",
]
