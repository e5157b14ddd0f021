"""Transformer gating over expert forecasts and the per-timestep mixture.

Weights are computed as softmax over experts of the moving-average-smoothed
gate logits; the forecast at step t is sum_i w[t, i] * expert_i[t].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .experts import EXPERT_KINDS, Expert, ExpertConfig
from .nn import Encoder, Linear, Module
from .tensor import Tensor, ops, seeded_init


@dataclass(frozen=True)
class GatingConfig:
    n_experts: int
    d_gate: int = 64
    heads: int = 4
    layers: int = 1
    k: int = 0  # 0 selects the horizon-dependent default

    def window(self, horizon: int) -> int:
        k = self.k or default_smoothing(horizon)
        if k > horizon:
            raise ConfigError(f"smoothing window k={k} exceeds horizon T={horizon}")
        return k

    def __post_init__(self):
        if self.n_experts < 1:
            raise ConfigError("the gate needs at least one expert")
        if self.d_gate % self.heads:
            raise ConfigError(f"d_gate={self.d_gate} is not divisible by heads={self.heads}")
        if self.k < 0:
            raise ConfigError(f"smoothing window must be >= 1, got {self.k}")


def default_smoothing(horizon: int) -> int:
    return 25 if horizon >= 96 else min(5, horizon if horizon % 2 else max(horizon - 1, 1))


def odd_window(k: int) -> int:
    return k if k % 2 else k + 1


def _check_outputs(outputs) -> tuple:
    if not outputs:
        raise ContractError("no expert outputs given")
    shape = outputs[0].shape
    for i, o in enumerate(outputs):
        if o.shape != shape:
            raise ContractError(f"expert {i} output {o.shape} disagrees with {shape}")
    return shape


def smooth_logits(logits, k: int):
    """Centered moving average (odd window, replicate padding) along the time axis.

    Accepts [T, n] or [B, T, n], as a tensor or an array. Even ``k`` rounds up.
    """
    horizon = logits.shape[-2]
    if not 1 <= k <= horizon:
        raise ConfigError(f"smoothing window k={k} must lie in [1, T={horizon}]")
    window = odd_window(k)
    if isinstance(logits, Tensor):
        return logits if window == 1 else ops.moving_average(logits, window, axis=-2)
    from .preprocess import moving_average
    return np.asarray(logits) if window == 1 else moving_average(logits, window, axis=-2)


class GatingNetwork(Module):
    """Per-timestep transformer gate over concatenated expert forecasts."""

    def __init__(self, cfg: GatingConfig, horizon: int, variates: int, rng: np.random.Generator):
        self.cfg = cfg
        self.horizon = horizon
        self.variates = variates
        self.k = cfg.window(horizon)
        d = cfg.d_gate
        self.embed = Linear(cfg.n_experts * variates, d, rng)
        self.position = seeded_init((horizon, d), "uniform-fan-in", rng, parameter=True)
        self.encoder = Encoder(d, cfg.heads, 2 * d, cfg.layers, rng)
        self.head = Linear(d, cfg.n_experts, rng)

    def logits(self, outputs: list[Tensor]) -> Tensor:
        shape = _check_outputs(outputs)
        if len(outputs) != self.cfg.n_experts or shape[1:] != (self.horizon, self.variates):
            raise DimensionError(
                f"gate expects {self.cfg.n_experts} outputs of [B, {self.horizon}, {self.variates}], "
                f"got {len(outputs)} of {shape}")
        features = ops.concat(outputs, axis=-1)  # [B, T, n*m]
        z = self.embed(features) + self.position
        return self.head(self.encoder(z))

    def forward(self, outputs: list[Tensor]) -> Tensor:
        return ops.softmax(smooth_logits(self.logits(outputs), self.k), axis=-1)


def gate_logits(outputs: list[Tensor], gate: GatingNetwork) -> Tensor:
    return gate.logits(outputs)


def gate_weights(outputs: list[Tensor], gate: GatingNetwork) -> Tensor:
    return gate(outputs)


def mix(outputs, weights):
    """sum_i w[..., t, i] * o_i[..., t, j]; the weight at t is shared by all variates."""
    shape = _check_outputs(outputs)
    if weights.shape[-1] != len(outputs) or weights.shape[:-1] != shape[:-1]:
        raise ContractError(f"weights {weights.shape} do not match {len(outputs)} outputs of {shape}")
    if isinstance(weights, Tensor):
        stacked = ops.stack(outputs, axis=-1)
        w = weights.reshape(*weights.shape[:-1], 1, weights.shape[-1])
        return (stacked * w).sum(axis=-1)
    stacked = np.stack([np.asarray(o) for o in outputs], axis=-1)
    return (stacked * np.asarray(weights)[..., None, :]).sum(axis=-1)


@dataclass
class MixtureOutput:
    prediction: Tensor
    weights: Tensor
    expert_outputs: list[Tensor] = field(default_factory=list)

    def mean_weights(self) -> np.ndarray:
        """Average weight per expert over batch and horizon (rows of a bar chart)."""
        w = self.weights.data
        return w.reshape(-1, w.shape[-1]).mean(axis=0)


class MixtureOfExperts(Module):
    def __init__(self, experts: list[Expert], gate: GatingNetwork):
        names = [e.kind for e in experts]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate experts in {names}")
        self.experts = list(experts)
        self.gate = gate

    @property
    def expert_names(self) -> list[str]:
        return [e.kind for e in self.experts]

    def forward(self, x: Tensor) -> MixtureOutput:
        outputs = [expert(x) for expert in self.experts]
        weights = self.gate(outputs)
        return MixtureOutput(mix(outputs, weights), weights, outputs)


def build_moe(kinds, cfg: ExpertConfig, gating: GatingConfig | None = None, seed: int = 0) -> MixtureOfExperts:
    kinds = list(kinds)
    for kind in kinds:
        if kind not in EXPERT_KINDS:
            raise ConfigError(f"unknown expert kind {kind!r}; expected one of {EXPERT_KINDS}")
    gating = gating or GatingConfig(n_experts=len(kinds))
    experts = [Expert(kind, cfg, seed) for kind in kinds]
    gate = GatingNetwork(gating, cfg.horizon, cfg.variates, np.random.default_rng([seed, 100]))
    return MixtureOfExperts(experts, gate)


def moe_forward(model: MixtureOfExperts, x: np.ndarray) -> MixtureOutput:
    x = np.asarray(x)
    return model(Tensor(x[None] if x.ndim == 2 else x))
