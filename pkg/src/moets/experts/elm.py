"""Enhanced linear expert: DLinear and NLinear pipelines blended by a learned gate."""

from __future__ import annotations

import numpy as np

from ..nn import Linear, Module
from ..tensor import Tensor, ops, seeded_init


class ELMCore(Module):
    consumes_components = True

    def __init__(self, lookback: int, horizon: int, rng: np.random.Generator):
        self.trend = Linear(lookback, horizon, rng)
        self.seasonal = Linear(lookback, horizon, rng)
        self.nlinear = Linear(lookback, horizon, rng)
        # sigmoid(0) = 0.5: both pipelines start with equal weight.
        self.blend = seeded_init((1,), "zeros", parameter=True)

    def dlinear(self, trend: Tensor, seasonal: Tensor) -> Tensor:
        return self.trend(trend) + self.seasonal(seasonal)

    def nlinear_branch(self, x: Tensor) -> Tensor:
        last = x[:, -1:]
        return self.nlinear(x - last) + last

    def forward(self, trend: Tensor, seasonal: Tensor) -> Tensor:
        s = ops.sigmoid(self.blend)
        return self.dlinear(trend, seasonal) * s + self.nlinear_branch(trend + seasonal) * (1.0 - s)
