"""Minimal GRU expert.

The gate z_t and candidate h~_t depend only on x_t, so the recurrence
h_t = (1 - z_t) * h_{t-1} + z_t * h~_t is a linear scan over the sequence.
"""

from __future__ import annotations

import numpy as np

from ..nn import BatchNorm, Linear, Module
from ..tensor import Tensor, ops
from ..tensor.ops import _sigmoid


def min_gru_step(h_prev: np.ndarray, x_t: np.ndarray, gate_w: np.ndarray, gate_b: np.ndarray,
                 cand_w: np.ndarray, cand_b: np.ndarray) -> np.ndarray:
    """One recurrence step with (out, in) weight layout."""
    z = _sigmoid(x_t @ gate_w.T + gate_b)
    h_tilde = x_t @ cand_w.T + cand_b
    return (1.0 - z) * h_prev + z * h_tilde


def sequential_scan(a: np.ndarray, b: np.ndarray, h0: np.ndarray) -> np.ndarray:
    """Reference loop for h_t = a_t * h_{t-1} + b_t over axis 1."""
    h = np.empty_like(b)
    prev = h0
    for t in range(a.shape[1]):
        prev = a[:, t] * prev + b[:, t]
        h[:, t] = prev
    return h


def timescale_bias(hidden: int, lookback: int) -> np.ndarray:
    """Gate biases giving update rates log-spaced from 1/2 down to 1/lookback.

    With zero input each unit then averages over a different span of history,
    from the last couple of steps up to the whole window.
    """
    z = np.geomspace(0.5, 1.0 / max(lookback, 2), hidden)
    return np.log(z / (1.0 - z))


class MinGRULayer(Module):
    """One minGRU recurrence: gate and candidate projections of the input."""

    def __init__(self, in_features: int, hidden: int, lookback: int, rng: np.random.Generator):
        self.hidden = hidden
        self.gate = Linear(in_features, hidden, rng)
        self.gate.bias.data[...] = timescale_bias(hidden, lookback)
        self.candidate = Linear(in_features, hidden, rng)

    def coefficients(self, x: Tensor) -> tuple[Tensor, Tensor]:
        z = ops.sigmoid(self.gate(x))
        return 1.0 - z, z * self.candidate(x)

    def forward(self, x: Tensor) -> Tensor:
        a, b = self.coefficients(x)
        h0 = Tensor(np.zeros((x.shape[0], self.hidden), dtype=a.data.dtype))
        return ops.min_gru_scan(a, b, h0)

    def loop(self, x: np.ndarray) -> np.ndarray:
        h = np.zeros((x.shape[0], self.hidden), dtype=x.dtype)
        out = []
        for t in range(x.shape[1]):
            h = min_gru_step(h, x[:, t], self.gate.weight.data, self.gate.bias.data,
                             self.candidate.weight.data, self.candidate.bias.data)
            out.append(h)
        return np.stack(out, axis=1)


class MinGRUCore(Module):
    """Stacked minGRU layers over a univariate series, read out from the last state.

    The first layer sees the scalar series; deeper layers see the previous
    layer's states and add a residual connection.
    """

    consumes_components = False

    def __init__(self, lookback: int, horizon: int, hidden: int, rng: np.random.Generator,
                 in_features: int = 1, layers: int = 2):
        self.hidden = hidden
        self.layers = [MinGRULayer(in_features if i == 0 else hidden, hidden, lookback, rng)
                       for i in range(layers)]
        self.norm = BatchNorm(hidden)
        self.readout = Linear(hidden, horizon, rng)

    def hidden_states(self, u: Tensor) -> Tensor:
        h = u.reshape(u.shape[0], u.shape[1], -1)
        for i, layer in enumerate(self.layers):
            h = layer(h) + h if i else layer(h)
        return h

    def hidden_states_loop(self, u: np.ndarray) -> np.ndarray:
        """Step-by-step recurrence, used to cross-check the scan path."""
        h = np.asarray(u).reshape(u.shape[0], u.shape[1], -1)
        for i, layer in enumerate(self.layers):
            h = layer.loop(h) + h if i else layer.loop(h)
        return h

    def readout_from(self, last: Tensor) -> Tensor:
        return self.readout(self.norm(last))

    def forward(self, u: Tensor) -> Tensor:
        return self.readout_from(self.hidden_states(u)[:, -1])
