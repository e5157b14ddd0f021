"""Scalar LSTM with exponential gating (the sLSTM cell of the xLSTM family).

Gate preactivations are ordered (input, forget, cell, output). The forget
preactivation acts in log space, and the stabilizer m keeps every exponent
non-positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import BatchNorm, Linear, Module
from ..tensor import Tensor, ops, seeded_init
from ..tensor.ops import _sigmoid


@dataclass
class SLstmState:
    c: np.ndarray
    n: np.ndarray
    m: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, shape, dtype=np.float64) -> SLstmState:
        z = np.zeros(shape, dtype=dtype)
        return cls(z.copy(), z.copy(), z.copy(), z.copy())


def slstm_cell(state: SLstmState, i_raw, f_raw, z_raw, o_raw) -> SLstmState:
    # an empty state (n = 0) carries no memory, so only the input gate counts
    live = state.n > 0
    m = np.where(live, np.maximum(f_raw + state.m, i_raw), i_raw)
    i_g = np.exp(i_raw - m)
    f_g = np.exp(np.where(live, f_raw + state.m - m, -np.inf))
    c = f_g * state.c + i_g * np.tanh(z_raw)
    n = f_g * state.n + i_g
    h = _sigmoid(np.asarray(o_raw)) * (c / n)
    return SLstmState(c, n, m, h)


def slstm_cell_naive(c, n, i_raw, f_raw, z_raw, o_raw):
    """Unstabilized form; only safe for bounded preactivations."""
    i_g, f_g = np.exp(i_raw), np.exp(f_raw)
    c = f_g * c + i_g * np.tanh(z_raw)
    n = f_g * n + i_g
    return c, n, _sigmoid(np.asarray(o_raw)) * (c / n)


def slstm_step(state: SLstmState, x_t: np.ndarray, w_in: np.ndarray, b_in: np.ndarray,
               recurrent: np.ndarray) -> SLstmState:
    pre = x_t @ w_in.T + b_in + state.h @ recurrent
    d = state.h.shape[-1]
    return slstm_cell(state, pre[..., :d], pre[..., d:2 * d], pre[..., 2 * d:3 * d], pre[..., 3 * d:])


class SLSTMCore(Module):
    consumes_components = False

    def __init__(self, lookback: int, horizon: int, hidden: int, rng: np.random.Generator,
                 in_features: int = 1):
        self.hidden = hidden
        self.input_proj = Linear(in_features, 4 * hidden, rng)
        bias = self.input_proj.bias.data
        bias[:2 * hidden] = 0.0  # input and forget gates
        bias[3 * hidden:] = 0.0  # output gate
        self.recurrent = seeded_init((hidden, 4 * hidden), "uniform-fan-in", rng, fan_in=hidden,
                                     parameter=True)
        self.norm = BatchNorm(hidden)
        self.readout = Linear(hidden, horizon, rng)

    def hidden_states(self, u: Tensor) -> Tensor:
        pre = self.input_proj(u.reshape(u.shape[0], u.shape[1], -1))
        return ops.slstm_scan(pre, self.recurrent)

    def forward(self, u: Tensor) -> Tensor:
        return self.readout(self.norm(self.hidden_states(u)[:, -1]))
