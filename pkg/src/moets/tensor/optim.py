"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from .core import Parameter


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """Update ``params`` in place and advance ``state`` by one step."""
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractError(f"parameter {p.shape} and gradient {g.shape} disagree")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)


class Adam:
    """Stateful optimizer over a fixed, ordered list of parameters.

    Parameters without a gradient after backward are treated as having a zero
    gradient, so the moment estimates still decay.
    """

    def __init__(self, params: list[Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"step": np.array([self.state.t], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(self.state.m, self.state.v)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.state.t = int(arrays["step"].reshape(-1)[0])
        n = len(self.params)
        if self.state.t == 0 or "m.0" not in arrays:
            self.state.m, self.state.v = [], []
            return
        self.state.m = [np.array(arrays[f"m.{i}"], dtype=self.params[i].data.dtype) for i in range(n)]
        self.state.v = [np.array(arrays[f"v.{i}"], dtype=self.params[i].data.dtype) for i in range(n)]
