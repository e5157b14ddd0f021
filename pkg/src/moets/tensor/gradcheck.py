from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tape, Tensor, backward, precision


def numeric_gradient(fn: Callable[[], float], array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. every entry of ``array`` (mutated in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn()
        flat[i] = orig - h
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-10)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], h: float = 1e-5,
                    seed: int = 0) -> list[float]:
    """Compare tape gradients of ``sum(fn(*inputs) * w)`` against finite differences.

    A fixed random projection ``w`` turns any output into a scalar without
    symmetric cancellations. Runs in 64-bit mode; returns one relative error
    per input.
    """
    with precision("float64"):
        arrays = [np.array(a, dtype=np.float64) for a in inputs]
        probe = fn(*[Tensor(a) for a in arrays])
        w = np.random.default_rng(seed).standard_normal(probe.shape)

        def scalar() -> float:
            return float((fn(*[Tensor(a) for a in arrays]).data * w).sum())

        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        with Tape() as tape:
            loss = (fn(*tensors) * Tensor(w)).sum()
        backward(tape, loss)
        errors = []
        for t, a in zip(tensors, arrays):
            analytic = t.grad if t.grad is not None else np.zeros_like(a)
            errors.append(relative_error(analytic, numeric_gradient(scalar, a, h)))
        return errors
