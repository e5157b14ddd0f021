"""Layers built on the tensor engine.

Modules discover their parameters by walking instance attributes in
definition order, which makes parameter names (and therefore checkpoints)
stable across runs.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Parameter, Tensor, ops, seeded_init


class Module:
    training = True
    _buffer_names: tuple[str, ...] = ()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Module, Parameter)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Module, Parameter)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for name, value in self._children():
            full = prefix + name
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(full + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name in self._buffer_names:
            yield prefix + name, getattr(self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update({name: buf for name, buf in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(expected) | set(buffers)) - set(state)
        if missing:
            raise DimensionError(f"state is missing entries: {sorted(missing)[:5]}")
        for name, p in expected.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: stored shape {arr.shape} != model shape {p.shape}")
            p.data[...] = arr
        for name, buf in buffers.items():
            arr = np.asarray(state[name])
            if arr.shape != buf.shape:
                raise DimensionError(f"{name}: stored shape {arr.shape} != model shape {buf.shape}")
            buf[...] = arr

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.weight = seeded_init((out_features, in_features), "uniform-fan-in", rng, parameter=True)
        if bias:
            self.bias = seeded_init((out_features,), "uniform-fan-in", rng, fan_in=in_features,
                                    parameter=True)
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.eps = eps
        self.weight = seeded_init((dim,), "ones", parameter=True)
        self.bias = seeded_init((dim,), "zeros", parameter=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.normalize(x, -1, self.eps) * self.weight + self.bias


class BatchNorm(Module):
    """Batch normalisation over every axis except the last (feature) axis."""

    _buffer_names = ("running_mean", "running_var")

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5):
        self.eps = eps
        self.momentum = momentum
        self.weight = seeded_init((dim,), "ones", parameter=True)
        self.bias = seeded_init((dim,), "zeros", parameter=True)
        dtype = self.weight.data.dtype
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        axes = tuple(range(x.ndim - 1))
        if self.training:
            flat = x.data.reshape(-1, x.shape[-1])
            count = flat.shape[0]
            mean = flat.mean(axis=0)
            var = flat.var(axis=0) * (count / max(count - 1, 1))
            self.running_mean *= 1 - self.momentum
            self.running_mean += self.momentum * mean.astype(self.running_mean.dtype)
            self.running_var *= 1 - self.momentum
            self.running_var += self.momentum * var.astype(self.running_var.dtype)
            xhat = ops.normalize(x, axes, self.eps)
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - Tensor(self.running_mean)) * Tensor(inv.astype(self.running_var.dtype))
        return xhat * self.weight + self.bias


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ConfigError(f"model width {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)
        self.last_attention: np.ndarray | None = None

    def _split(self, t: Tensor, n: int, tokens: int) -> Tensor:
        return t.reshape(n, tokens, self.heads, -1).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        n, tokens, dim = x.shape
        head_dim = dim // self.heads
        q = self._split(self.q(x), n, tokens)
        k = self._split(self.k(x), n, tokens)
        v = self._split(self.v(x), n, tokens)
        scores = ops.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(head_dim))
        attn = ops.softmax(scores, axis=-1)
        self.last_attention = attn.data
        ctx = ops.matmul(attn, v).transpose(0, 2, 1, 3).reshape(n, tokens, dim)
        return self.out(ctx)


class EncoderLayer(Module):
    """Pre-norm transformer block: x + MHSA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim: int, heads: int, d_ff: int, rng: np.random.Generator,
                 dropout: float = 0.0):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ff1 = Linear(dim, d_ff, rng)
        self.ff2 = Linear(d_ff, dim, rng)
        self.dropout = dropout
        self._rng = np.random.default_rng(rng.integers(2**31))

    def _drop(self, t: Tensor) -> Tensor:
        if self.training and self.dropout > 0:
            return ops.dropout(t, self.dropout, self._rng)
        return t

    def forward(self, x: Tensor) -> Tensor:
        x = x + self._drop(self.attn(self.norm1(x)))
        return x + self._drop(self.ff2(ops.gelu(self.ff1(self.norm2(x)))))


class Encoder(Module):
    def __init__(self, dim: int, heads: int, d_ff: int, layers: int, rng: np.random.Generator,
                 dropout: float = 0.0):
        self.layers = [EncoderLayer(dim, heads, d_ff, rng, dropout) for _ in range(layers)]
        self.norm = LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return self.norm(x)

    def attention_maps(self) -> list[np.ndarray]:
        return [layer.attn.last_attention for layer in self.layers]
