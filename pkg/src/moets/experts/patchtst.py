from __future__ import annotations

import numpy as np

from ..nn import BatchNorm, Encoder, Linear, Module
from ..preprocess import PatchConfig, patch_indices
from ..tensor import Tensor, ops, seeded_init


class PatchTSTCore(Module):
    """Channel-independent patch transformer on univariate series [N, L] -> [N, T]."""

    consumes_components = False

    def __init__(self, lookback: int, horizon: int, patch: PatchConfig, d_model: int, heads: int,
                 layers: int, d_ff: int, rng: np.random.Generator, dropout: float = 0.0):
        self.index = patch_indices(lookback, patch)
        n = self.index.shape[0]
        self.embed = Linear(patch.patch_len, d_model, rng)
        self.position = seeded_init((n, d_model), "uniform-fan-in", rng, parameter=True)
        self.norm = BatchNorm(d_model)
        self.encoder = Encoder(d_model, heads, d_ff, layers, rng, dropout)
        self.head = Linear(n * d_model, horizon, rng)

    @property
    def num_patches(self) -> int:
        return self.index.shape[0]

    def encode_patches(self, patches: Tensor) -> Tensor:
        """Token representations [N, n, d] just before the flatten head."""
        z = self.embed(patches) + self.position
        return self.encoder(self.norm(z))

    def forward(self, u: Tensor) -> Tensor:
        tokens = self.encode_patches(ops.take(u, self.index, axis=1))
        return self.head(tokens.reshape(u.shape[0], -1))

    def attention_maps(self) -> list[np.ndarray]:
        return self.encoder.attention_maps()
