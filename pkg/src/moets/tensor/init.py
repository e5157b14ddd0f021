from __future__ import annotations

import numpy as np

from .core import Parameter, Tensor, get_dtype

SCHEMES = ("uniform-fan-in", "zeros", "ones")


def seeded_init(shape, scheme: str = "uniform-fan-in", seed=0, fan_in: int | None = None,
                parameter: bool = False) -> Tensor:
    """Deterministic tensor initialisation.

    ``uniform-fan-in`` draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in
    defaults to the last extent, matching the (out, in) weight layout.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if scheme == "zeros":
        data = np.zeros(shape)
    elif scheme == "ones":
        data = np.ones(shape)
    elif scheme == "uniform-fan-in":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        fan = fan_in if fan_in is not None else shape[-1]
        bound = 1.0 / np.sqrt(max(fan, 1))
        data = rng.uniform(-bound, bound, size=shape)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {SCHEMES}")
    data = data.astype(get_dtype())
    return Parameter(data) if parameter else Tensor(data)
