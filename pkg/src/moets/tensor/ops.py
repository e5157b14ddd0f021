"""Differentiable operations.

Every function takes tensors (or array-likes, promoted to constants), computes
the forward value with numpy, and registers a closure that maps the output
gradient to one gradient per input.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError
from .core import Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _pair(a, b):
    a = as_tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b, dtype=a.data.dtype)
    return a, b


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return record("add", a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return record("sub", a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return record("mul", ad * bd, (a, b),
                  lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        ga = g / bd
        return _unbroadcast(ga, ad.shape), _unbroadcast(-ga * out, bd.shape)

    return record("div", out, (a, b), back)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return record("pow", ad ** exponent, (a,),
                  lambda g: (g * exponent * ad ** (exponent - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return record("log", np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return record("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch-free stable form: never exponentiates a positive number.
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return record("relu", a.data * mask, (a,), lambda g: (g * mask,))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a) -> Tensor:
    """Tanh approximation of GELU."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return record("gelu", out, (a,), back)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return record("abs", np.abs(a.data), (a,), lambda g: (g * sign,))


# -- reductions and shape manipulation ----------------------------------------

def _expand(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    return record("sum", out, (a,), lambda g: (_expand(g, shape, axis, keepdims),))


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    count = a.data.size // max(out.size, 1)
    return record("mean", out, (a,),
                  lambda g: (_expand(g / count, shape, axis, keepdims),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return record("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return record("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    shape, dtype = a.shape, a.data.dtype
    basic = _is_basic(index)

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return record("getitem", np.ascontiguousarray(a.data[index]), (a,), back)


def take(a, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along ``axis``; ``indices`` may have any shape (it replaces the axis)."""
    a = as_tensor(a)
    indices = np.asarray(indices)
    axis = axis % a.ndim
    shape = a.shape

    def back(g):
        # Move the gathered block to the front, scatter-add, move back.
        g_moved = np.moveaxis(g, tuple(range(axis, axis + indices.ndim)),
                              tuple(range(indices.ndim)))
        full = np.zeros((shape[axis],) + shape[:axis] + shape[axis + 1:], dtype=g.dtype)
        np.add.at(full, indices, g_moved)
        return (np.moveaxis(full, 0, axis),)

    return record("take", np.take(a.data, indices, axis=axis), (a,), back)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors,
                  lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    n = len(tensors)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return record("stack", np.stack([t.data for t in tensors], axis=axis), tensors, back)


# -- linear algebra -------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return record("matmul", ad @ bd, (a, b), back)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` laid out as (out, in)."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear input {x.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out += bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gw = g2.T @ xd.reshape(-1, xd.shape[-1])
        gx = g @ wd if x.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return record("linear", out, inputs, back)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    if not np.all(np.isfinite(a.data)):
        raise NumericError("softmax received non-finite logits")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", out, (a,), back)


def softmax_lastdim(logits) -> Tensor:
    return softmax(logits, axis=-1)


def normalize(a, axes, eps: float) -> Tensor:
    """Zero-mean, unit-variance over ``axes`` (biased variance), no affine."""
    a = as_tensor(a)
    axes = tuple(ax % a.ndim for ax in ((axes,) if np.isscalar(axes) else axes))
    x = a.data
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    count = x.size // mu.size

    def back(g):
        gs = g.sum(axis=axes, keepdims=True)
        gx = (g * xhat).sum(axis=axes, keepdims=True)
        return (inv * (g - gs / count - xhat * gx / count),)

    return record("normalize", xhat, (a,), back)


def dropout(a, rate: float, rng: np.random.Generator) -> Tensor:
    a = as_tensor(a)
    if rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    return record("dropout", a.data * keep, (a,), lambda g: (g * keep,))


# -- sequence kernels -----------------------------------------------------------

def average_matrix(length: int, kernel: int, dtype=np.float64) -> np.ndarray:
    """Matrix M with (M @ x)[t] = centered window-``kernel`` mean of x, edge padded."""
    half = kernel // 2
    m = np.zeros((length, length), dtype=np.float64)
    rows = np.arange(length)
    for offset in range(-half, kernel - half):
        cols = np.clip(rows + offset, 0, length - 1)
        np.add.at(m, (rows, cols), 1.0)
    return (m / kernel).astype(dtype)


def moving_average(a, kernel: int, axis: int = -2) -> Tensor:
    """Centered moving average with replicate padding along ``axis``."""
    a = as_tensor(a)
    axis = axis % a.ndim
    m = average_matrix(a.shape[axis], kernel, a.data.dtype)
    x = np.moveaxis(a.data, axis, -1)
    out = np.ascontiguousarray(np.moveaxis(x @ m.T, -1, axis))

    def back(g):
        gm = np.moveaxis(g, axis, -1) @ m
        return (np.ascontiguousarray(np.moveaxis(gm, -1, axis)),)

    return record("moving_average", out, (a,), back)


def linear_scan(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive associative scan of affine maps h -> a*h + b along axis 1.

    Returns cumulative (A, B) so that h_t = A_t * h_0 + B_t. Pairs compose as
    (a2, b2) after (a1, b1) = (a2*a1, a2*b1 + b2), combined with doubling
    offsets (log-depth Hillis-Steele scan).
    """
    A = np.array(a, copy=True)
    B = np.array(b, copy=True)
    n = A.shape[1]
    offset = 1
    while offset < n:
        B[:, offset:] = A[:, offset:] * B[:, :-offset] + B[:, offset:]
        A[:, offset:] = A[:, offset:] * A[:, :-offset]
        offset *= 2
    return A, B


def min_gru_scan(a, b, h0) -> Tensor:
    """h_t = a_t * h_{t-1} + b_t for a, b of shape [N, T, d] and h0 of shape [N, d]."""
    a, b, h0 = as_tensor(a), as_tensor(b), as_tensor(h0)
    if a.shape != b.shape or a.ndim != 3:
        raise DimensionError(f"scan coefficients disagree: {a.shape} vs {b.shape}")
    if h0.shape != (a.shape[0], a.shape[2]):
        raise DimensionError(f"initial state {h0.shape} does not match {a.shape}")
    ad, h0d = a.data, h0.data
    A, B = linear_scan(ad, b.data)
    h = A * h0d[:, None, :] + B

    def back(g):
        # gb_t = g_t + a_{t+1} * gb_{t+1}: the same recurrence run backwards.
        a_next = np.zeros_like(ad)
        a_next[:, :-1] = ad[:, 1:]
        _, gb_rev = linear_scan(a_next[:, ::-1], g[:, ::-1])
        gb = gb_rev[:, ::-1]
        h_prev = np.concatenate([h0d[:, None, :], h[:, :-1]], axis=1)
        return gb * h_prev, gb, ad[:, 0] * gb[:, 0]

    return record("min_gru_scan", h, (a, b, h0), back)


def slstm_scan(pre, recurrent) -> Tensor:
    """Stabilized exponential-gated scalar LSTM over a whole sequence.

    ``pre`` holds input projections [N, T, 4d] ordered (input, forget, cell,
    output); ``recurrent`` is [d, 4d]. State starts at zero; on the first
    step only the input gate contributes. Returns hidden states [N, T, d].
    """
    pre, recurrent = as_tensor(pre), as_tensor(recurrent)
    n, steps, four_d = pre.shape
    d = four_d // 4
    if recurrent.shape != (d, four_d):
        raise DimensionError(f"recurrent weight {recurrent.shape} does not match {pre.shape}")
    P, R = pre.data, recurrent.data
    dtype = P.dtype
    hs = np.zeros((n, steps + 1, d), dtype)
    cs = np.zeros((n, steps + 1, d), dtype)
    ns = np.zeros((n, steps + 1, d), dtype)
    ig = np.empty((n, steps, d), dtype)
    fg = np.empty((n, steps, d), dtype)
    zt = np.empty((n, steps, d), dtype)
    og = np.empty((n, steps, d), dtype)
    m = np.zeros((n, d), dtype)
    for t in range(steps):
        z = P[:, t] + hs[:, t] @ R
        i_raw, f_raw, c_raw, o_raw = z[:, :d], z[:, d:2 * d], z[:, 2 * d:3 * d], z[:, 3 * d:]
        live = ns[:, t] > 0
        m_new = np.where(live, np.maximum(f_raw + m, i_raw), i_raw)
        i_g = np.exp(i_raw - m_new)
        f_g = np.exp(np.where(live, f_raw + m - m_new, -np.inf))
        z_g = np.tanh(c_raw)
        o_g = _sigmoid(o_raw)
        cs[:, t + 1] = f_g * cs[:, t] + i_g * z_g
        ns[:, t + 1] = f_g * ns[:, t] + i_g
        hs[:, t + 1] = o_g * cs[:, t + 1] / ns[:, t + 1]
        ig[:, t], fg[:, t], zt[:, t], og[:, t] = i_g, f_g, z_g, o_g
        m = m_new
    out = np.ascontiguousarray(hs[:, 1:])

    def back(g):
        # The stabilizer cancels in c/n, so it is treated as a constant.
        dP = np.empty_like(P)
        dR = np.zeros_like(R)
        dh_rec = np.zeros((n, d), dtype)
        dc_next = np.zeros((n, d), dtype)
        dn_next = np.zeros((n, d), dtype)
        for t in range(steps - 1, -1, -1):
            c, nn_ = cs[:, t + 1], ns[:, t + 1]
            i_g, f_g, z_g, o_g = ig[:, t], fg[:, t], zt[:, t], og[:, t]
            dh = g[:, t] + dh_rec
            q = c / nn_
            dq = dh * o_g
            dc = dc_next + dq / nn_
            dn = dn_next - dq * q / nn_
            d_o = dh * q * o_g * (1.0 - o_g)
            d_i = (dc * z_g + dn) * i_g
            d_f = (dc * cs[:, t] + dn * ns[:, t]) * f_g
            d_z = dc * i_g * (1.0 - z_g * z_g)
            dz = np.concatenate([d_i, d_f, d_z, d_o], axis=1)
            dP[:, t] = dz
            dR += hs[:, t].T @ dz
            dh_rec = dz @ R.T
            dc_next = dc * f_g
            dn_next = dn * f_g
        return dP, dR

    return record("slstm_scan", out, (pre, recurrent), back)
