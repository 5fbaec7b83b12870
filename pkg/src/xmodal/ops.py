"""Differentiable operations over ``Tensor``.

Forward math is plain numpy; each op registers a backward closure on the
active tape.  Elementwise binary ops broadcast like numpy and their
backward sums gradients back down to the operand shapes (``_unbroadcast``).
``matmul`` follows ``np.matmul`` stacking semantics so a weight matrix
[k, n] applied to a batch [B, m, k] needs no explicit tiling.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .rng import Rng
from .tensor import Tensor, apply_op, check_matmul_shapes


def constant(value) -> Tensor:
    """Wrap a value as a non-trainable tensor."""
    return Tensor(value, requires_grad=False)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return apply_op("add", (a, b), out, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return apply_op("sub", (a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return apply_op("mul", (a, b), out, bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return apply_op("div", (a, b), out, bwd)


def neg(a: Tensor) -> Tensor:
    return apply_op("neg", (a,), -a.data, lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return apply_op("scale", (a,), a.data * s, lambda g: (g * s,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return apply_op("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return apply_op("log", (a,), np.log(a.data), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return apply_op("sqrt", (a,), out, lambda g: (g * 0.5 / out,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return apply_op("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return apply_op("relu", (a,), a.data * mask, bwd)


def absolute(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return apply_op("abs", (a,), np.abs(a.data), lambda g: (g * sign,))


def square(a: Tensor) -> Tensor:
    return apply_op("square", (a,), a.data * a.data, lambda g: (g * 2.0 * a.data,))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())

    def bwd(g):
        return (np.broadcast_to(g, a.shape).astype(np.float64),)

    return apply_op("sum", (a,), out, bwd)


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(np.float64),)

    return apply_op("sum_axis", (a,), out, bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean())

    def bwd(g):
        return (np.broadcast_to(g / n, a.shape).astype(np.float64),)

    return apply_op("mean", (a,), out, bwd)


def mean_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = a.shape[axis]
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).astype(np.float64),)

    return apply_op("mean_axis", (a,), out, bwd)


# ---------------------------------------------------------------------------
# linear algebra and shape
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    check_matmul_shapes("matmul", a, b)
    out = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return apply_op("matmul", (a, b), out, bwd)


def transpose_last2(a: Tensor) -> Tensor:
    if a.data.ndim < 2:
        raise DimensionError(f"transpose_last2 needs ndim >= 2, got {a.shape}")
    out = np.swapaxes(a.data, -1, -2)
    return apply_op("transpose", (a,), np.ascontiguousarray(out),
                    lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = a.data.reshape(shape)
    return apply_op("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    arrs = [t.data for t in tensors]
    out = np.concatenate(arrs, axis=axis)
    sizes = [arr.shape[axis] for arr in arrs]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=axis))

    return apply_op("concat", tuple(tensors), out, bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = np.ascontiguousarray(a.data[index])

    def bwd(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return apply_op("slice", (a,), out, bwd)


def take_step(a: Tensor, index) -> Tensor:
    """Select one time step: row `index` of a [T, d] tensor, or per-sample
    rows of a [B, T, d] tensor given an integer array of length B."""
    if a.data.ndim == 2:
        i = int(index)
        out = a.data[i].copy()

        def bwd(g):
            full = np.zeros_like(a.data)
            full[i] = g
            return (full,)

        return apply_op("take_step", (a,), out, bwd)
    if a.data.ndim == 3:
        idx = np.asarray(index, dtype=np.int64)
        rows = np.arange(a.shape[0])
        out = a.data[rows, idx].copy()

        def bwd(g):
            full = np.zeros_like(a.data)
            full[rows, idx] = g
            return (full,)

        return apply_op("take_step", (a,), out, bwd)
    raise DimensionError(f"take_step expects 2D or 3D input, got {a.shape}")


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------

def _masked_logits(data: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return data
    return np.where(mask, data, -np.inf)


def softmax_rows(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Row-stochastic softmax over the last axis, max-subtracted for
    stability.  `mask` (boolean, broadcastable) excludes positions; each row
    must keep at least one allowed position."""
    z = _masked_logits(a.data, mask)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - dot) * out,)

    return apply_op("softmax_rows", (a,), out, bwd)


def log_softmax(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    z = _masked_logits(a.data, mask)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bwd(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return apply_op("log_softmax", (a,), out, bwd)


# ---------------------------------------------------------------------------
# structured layers (fused forward/backward)
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and shift."""
    if x.shape[-1] != gain.shape[-1] or x.shape[-1] != shift.shape[-1]:
        raise DimensionError.mismatch("layer_norm", x.shape, gain.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + shift.data

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dshift = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, dgain, dshift

    return apply_op("layer_norm", (x, gain, shift), out, bwd)


def conv1d_same(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """1D temporal convolution with zero same-padding.

    x: [T, c_in] or [B, T, c_in]; weight: [k, c_in, c_out]; bias: [c_out].
    Output length equals input length for odd k.
    """
    k, c_in, c_out = weight.shape
    if x.shape[-1] != c_in:
        raise DimensionError.mismatch("conv1d_same", x.shape, weight.shape)
    if k % 2 == 0:
        raise ContractError(f"conv1d_same requires odd kernel size, got {k}")
    t_len = x.shape[-2]
    pad = k // 2
    pad_spec = [(0, 0)] * x.data.ndim
    pad_spec[-2] = (pad, pad)
    xp = np.pad(x.data, pad_spec)
    out = np.broadcast_to(bias.data, x.shape[:-1] + (c_out,)).copy()
    for j in range(k):
        out += np.matmul(xp[..., j:j + t_len, :], weight.data[j])

    def bwd(g):
        lead = tuple(range(g.ndim - 1))
        dbias = g.sum(axis=lead)
        dweight = np.empty_like(weight.data)
        dxp = np.zeros_like(xp)
        for j in range(k):
            window = xp[..., j:j + t_len, :]
            if g.ndim == 3:
                dweight[j] = np.einsum("bti,bto->io", window, g)
            else:
                dweight[j] = window.T @ g
            dxp[..., j:j + t_len, :] += np.matmul(g, weight.data[j].T)
        dx = np.ascontiguousarray(dxp[..., pad:pad + t_len, :])
        return dx, dweight, dbias

    return apply_op("conv1d_same", (x, weight, bias), out, bwd)


def dropout(x: Tensor, p: float, training: bool, rng: Optional[Rng] = None) -> Tensor:
    """Inverted dropout: eval mode and p == 0 are the identity (no tape
    entry, no RNG draw); train mode zeroes entries with probability p and
    scales survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode requires an rng")
    keep = (rng.uniform(x.shape) >= p) / (1.0 - p)

    def bwd(g):
        return (g * keep,)

    return apply_op("dropout", (x,), x.data * keep, bwd)
