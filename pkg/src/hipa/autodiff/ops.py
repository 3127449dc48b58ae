"""Differentiable operations over `Tensor`.

Every function here runs a plain numpy forward pass and, when recording is
active, registers a gradient closure via `record`. Convolution is im2col +
BLAS matmul; its input gradient scatters per kernel offset, which keeps the
backward pass vectorized.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from ..errors import InvalidHyperparam, ShapeMismatch
from .tensor import Tensor, record

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (adjoint of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        out_shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")
    if out_shape != a.shape and out_shape != b.shape:
        raise ShapeMismatch(
            f"{op}: broadcast of {a.shape} and {b.shape} widens both operands"
        )


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        return record(a.data + b, (a,), lambda g: (g,))
    b = _as_tensor(b)
    _check_broadcast(a, b, "add")

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record(a.data + b.data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        return record(a.data - b, (a,), lambda g: (g,))
    b = _as_tensor(b)
    _check_broadcast(a, b, "sub")

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record(a.data - b.data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        s = float(b)
        return record(a.data * s, (a,), lambda g: (g * s,))
    b = _as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return record(ad * bd, (a, b), grad_fn)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return record(-a.data, (a,), lambda g: (-g,))


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)
    return record(np.abs(a.data), (a,), lambda g: (g * sign,))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        for ax in sorted(ax % len(shape) for ax in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    shape = a.shape

    def grad_fn(g):
        return (_expand_reduced(g, shape, axis, keepdims).astype(g.dtype, copy=False),)

    return record(a.data.sum(axis=axis, keepdims=keepdims), (a,), grad_fn)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    shape = a.shape
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= shape[ax]
    inv = 1.0 / count

    def grad_fn(g):
        return (_expand_reduced(g, shape, axis, keepdims) * inv,)

    return record(a.data.mean(axis=axis, keepdims=keepdims), (a,), grad_fn)


def global_avg_pool(a) -> Tensor:
    """Per-channel spatial mean of an (n, c, h, w) map, kept as (n, c, 1, 1)."""
    a = _as_tensor(a)
    if a.ndim != 4:
        raise ShapeMismatch(f"global_avg_pool expects (n,c,h,w), got {a.shape}")
    return mean(a, axis=(2, 3), keepdims=True)


# ---------------------------------------------------------------------------
# contractions
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul operands need at least 2 dims")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(
            f"matmul inner dims disagree: {a.shape} vs {b.shape}"
        )
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch(f"matmul batch dims disagree: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record(np.matmul(ad, bd), (a, b), grad_fn)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv_out_extent(n, k, stride, padding, dilation):
    span = dilation * (k - 1) + 1
    if n + 2 * padding < span:
        raise ShapeMismatch(
            f"input extent {n} with padding {padding} is smaller than the "
            f"receptive span {span}"
        )
    return (n + 2 * padding - span) // stride + 1


def _im2col(xp, kh, kw, stride, dilation, out_h, out_w):
    """View of the padded input as (n, c, kh, kw, out_h, out_w). No copy."""
    n, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    shape = (n, c, kh, kw, out_h, out_w)
    strides = (s0, s1, s2 * dilation, s3 * dilation, s2 * stride, s3 * stride)
    return np.lib.stride_tricks.as_strided(xp, shape, strides)


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0,
           dilation: int = 1) -> Tensor:
    """2-D cross-correlation with zero padding.

    x: (n, c_in, h, w); weight: (c_out, c_in, kh, kw); bias: (c_out,).
    """
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    bias = _as_tensor(bias) if bias is not None else None
    if stride < 1 or dilation < 1:
        raise InvalidHyperparam(f"stride/dilation must be >= 1, got {stride}/{dilation}")
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-d x and weight, got {x.shape}, {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ShapeMismatch(f"conv2d channels disagree: input {c_in}, weight {c_in_w}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeMismatch(f"conv2d bias must be ({c_out},), got {bias.shape}")
    out_h = _conv_out_extent(h, kh, stride, padding, dilation)
    out_w = _conv_out_extent(w, kw, stride, padding, dilation)

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, stride, dilation, out_h, out_w)
    cols2 = cols.reshape(n, c_in * kh * kw, out_h * out_w)  # copies
    w2 = weight.data.reshape(c_out, c_in * kh * kw)
    out = np.matmul(w2, cols2).reshape(n, c_out, out_h, out_w)
    if bias is not None:
        out += bias.data.reshape(1, c_out, 1, 1)

    padded_shape = xp.shape

    def grad_fn(g):
        g2 = g.reshape(n, c_out, out_h * out_w)
        grad_w = np.einsum("nol,nkl->ok", g2, cols2).reshape(weight.shape)
        grad_b = g.sum(axis=(0, 2, 3)) if bias is not None else None
        dcols = np.matmul(w2.T, g2).reshape(n, c_in, kh, kw, out_h, out_w)
        dxp = np.zeros(padded_shape, dtype=g.dtype)
        for ki in range(kh):
            hi = ki * dilation
            for kj in range(kw):
                wj = kj * dilation
                dxp[:, :, hi:hi + stride * out_h:stride,
                    wj:wj + stride * out_w:stride] += dcols[:, :, ki, kj]
        if padding:
            dx = dxp[:, :, padding:padding + h, padding:padding + w]
        else:
            dx = dxp
        if bias is not None:
            return dx, grad_w, grad_b
        return dx, grad_w

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return record(out, inputs, grad_fn)


def depthwise_conv2d(x, weight, bias=None, padding: int = 0) -> Tensor:
    """Per-channel 3x3-style convolution: weight (c, kh, kw), stride 1."""
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    bias = _as_tensor(bias) if bias is not None else None
    if x.ndim != 4 or weight.ndim != 3:
        raise ShapeMismatch(f"depthwise_conv2d expects 4-d x, 3-d weight, got {x.shape}, {weight.shape}")
    n, c, h, w = x.shape
    cw, kh, kw = weight.shape
    if c != cw:
        raise ShapeMismatch(f"depthwise channels disagree: input {c}, weight {cw}")
    out_h = _conv_out_extent(h, kh, 1, padding, 1)
    out_w = _conv_out_extent(w, kw, 1, padding, 1)
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, 1, 1, out_h, out_w)
    out = np.einsum("nckloq,ckl->ncoq", cols, weight.data)
    if bias is not None:
        out += bias.data.reshape(1, c, 1, 1)
    padded_shape = xp.shape
    wd = weight.data

    def grad_fn(g):
        grad_w = np.einsum("ncoq,nckloq->ckl", g, cols)
        grad_b = g.sum(axis=(0, 2, 3)) if bias is not None else None
        dxp = np.zeros(padded_shape, dtype=g.dtype)
        for ki in range(kh):
            for kj in range(kw):
                dxp[:, :, ki:ki + out_h, kj:kj + out_w] += (
                    g * wd[:, ki, kj].reshape(1, c, 1, 1)
                )
        dx = dxp[:, :, padding:padding + h, padding:padding + w] if padding else dxp
        if bias is not None:
            return dx, grad_w, grad_b
        return dx, grad_w

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return record(out, inputs, grad_fn)


# ---------------------------------------------------------------------------
# activations and normalization
# ---------------------------------------------------------------------------

def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return record(np.where(mask, a.data, 0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = special.expit(a.data)
    return record(y, (a,), lambda g: (g * y * (1.0 - y),))


def gelu(a) -> Tensor:
    """Gaussian-CDF form: x * Phi(x), with the exact erf (no tanh fit)."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + special.erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI

    def grad_fn(g):
        return (g * (cdf + x * pdf),)

    return record(x * cdf, (a,), grad_fn)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeMismatch(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return record(y, (a,), grad_fn)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    x = _as_tensor(x)
    gamma = _as_tensor(gamma)
    beta = _as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(
            f"layer_norm affine params must be ({d},), got {gamma.shape}/{beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = xc * ivar
    out = xhat * gamma.data + beta.data
    gd = gamma.data

    def grad_fn(g):
        lead = tuple(range(g.ndim - 1))
        grad_beta = g.sum(axis=lead)
        grad_gamma = (g * xhat).sum(axis=lead)
        dxhat = g * gd
        dx = ivar * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, grad_gamma, grad_beta

    return record(out, (x, gamma, beta), grad_fn)


# ---------------------------------------------------------------------------
# rearrangements
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"cannot reshape {old} into {shape}")
    return record(out, (a,), lambda g: (g.reshape(old),))


def permute(a, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeMismatch(f"permute axes {axes} invalid for ndim {a.ndim}")
    inverse = tuple(np.argsort(axes))
    return record(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    ndim = tensors[0].ndim
    axis = axis % ndim
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if t.ndim != ndim or other[:axis] + other[axis + 1:] != base[:axis] + base[axis + 1:]:
            raise ShapeMismatch(
                f"concat shapes disagree off axis {axis}: "
                f"{[t.shape for t in tensors]}"
            )
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), grad_fn)


def slice_(a, bounds) -> Tensor:
    """Contiguous sub-block: bounds is one (start, stop) or None per axis."""
    a = _as_tensor(a)
    if len(bounds) != a.ndim:
        raise ShapeMismatch(f"slice bounds rank {len(bounds)} != tensor rank {a.ndim}")
    index = []
    for ax, b in enumerate(bounds):
        if b is None:
            index.append(slice(None))
            continue
        start, stop = b
        if not 0 <= start < stop <= a.shape[ax]:
            raise ShapeMismatch(
                f"slice ({start},{stop}) out of range for axis {ax} of {a.shape}"
            )
        index.append(slice(start, stop))
    index = tuple(index)
    shape = a.shape

    def grad_fn(g):
        dx = np.zeros(shape, dtype=g.dtype)
        dx[index] = g
        return (dx,)

    return record(a.data[index].copy(), (a,), grad_fn)


def _reflect_index(n: int, before: int, after: int) -> np.ndarray:
    if before >= n or after >= n:
        raise ShapeMismatch(
            f"reflect pad ({before},{after}) too large for extent {n}"
        )
    head = np.arange(before, 0, -1)
    mid = np.arange(n)
    tail = np.arange(n - 2, n - 2 - after, -1)
    return np.concatenate([head, mid, tail])


def pad_reflect(a, pad_width) -> Tensor:
    """Reflect padding (edge values not repeated), one (before, after) per axis."""
    a = _as_tensor(a)
    if len(pad_width) != a.ndim:
        raise ShapeMismatch(f"pad rank {len(pad_width)} != tensor rank {a.ndim}")
    idx = [
        _reflect_index(n, before, after)
        for n, (before, after) in zip(a.shape, pad_width)
    ]
    gather = np.ix_(*idx)
    shape = a.shape

    def grad_fn(g):
        dx = np.zeros(shape, dtype=g.dtype)
        np.add.at(dx, gather, g)
        return (dx,)

    return record(a.data[gather], (a,), grad_fn)


def _shuffle_forward(x, r):
    n, crr, h, w = x.shape
    c = crr // (r * r)
    t = x.reshape(n, c, r, r, h, w)
    t = t.transpose(0, 1, 4, 2, 5, 3)  # (n, c, h, r, w, r)
    return np.ascontiguousarray(t).reshape(n, c, h * r, w * r)


def _shuffle_inverse(y, r):
    n, c, hr, wr = y.shape
    h, w = hr // r, wr // r
    t = y.reshape(n, c, h, r, w, r)
    t = t.transpose(0, 1, 3, 5, 2, 4)  # (n, c, r, r, h, w)
    return np.ascontiguousarray(t).reshape(n, c * r * r, h, w)


def pixel_shuffle(a, r: int) -> Tensor:
    """Periodic shuffle (n, c*r^2, h, w) -> (n, c, h*r, w*r)."""
    a = _as_tensor(a)
    if a.ndim != 4 or r < 1:
        raise ShapeMismatch(f"pixel_shuffle expects 4-d input, got {a.shape}")
    if a.shape[1] % (r * r) != 0:
        raise ShapeMismatch(
            f"pixel_shuffle channels {a.shape[1]} not divisible by r^2={r * r}"
        )
    return record(_shuffle_forward(a.data, r), (a,), lambda g: (_shuffle_inverse(g, r),))


def pixel_unshuffle(a, r: int) -> Tensor:
    """Exact inverse of pixel_shuffle."""
    a = _as_tensor(a)
    if a.ndim != 4 or a.shape[2] % r != 0 or a.shape[3] % r != 0:
        raise ShapeMismatch(f"pixel_unshuffle needs spatial dims divisible by {r}, got {a.shape}")
    return record(_shuffle_inverse(a.data, r), (a,), lambda g: (_shuffle_forward(g, r),))
