"""Differentiable primitives.

Each primitive computes its forward result with numpy and, when a tape is
active and any input requires a gradient, records a closure that maps the
output gradient to input gradients.  Layout convention for skeleton
features is channels-last: ``(N, T, V, C)``.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from .tensor import Tensor, active_tape, as_tensor


class ShapeError(ValueError):
    """Raised when operand shapes do not agree for a primitive."""


def _wrap(data, parents, backward) -> Tensor:
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(out, parents, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _operands(a, b):
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype if isinstance(b, Tensor) else None))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    sa, sb = a.shape, b.shape
    return _wrap(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    sa, sb = a.shape, b.shape
    return _wrap(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    ad, bd = a.data, b.data
    return _wrap(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def neg(a: Tensor) -> Tensor:
    return _wrap(-a.data, (a,), lambda g: (-g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _wrap(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,),
                 lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _wrap(out, (x,), lambda g: (g * out * (1 - out),))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _wrap(np.log(xd), (x,), lambda g: (g / xd,))


def sqrt(x: Tensor) -> Tensor:
    """Square root whose gradient at exactly zero is taken as zero."""
    out = np.sqrt(x.data)

    def backward(g):
        safe = np.where(out > 0, out, 1)
        return (np.where(out > 0, g / (2 * safe), 0).astype(out.dtype, copy=False),)

    return _wrap(out, (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return _wrap(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


# -- shape ------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return _wrap(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _wrap(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(xs, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _wrap(np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = x.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _wrap(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), np.asarray(1.0 / count, dtype=x.dtype))


mean_pool = mean


def gather_rows(table: Tensor, indices) -> Tensor:
    """``table[indices]`` along axis 0; gradients are scatter-added back."""
    idx = np.asarray(indices, dtype=np.int64)
    m = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= m):
        raise IndexError(f"gather_rows: index {int(idx.max())} out of range for table of {m} rows")
    rest = table.shape[1:]

    def backward(g):
        g2 = np.ascontiguousarray(g.reshape(idx.size, -1))
        flat = _kernels.get("scatter_rows")(g2, idx.ravel(), m)
        return (flat.reshape((m,) + rest),)

    return _wrap(table.data[idx], (table,), backward)


# -- linear algebra ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _operands(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _wrap(ad @ bd, (a, b), backward)


def linear(x, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x`` with a 2-D weight."""
    x = as_tensor(x)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is not None:
        if b.shape != (wd.shape[1],):
            raise ShapeError(f"linear: bias {b.shape} does not match weight {w.shape}")
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return _wrap(out, parents, backward)


def softmax_lastaxis(x: Tensor) -> Tensor:
    xd = x.data
    shifted = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _wrap(out, (x,), backward)


softmax = softmax_lastaxis


def relpos_scores(q: Tensor, rphi: Tensor) -> Tensor:
    """``out[..., h, i, j] = <q[..., h, i, :], rphi[h, i, j, :]>``."""
    *lead, h, v, d = q.shape
    if rphi.shape != (h, v, v, d):
        raise ShapeError(f"relpos_scores: query {q.shape} needs table of shape {(h, v, v, d)}, got {rphi.shape}")
    qd = np.ascontiguousarray(q.data.reshape(-1, h, v, d))
    rd = np.ascontiguousarray(rphi.data)
    out = _kernels.get("relpos_forward")(qd, rd).reshape(*lead, h, v, v)

    def backward(g):
        g4 = np.ascontiguousarray(g.reshape(-1, h, v, v))
        dq, dr = _kernels.get("relpos_backward")(qd, rd, g4)
        return dq.reshape(q.shape), dr

    return _wrap(out, (q, rphi), backward)


# -- layers with fused backward ------------------------------------------------

class BatchNormState:
    """Running statistics for one batch-norm site."""

    def __init__(self, channels: int, dtype, momentum: float = 0.9):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
              training: bool, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over every axis but the last."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm: input {x.shape} with scale {gamma.shape} / shift {beta.shape}")
    xd = x.data
    axes = tuple(range(xd.ndim - 1))
    if training:
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        mom = state.momentum
        state.mean = (mom * state.mean + (1 - mom) * mu).astype(xd.dtype)
        state.var = (mom * state.var + (1 - mom) * var).astype(xd.dtype)
    else:
        mu, var = state.mean, state.var
    inv = (1.0 / np.sqrt(var + eps)).astype(xd.dtype)
    xhat = (xd - mu) * inv
    out = gamma.data * xhat + beta.data
    count = xd.size // c

    def backward(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gamma.data
        if training:
            gx = inv / count * (count * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))
        else:
            gx = gxhat * inv
        return gx, gg, gb

    return _wrap(out, (x, gamma, beta), backward)


def conv1d_dilated(x: Tensor, kernel: Tensor, bias: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Same-padded temporal convolution along axis 1 of ``(N, T, V, C_in)``.

    ``kernel`` has shape ``(k, C_in, C_out)`` with odd ``k``.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv1d_dilated: expected (N, T, V, C) input, got {x.shape}")
    k, ci, co = kernel.shape
    if x.shape[-1] != ci:
        raise ShapeError(f"conv1d_dilated: input channels {x.shape[-1]} != kernel C_in {ci}")
    if k % 2 != 1:
        raise ShapeError(f"conv1d_dilated: kernel size must be odd, got {k}")
    t = x.shape[1]
    pad = dilation * (k - 1) // 2
    xpad = np.pad(x.data, ((0, 0), (pad, pad), (0, 0), (0, 0)))
    wd = kernel.data
    out = _kernels.get("conv_time_forward")(xpad, wd, dilation, t)
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g = np.ascontiguousarray(g)
        dxpad, dw = _kernels.get("conv_time_backward")(xpad, wd, g, dilation)
        gx = dxpad[:, pad:pad + t]
        if bias is None:
            return gx, dw
        return gx, dw, g.sum(axis=(0, 1, 2))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _wrap(out, parents, backward)
