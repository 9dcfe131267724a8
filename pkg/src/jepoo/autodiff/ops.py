"""Differentiable ops over :class:`Tensor`.

Each op computes its forward value with numpy (or a kernel backend call for
conv/lstm/pool) and registers a closure that maps the output gradient to
parent gradients. Shapes are explicit; the only broadcasting is bias
addition inside conv/linear/lstm.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import ShapeError
from . import kernels as K
from .tensor import Graph, Tensor, needs_grad, record_op

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-7


def constant(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


def _same_shape(a: Tensor, b: Tensor, opname: str):
    if a.shape != b.shape:
        raise ShapeError(f"{opname}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = Tensor(a.data + b.data, requires_grad=needs_grad(a, b))
    return record_op(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    out = Tensor(a.data * b.data, requires_grad=needs_grad(a, b))
    return record_op(out, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, requires_grad=needs_grad(a))
    return record_op(out, (a,), lambda g: (g * c,))


def add_const(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + c, requires_grad=needs_grad(a))
    return record_op(out, (a,), lambda g: (g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(x.data * mask, requires_grad=needs_grad(x))
    return record_op(out, (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = np.empty_like(x.data)
    pos = x.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    y[~pos] = ez / (1.0 + ez)
    out = Tensor(y, requires_grad=needs_grad(x))
    return record_op(out, (x,), lambda g: (g * y * (1.0 - y),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.data.shape == () or x.data.shape[axis] == 0:
        raise ShapeError(f"softmax over an empty axis: shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, requires_grad=needs_grad(x))

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return record_op(out, (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x[..., D] @ w[D, M] + b[M]; leading dimensions are preserved."""
    d, m = w.shape
    if x.shape[-1] != d:
        raise ShapeError(f"linear: input features {x.shape[-1]} != weight rows {d}")
    if b.shape != (m,):
        raise ShapeError(f"linear: bias shape {b.shape} != ({m},)")
    lead = x.shape[:-1]
    xf = x.data.reshape(-1, d)
    out = Tensor((xf @ w.data + b.data).reshape(*lead, m), requires_grad=needs_grad(x, w, b))

    def backward(g):
        gf = g.reshape(-1, m)
        gx = (gf @ w.data.T).reshape(x.shape) if x.requires_grad else None
        gw = xf.T @ gf if w.requires_grad else None
        gb = gf.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return record_op(out, (x, w, b), backward)


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat of an empty list")
    out = Tensor(
        np.concatenate([p.data for p in parts], axis=axis), requires_grad=needs_grad(*parts)
    )
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return record_op(out, tuple(parts), backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), requires_grad=needs_grad(x))
    return record_op(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)), requires_grad=needs_grad(x))
    return record_op(out, (x,), lambda g: (g.transpose(inv),))


def tsum(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum()), requires_grad=needs_grad(x))
    return record_op(out, (x,), lambda g: (np.broadcast_to(g, x.shape),))


def tmean(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.mean()), requires_grad=needs_grad(x))
    n = x.size
    return record_op(out, (x,), lambda g: (np.broadcast_to(g / n, x.shape),))


def abs_pow(x: Tensor, p: float) -> Tensor:
    """Elementwise |x|^p for p >= 1 (gradient 0 at the kink)."""
    ax = np.abs(x.data)
    out = Tensor(ax**p, requires_grad=needs_grad(x))

    def backward(g):
        return (g * p * np.where(ax > 0, ax ** (p - 1), 0.0) * np.sign(x.data),)

    return record_op(out, (x,), backward)


def stack_scalars(parts: list[Tensor]) -> Tensor:
    """Pack scalar tensors into a 1-d tensor of length len(parts)."""
    return concat([reshape(p, (1,)) for p in parts], axis=0)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded cross-correlation: x[N,C,T,F], w[C',C,kh,kw], b[C']."""
    out = Tensor(K.conv2d_forward(x.data, w.data, b.data), requires_grad=needs_grad(x, w, b))

    def backward(g):
        gx, gw, gb = K.conv2d_backward(x.data, w.data, g, need_gx=x.requires_grad)
        return gx, (gw if w.requires_grad else None), (gb if b.requires_grad else None)

    return record_op(out, (x, w, b), backward)


def maxpool12(x: Tensor) -> Tensor:
    y, arg = K.maxpool12_forward(x.data)
    out = Tensor(y, requires_grad=needs_grad(x))
    f_in = x.shape[3]
    return record_op(out, (x,), lambda g: (K.maxpool12_backward(arg, g, f_in),))


def lstm(x: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """One LSTM direction over x[N,T,D] -> h[N,T,H], zero initial state."""
    h, cache = K.lstm_forward(x.data, w_ih.data, w_hh.data, b.data, reverse=reverse)
    out = Tensor(h, requires_grad=needs_grad(x, w_ih, w_hh, b))

    def backward(g):
        gx, gwi, gwh, gb = K.lstm_backward(
            x.data, w_ih.data, w_hh.data, cache, g, reverse=reverse, need_gx=x.requires_grad
        )
        return (
            gx,
            gwi if w_ih.requires_grad else None,
            gwh if w_hh.requires_grad else None,
            gb if b.requires_grad else None,
        )

    return record_op(out, (x, w_ih, w_hh, b), backward)


def bilstm(x: Tensor, fwd: tuple[Tensor, Tensor, Tensor], bwd: tuple[Tensor, Tensor, Tensor]) -> Tensor:
    """Bidirectional LSTM: concat of a forward and a time-reversed pass."""
    return concat([lstm(x, *fwd, reverse=False), lstm(x, *bwd, reverse=True)], axis=-1)


def _clamped(pred: Tensor):
    p = np.clip(pred.data, CLAMP_EPS, 1.0 - CLAMP_EPS)
    in_range = (pred.data > CLAMP_EPS) & (pred.data < 1.0 - CLAMP_EPS)
    clamped = pred.size - int(in_range.sum())
    if clamped:
        log.debug("clamped %d prediction(s) to [%.0e, 1-%.0e]", clamped, CLAMP_EPS, CLAMP_EPS)
    return p, in_range


def bce(pred: Tensor, target: np.ndarray, alpha: float = 1.0, positive_only: bool = False) -> Tensor:
    """Mean binary cross-entropy with weight ``alpha`` on the positive term."""
    y = np.asarray(target, dtype=np.float64)
    if y.shape != pred.shape:
        raise ShapeError(f"bce: target shape {y.shape} != prediction shape {pred.shape}")
    p, in_range = _clamped(pred)
    terms = -alpha * y * np.log(p)
    if not positive_only:
        terms -= (1.0 - y) * np.log(1.0 - p)
    out = Tensor(np.asarray(terms.mean()), requires_grad=needs_grad(pred))
    n = pred.size

    def backward(g):
        dp = -alpha * y / p
        if not positive_only:
            dp += (1.0 - y) / (1.0 - p)
        return (g * dp * in_range / n,)

    return record_op(out, (pred,), backward)


def focal(
    pred: Tensor,
    target: np.ndarray,
    alpha: float = 1.0,
    gamma: float = 2.0,
    positive_only: bool = False,
) -> Tensor:
    """Mean focal loss: (1-p)^gamma modulation on positives, p^gamma on negatives."""
    y = np.asarray(target, dtype=np.float64)
    if y.shape != pred.shape:
        raise ShapeError(f"focal: target shape {y.shape} != prediction shape {pred.shape}")
    p, in_range = _clamped(pred)
    q = 1.0 - p
    terms = -alpha * y * q**gamma * np.log(p)
    if not positive_only:
        terms -= (1.0 - y) * p**gamma * np.log(q)
    out = Tensor(np.asarray(terms.mean()), requires_grad=needs_grad(pred))
    n = pred.size

    def backward(g):
        if gamma == 0.0:
            dp = -alpha * y / p
            if not positive_only:
                dp += (1.0 - y) / q
        else:
            dp = alpha * y * (gamma * q ** (gamma - 1.0) * np.log(p) - q**gamma / p)
            if not positive_only:
                dp += (1.0 - y) * (p**gamma / q - gamma * p ** (gamma - 1.0) * np.log(q))
        return (g * dp * in_range / n,)

    return record_op(out, (pred,), backward)
