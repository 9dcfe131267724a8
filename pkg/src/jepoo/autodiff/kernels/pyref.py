"""Numpy reference implementations of the hot kernels.

Same-padded 3x3/1x1 cross-correlation via im2col + BLAS matmul, LSTM with a
per-timestep python loop, and (1, 2) max pooling. The compiled backend in
``_ckernels`` mirrors these signatures; either can serve the graph ops.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ...errors import ShapeError

BACKEND_NAME = "python"


def _check_conv(x, w, b):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input/weights, got {x.shape} / {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"channel mismatch: input has {x.shape[1]}, kernel expects {w.shape[1]}")
    if w.shape[2] not in (1, 3) or w.shape[3] not in (1, 3):
        raise ShapeError(f"kernel sizes limited to 1 and 3, got {w.shape[2:]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} != ({w.shape[0]},)")


def _patches(x, kh, kw):
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # [N,C,T,F,kh,kw]
    n, c, t, f = x.shape
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * t * f, c * kh * kw)


def conv2d_forward(x, w, b):
    _check_conv(x, w, b)
    n, _, t, f = x.shape
    co, _, kh, kw = w.shape
    y = _patches(x, kh, kw) @ w.reshape(co, -1).T + b
    return np.ascontiguousarray(y.reshape(n, t, f, co).transpose(0, 3, 1, 2))


def conv2d_backward(x, w, gy, need_gx=True):
    n, c, t, f = x.shape
    co, _, kh, kw = w.shape
    g = gy.transpose(0, 2, 3, 1).reshape(n * t * f, co)
    gw = (g.T @ _patches(x, kh, kw)).reshape(co, c, kh, kw)
    gb = g.sum(axis=0)
    gx = None
    if need_gx:
        # Full correlation: swap in/out channels and flip the taps.
        w_t = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
        gx = conv2d_forward(gy, w_t, np.zeros(c))
    return gx, gw, gb


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_forward(x, w_ih, w_hh, b, reverse=False):
    """Single-direction LSTM; returns hidden sequence and the backward cache.

    Gate column layout in the 4H axis: input, forget, cell candidate, output.
    """
    n, t, d = x.shape
    h_dim = w_hh.shape[0]
    if w_ih.shape != (d, 4 * h_dim) or w_hh.shape != (h_dim, 4 * h_dim) or b.shape != (4 * h_dim,):
        raise ShapeError(
            f"lstm params mismatch: x {x.shape}, w_ih {w_ih.shape}, "
            f"w_hh {w_hh.shape}, b {b.shape}"
        )
    xw = (x.reshape(n * t, d) @ w_ih + b).reshape(n, t, 4 * h_dim)
    gi = np.empty((n, t, h_dim))
    gf = np.empty((n, t, h_dim))
    gg = np.empty((n, t, h_dim))
    go = np.empty((n, t, h_dim))
    cc = np.empty((n, t, h_dim))
    tc = np.empty((n, t, h_dim))
    h_seq = np.empty((n, t, h_dim))
    h = np.zeros((n, h_dim))
    c = np.zeros((n, h_dim))
    order = range(t - 1, -1, -1) if reverse else range(t)
    for step in order:
        z = xw[:, step] + h @ w_hh
        i = _sigmoid(z[:, :h_dim])
        f = _sigmoid(z[:, h_dim : 2 * h_dim])
        g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        o = _sigmoid(z[:, 3 * h_dim :])
        c = f * c + i * g
        th = np.tanh(c)
        h = o * th
        gi[:, step], gf[:, step], gg[:, step], go[:, step] = i, f, g, o
        cc[:, step], tc[:, step], h_seq[:, step] = c, th, h
    return h_seq, (gi, gf, gg, go, cc, tc, h_seq)


def lstm_backward(x, w_ih, w_hh, cache, gh, reverse=False, need_gx=True):
    gi, gf, gg, go, cc, tc, h_seq = cache
    n, t, d = x.shape
    h_dim = w_hh.shape[0]
    dz_seq = np.empty((n, t, 4 * h_dim))
    h_prev = np.empty((n, t, h_dim))
    dh_rec = np.zeros((n, h_dim))
    dc = np.zeros((n, h_dim))
    order = range(t) if reverse else range(t - 1, -1, -1)
    first = t - 1 if reverse else 0
    for step in order:
        if step == first:
            c_prev = np.zeros((n, h_dim))
            h_prev[:, step] = 0.0
        else:
            back = step + 1 if reverse else step - 1
            c_prev = cc[:, back]
            h_prev[:, step] = h_seq[:, back]
        i, f, g, o = gi[:, step], gf[:, step], gg[:, step], go[:, step]
        th = tc[:, step]
        dh = gh[:, step] + dh_rec
        do = dh * th
        dc = dc + dh * o * (1.0 - th * th)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = dz_seq[:, step]
        dz[:, :h_dim] = di * i * (1.0 - i)
        dz[:, h_dim : 2 * h_dim] = df * f * (1.0 - f)
        dz[:, 2 * h_dim : 3 * h_dim] = dg * (1.0 - g * g)
        dz[:, 3 * h_dim :] = do * o * (1.0 - o)
        dh_rec = dz @ w_hh.T
        dc = dc * f
    flat_dz = dz_seq.reshape(n * t, 4 * h_dim)
    gw_ih = x.reshape(n * t, d).T @ flat_dz
    gw_hh = h_prev.reshape(n * t, h_dim).T @ flat_dz
    gb = flat_dz.sum(axis=0)
    gx = (flat_dz @ w_ih.T).reshape(n, t, d) if need_gx else None
    return gx, gw_ih, gw_hh, gb


def maxpool12_forward(x):
    """Halve the last (frequency) axis by pairwise max; ties go to the lower index."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool expects 4-d input, got {x.shape}")
    f2 = x.shape[3] // 2
    pairs = x[:, :, :, : 2 * f2].reshape(x.shape[0], x.shape[1], x.shape[2], f2, 2)
    arg = (pairs[..., 1] > pairs[..., 0]).astype(np.uint8)
    y = np.take_along_axis(pairs, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), arg


def maxpool12_backward(arg, gy, f_in):
    n, c, t, f2 = gy.shape
    scattered = np.zeros((n, c, t, f2, 2))
    np.put_along_axis(scattered, arg[..., None].astype(np.intp), gy[..., None], axis=-1)
    gx = np.zeros((n, c, t, f_in))
    gx[:, :, :, : 2 * f2] = scattered.reshape(n, c, t, 2 * f2)
    return gx
