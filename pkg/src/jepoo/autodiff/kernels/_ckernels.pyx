# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: same-padded conv2d, LSTM, and (1,2) max pooling.

Heavy matmuls go through BLAS dgemm; the surrounding gather/scatter and the
LSTM pointwise gate math run as C loops, which is where the numpy backend
loses time. Results match ``pyref`` to rounding error.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

from ...errors import ShapeError

cnp.import_array()

BACKEND_NAME = "compiled"


cdef void _gemm(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
                bint ta, bint tb, double alpha, double beta) noexcept nogil:
    # Row-major C = alpha * op(A) @ op(B) + beta * C via column-major BLAS:
    # compute C^T = op(B)^T @ op(A)^T in Fortran order.
    cdef int m, n, k, lda, ldb
    cdef char cta, ctb
    m = a.shape[1] if ta else a.shape[0]
    k = a.shape[0] if ta else a.shape[1]
    n = b.shape[0] if tb else b.shape[1]
    cdef int ldc = c.shape[1]
    cta = b'T' if ta else b'N'
    ctb = b'T' if tb else b'N'
    lda = a.shape[1]
    ldb = b.shape[1]
    dgemm(&ctb, &cta, &n, &m, &k, &alpha,
          &b[0, 0], &ldb, &a[0, 0], &lda, &beta, &c[0, 0], &ldc)


def _check_conv(x, w, b):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input/weights, got {x.shape} / {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"channel mismatch: input has {x.shape[1]}, kernel expects {w.shape[1]}")
    if w.shape[2] not in (1, 3) or w.shape[3] not in (1, 3):
        raise ShapeError(f"kernel sizes limited to 1 and 3, got {w.shape[2:4]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} != ({w.shape[0]},)")


cdef void _im2col(double[:, :, :, ::1] x, double[:, ::1] cols,
                  int kh, int kw) noexcept nogil:
    # cols[(c*kh + i)*kw + j, ((n*T + t)*F + f)] = x_padded[n, c, t+i-ph, f+j-pw]
    cdef int n_items = x.shape[0], c_in = x.shape[1], t_dim = x.shape[2], f_dim = x.shape[3]
    cdef int ph = (kh - 1) // 2, pw = (kw - 1) // 2
    cdef int n, c, i, j, t, f, tt, ff, row, base
    for c in range(c_in):
        for i in range(kh):
            for j in range(kw):
                row = (c * kh + i) * kw + j
                for n in range(n_items):
                    base = (n * t_dim) * f_dim
                    for t in range(t_dim):
                        tt = t + i - ph
                        if tt < 0 or tt >= t_dim:
                            for f in range(f_dim):
                                cols[row, base + t * f_dim + f] = 0.0
                            continue
                        for f in range(f_dim):
                            ff = f + j - pw
                            if ff < 0 or ff >= f_dim:
                                cols[row, base + t * f_dim + f] = 0.0
                            else:
                                cols[row, base + t * f_dim + f] = x[n, c, tt, ff]


cdef void _col2im(double[:, ::1] cols, double[:, :, :, ::1] gx,
                  int kh, int kw) noexcept nogil:
    cdef int n_items = gx.shape[0], c_in = gx.shape[1], t_dim = gx.shape[2], f_dim = gx.shape[3]
    cdef int ph = (kh - 1) // 2, pw = (kw - 1) // 2
    cdef int n, c, i, j, t, f, tt, ff, row, base
    for c in range(c_in):
        for i in range(kh):
            for j in range(kw):
                row = (c * kh + i) * kw + j
                for n in range(n_items):
                    base = (n * t_dim) * f_dim
                    for t in range(t_dim):
                        tt = t + i - ph
                        if tt < 0 or tt >= t_dim:
                            continue
                        for f in range(f_dim):
                            ff = f + j - pw
                            if 0 <= ff < f_dim:
                                gx[n, c, tt, ff] += cols[row, base + t * f_dim + f]


def conv2d_forward(x, w, b):
    _check_conv(x, w, b)
    cdef int n = x.shape[0], c = x.shape[1], t = x.shape[2], f = x.shape[3]
    cdef int co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    x = np.ascontiguousarray(x, dtype=np.float64)
    cols = np.empty((c * kh * kw, n * t * f))
    _im2col(x, cols, kh, kw)
    wm = np.ascontiguousarray(w.reshape(co, c * kh * kw), dtype=np.float64)
    out = np.empty((co, n * t * f))
    _gemm(wm, cols, out, False, False, 1.0, 0.0)
    y = out.reshape(co, n, t, f).transpose(1, 0, 2, 3)
    y += b[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward(x, w, gy, need_gx=True):
    cdef int n = x.shape[0], c = x.shape[1], t = x.shape[2], f = x.shape[3]
    cdef int co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    x = np.ascontiguousarray(x, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    cols = np.empty((c * kh * kw, n * t * f))
    _im2col(x, cols, kh, kw)
    g = np.ascontiguousarray(gy.transpose(1, 0, 2, 3).reshape(co, n * t * f))
    gw = np.empty((co, c * kh * kw))
    _gemm(g, cols, gw, False, True, 1.0, 0.0)
    gb = g.sum(axis=1)
    gx = None
    if need_gx:
        wm = np.ascontiguousarray(w.reshape(co, c * kh * kw), dtype=np.float64)
        gcols = np.empty((c * kh * kw, n * t * f))
        _gemm(wm, g, gcols, True, False, 1.0, 0.0)
        gx_arr = np.zeros((n, c, t, f))
        _col2im(gcols, gx_arr, kh, kw)
        gx = gx_arr
    return gx, gw.reshape(co, c, kh, kw), gb


cdef inline double _sig(double z) noexcept nogil:
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


def lstm_forward(x, w_ih, w_hh, b, reverse=False):
    cdef int n = x.shape[0], t_len = x.shape[1], d = x.shape[2]
    cdef int h_dim = w_hh.shape[0]
    if w_ih.shape != (d, 4 * h_dim) or w_hh.shape != (h_dim, 4 * h_dim) or b.shape != (4 * h_dim,):
        raise ShapeError(
            f"lstm params mismatch: x {x.shape}, w_ih {w_ih.shape}, "
            f"w_hh {w_hh.shape}, b {b.shape}"
        )
    x = np.ascontiguousarray(x, dtype=np.float64)
    w_ih = np.ascontiguousarray(w_ih, dtype=np.float64)
    w_hh_arr = np.ascontiguousarray(w_hh, dtype=np.float64)
    xw_arr = (x.reshape(n * t_len, d) @ w_ih + b).reshape(n, t_len, 4 * h_dim)

    gi_a = np.empty((n, t_len, h_dim)); gf_a = np.empty((n, t_len, h_dim))
    gg_a = np.empty((n, t_len, h_dim)); go_a = np.empty((n, t_len, h_dim))
    cc_a = np.empty((n, t_len, h_dim)); tc_a = np.empty((n, t_len, h_dim))
    hs_a = np.empty((n, t_len, h_dim))

    cdef double[:, :, ::1] xw = xw_arr
    cdef double[:, :, ::1] gi = gi_a, gf = gf_a, gg = gg_a, go = go_a
    cdef double[:, :, ::1] cc = cc_a, tc = tc_a, hs = hs_a
    cdef double[:, ::1] w_hh_v = w_hh_arr
    h_arr = np.zeros((n, h_dim)); c_arr = np.zeros((n, h_dim)); z_arr = np.empty((n, 4 * h_dim))
    cdef double[:, ::1] h = h_arr, cbuf = c_arr, z = z_arr
    cdef int step, k, b_i, start, stop, stride
    cdef double iv, fv, gv, ov, cv, tv
    if reverse:
        start, stop, stride = t_len - 1, -1, -1
    else:
        start, stop, stride = 0, t_len, 1
    step = start
    while step != stop:
        # z = xw[:, step] + h @ w_hh
        for b_i in range(n):
            for k in range(4 * h_dim):
                z[b_i, k] = xw[b_i, step, k]
        _gemm(h, w_hh_v, z, False, False, 1.0, 1.0)
        with nogil:
            for b_i in range(n):
                for k in range(h_dim):
                    iv = _sig(z[b_i, k])
                    fv = _sig(z[b_i, h_dim + k])
                    gv = tanh(z[b_i, 2 * h_dim + k])
                    ov = _sig(z[b_i, 3 * h_dim + k])
                    cv = fv * cbuf[b_i, k] + iv * gv
                    tv = tanh(cv)
                    cbuf[b_i, k] = cv
                    h[b_i, k] = ov * tv
                    gi[b_i, step, k] = iv; gf[b_i, step, k] = fv
                    gg[b_i, step, k] = gv; go[b_i, step, k] = ov
                    cc[b_i, step, k] = cv; tc[b_i, step, k] = tv
                    hs[b_i, step, k] = h[b_i, k]
        step += stride
    return hs_a, (gi_a, gf_a, gg_a, go_a, cc_a, tc_a, hs_a)


def lstm_backward(x, w_ih, w_hh, cache, gh, reverse=False, need_gx=True):
    gi_a, gf_a, gg_a, go_a, cc_a, tc_a, hs_a = cache
    cdef int n = x.shape[0], t_len = x.shape[1], d = x.shape[2]
    cdef int h_dim = w_hh.shape[0]
    x = np.ascontiguousarray(x, dtype=np.float64)
    gh = np.ascontiguousarray(gh, dtype=np.float64)
    w_hh_arr = np.ascontiguousarray(w_hh, dtype=np.float64)
    dz_a = np.empty((n, t_len, 4 * h_dim))
    hp_a = np.empty((n, t_len, h_dim))
    dh_arr = np.zeros((n, h_dim)); dc_arr = np.zeros((n, h_dim))
    dz_step = np.empty((n, 4 * h_dim))

    cdef double[:, :, ::1] gi = gi_a, gf = gf_a, gg = gg_a, go = go_a
    cdef double[:, :, ::1] cc = cc_a, tc = tc_a, hs = hs_a
    cdef double[:, :, ::1] dz_seq = dz_a, hp = hp_a, gh_v = gh
    cdef double[:, ::1] dh_rec = dh_arr, dc = dc_arr, dz = dz_step, w_hh_v = w_hh_arr
    cdef int step, k, b_i, back, start, stop, stride, first
    cdef double iv, fv, gv, ov, tv, cp, dh, do_, di, dg, df, dcv
    if reverse:
        start, stop, stride, first = 0, t_len, 1, t_len - 1
    else:
        start, stop, stride, first = t_len - 1, -1, -1, 0
    step = start
    while step != stop:
        back = step + 1 if reverse else step - 1
        with nogil:
            for b_i in range(n):
                for k in range(h_dim):
                    if step == first:
                        cp = 0.0
                        hp[b_i, step, k] = 0.0
                    else:
                        cp = cc[b_i, back, k]
                        hp[b_i, step, k] = hs[b_i, back, k]
                    iv = gi[b_i, step, k]; fv = gf[b_i, step, k]
                    gv = gg[b_i, step, k]; ov = go[b_i, step, k]
                    tv = tc[b_i, step, k]
                    dh = gh_v[b_i, step, k] + dh_rec[b_i, k]
                    do_ = dh * tv
                    dcv = dc[b_i, k] + dh * ov * (1.0 - tv * tv)
                    di = dcv * gv
                    dg = dcv * iv
                    df = dcv * cp
                    dz[b_i, k] = di * iv * (1.0 - iv)
                    dz[b_i, h_dim + k] = df * fv * (1.0 - fv)
                    dz[b_i, 2 * h_dim + k] = dg * (1.0 - gv * gv)
                    dz[b_i, 3 * h_dim + k] = do_ * ov * (1.0 - ov)
                    dc[b_i, k] = dcv * fv
                for k in range(4 * h_dim):
                    dz_seq[b_i, step, k] = dz[b_i, k]
        _gemm(dz, w_hh_v, dh_rec, False, True, 1.0, 0.0)
        step += stride
    flat_dz = dz_a.reshape(n * t_len, 4 * h_dim)
    gw_ih = np.empty((d, 4 * h_dim))
    _gemm(np.ascontiguousarray(x.reshape(n * t_len, d)), flat_dz, gw_ih, True, False, 1.0, 0.0)
    gw_hh = np.empty((h_dim, 4 * h_dim))
    _gemm(np.ascontiguousarray(hp_a.reshape(n * t_len, h_dim)), flat_dz, gw_hh, True, False, 1.0, 0.0)
    gb = flat_dz.sum(axis=0)
    gx = None
    if need_gx:
        gx_arr = np.empty((n * t_len, d))
        _gemm(flat_dz, np.ascontiguousarray(w_ih), gx_arr, False, True, 1.0, 0.0)
        gx = gx_arr.reshape(n, t_len, d)
    return gx, gw_ih, gw_hh, gb


def maxpool12_forward(x):
    if x.ndim != 4:
        raise ShapeError(f"maxpool expects 4-d input, got {x.shape}")
    cdef int n = x.shape[0], c = x.shape[1], t = x.shape[2], f = x.shape[3]
    cdef int f2 = f // 2
    x = np.ascontiguousarray(x, dtype=np.float64)
    y_a = np.empty((n, c, t, f2))
    arg_a = np.empty((n, c, t, f2), dtype=np.uint8)
    cdef double[:, :, :, ::1] xv = x, y = y_a
    cdef cnp.uint8_t[:, :, :, ::1] arg = arg_a
    cdef int ni, ci, ti, fi
    cdef double a0, a1
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for ti in range(t):
                    for fi in range(f2):
                        a0 = xv[ni, ci, ti, 2 * fi]
                        a1 = xv[ni, ci, ti, 2 * fi + 1]
                        if a1 > a0:
                            y[ni, ci, ti, fi] = a1
                            arg[ni, ci, ti, fi] = 1
                        else:
                            y[ni, ci, ti, fi] = a0
                            arg[ni, ci, ti, fi] = 0
    return y_a, arg_a


def maxpool12_backward(arg, gy, f_in):
    cdef int n = gy.shape[0], c = gy.shape[1], t = gy.shape[2], f2 = gy.shape[3]
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    gx_a = np.zeros((n, c, t, f_in))
    cdef double[:, :, :, ::1] gx = gx_a, gyv = gy
    cdef cnp.uint8_t[:, :, :, ::1] argv = np.ascontiguousarray(arg)
    cdef int ni, ci, ti, fi
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for ti in range(t):
                    for fi in range(f2):
                        gx[ni, ci, ti, 2 * fi + argv[ni, ci, ti, fi]] = gyv[ni, ci, ti, fi]
    return gx_a
