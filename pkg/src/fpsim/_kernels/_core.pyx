# cython: boundscheck=False, wraparound=False, initializedcheck=False, language_level=3
"""Python bindings for the compiled hot kernels (see core_impl.c).

Term order and float64 accumulation mirror ``numpy_backend`` (see its
docstring): per-call results are bit-identical to the fallback for every
kernel except the conv/dense weight gradients, which use a fixed striped
reduction and agree with the fallback to float32 rounding.
"""

import numpy as np

NAME = "compiled"

cdef extern from "core_impl.h" nogil:
    void fps_conv2d_fwd(const float *x, const float *w, const float *b, float *y,
                        float *xpad, double *opad, ptrdiff_t bsz, ptrdiff_t cin,
                        ptrdiff_t h, ptrdiff_t wd, ptrdiff_t cout, ptrdiff_t kh,
                        ptrdiff_t kw, ptrdiff_t pad, ptrdiff_t ho, ptrdiff_t wo)
    void fps_conv2d_bwd_input(const float *gy, const float *w, float *gx,
                              float *gypad, double *gxbuf, ptrdiff_t bsz,
                              ptrdiff_t cin, ptrdiff_t h, ptrdiff_t wd,
                              ptrdiff_t cout, ptrdiff_t kh, ptrdiff_t kw,
                              ptrdiff_t pad, ptrdiff_t ho, ptrdiff_t wo)
    void fps_conv2d_bwd_params(const float *x, const float *gy, double *gw64,
                               double *gb64, float *xpad, float *gyp,
                               ptrdiff_t bsz, ptrdiff_t cin, ptrdiff_t h,
                               ptrdiff_t wd, ptrdiff_t cout, ptrdiff_t kh,
                               ptrdiff_t kw, ptrdiff_t pad, ptrdiff_t ho,
                               ptrdiff_t wo)
    void fps_dense_fwd(const float *x, const float *w, const float *b, float *y,
                       float *wt, double *row, ptrdiff_t bsz, ptrdiff_t k,
                       ptrdiff_t j)
    void fps_dense_bwd_input(const float *gy, const float *w, float *gx,
                             double *row, ptrdiff_t bsz, ptrdiff_t j, ptrdiff_t k)
    void fps_dense_bwd_params(const float *x, const float *gy, double *gw64,
                              double *gb64, ptrdiff_t bsz, ptrdiff_t j,
                              ptrdiff_t k)
    void fps_maxpool2d_fwd(const float *x, float *y, long long *idx,
                           ptrdiff_t bsz, ptrdiff_t c, ptrdiff_t h,
                           ptrdiff_t wd, ptrdiff_t k)
    void fps_maxpool2d_scatter(const float *g, const long long *idx, float *out,
                               ptrdiff_t bsz, ptrdiff_t c, ptrdiff_t h,
                               ptrdiff_t wd, ptrdiff_t k)


def conv2d_fwd(const float[:, :, :, ::1] x, const float[:, :, :, ::1] w,
               const float[::1] b, int pad):
    cdef Py_ssize_t bsz = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = h + 2 * pad - kh + 1
    cdef Py_ssize_t wo = wd + 2 * pad - kw + 1
    cdef Py_ssize_t wp = wd + 2 * pad
    out_arr = np.empty((bsz, cout, ho, wo), np.float32)
    xpad_arr = np.zeros(cin * (h + 2 * pad + 1) * wp, np.float32)
    opad_arr = np.empty(ho * wp, np.float64)
    cdef float[:, :, :, ::1] out = out_arr
    cdef float[::1] xpad = xpad_arr
    cdef double[::1] opad = opad_arr
    with nogil:
        fps_conv2d_fwd(&x[0, 0, 0, 0], &w[0, 0, 0, 0], &b[0], &out[0, 0, 0, 0],
                       &xpad[0], &opad[0], bsz, cin, h, wd, cout, kh, kw, pad,
                       ho, wo)
    return out_arr


def conv2d_bwd_input(const float[:, :, :, ::1] gy, const float[:, :, :, ::1] w,
                     int pad, int h, int wd):
    cdef Py_ssize_t bsz = gy.shape[0], cout = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t cin = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t mh = max(kh - 1 - pad, 0), mw = max(kw - 1 - pad, 0)
    cdef Py_ssize_t wpg = wo + 2 * mw
    out_arr = np.empty((bsz, cin, h, wd), np.float32)
    gypad_arr = np.zeros((cout * (ho + 2 * mh) + 1) * wpg, np.float32)
    gxbuf_arr = np.empty(h * wpg, np.float64)
    cdef float[:, :, :, ::1] gx = out_arr
    cdef float[::1] gypad = gypad_arr
    cdef double[::1] gxbuf = gxbuf_arr
    with nogil:
        fps_conv2d_bwd_input(&gy[0, 0, 0, 0], &w[0, 0, 0, 0], &gx[0, 0, 0, 0],
                             &gypad[0], &gxbuf[0], bsz, cin, h, wd, cout, kh,
                             kw, pad, ho, wo)
    return out_arr


def conv2d_bwd_params(const float[:, :, :, ::1] x, const float[:, :, :, ::1] gy,
                      int pad, int kh, int kw):
    cdef Py_ssize_t bsz = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t wp = wd + 2 * pad
    gw64_arr = np.zeros((cout, cin, kh, kw), np.float64)
    gb64_arr = np.zeros(cout, np.float64)
    xpad_arr = np.zeros(cin * (h + 2 * pad + 1) * wp, np.float32)
    gyp_arr = np.zeros(cout * ho * wp, np.float32)
    cdef double[:, :, :, ::1] gw64 = gw64_arr
    cdef double[::1] gb64 = gb64_arr
    cdef float[::1] xpad = xpad_arr
    cdef float[::1] gyp = gyp_arr
    with nogil:
        fps_conv2d_bwd_params(&x[0, 0, 0, 0], &gy[0, 0, 0, 0], &gw64[0, 0, 0, 0],
                              &gb64[0], &xpad[0], &gyp[0], bsz, cin, h, wd,
                              cout, kh, kw, pad, ho, wo)
    return gw64_arr.astype(np.float32), gb64_arr.astype(np.float32)


def dense_fwd(const float[:, ::1] x, const float[:, ::1] w, const float[::1] b):
    cdef Py_ssize_t bsz = x.shape[0], k = x.shape[1], j = w.shape[0]
    out_arr = np.empty((bsz, j), np.float32)
    wt_arr = np.empty((k, j), np.float32)
    row_arr = np.empty(j, np.float64)
    cdef float[:, ::1] out = out_arr
    cdef float[:, ::1] wt = wt_arr
    cdef double[::1] row = row_arr
    with nogil:
        fps_dense_fwd(&x[0, 0], &w[0, 0], &b[0], &out[0, 0], &wt[0, 0], &row[0],
                      bsz, k, j)
    return out_arr


def dense_bwd_input(const float[:, ::1] gy, const float[:, ::1] w):
    cdef Py_ssize_t bsz = gy.shape[0], j = w.shape[0], k = w.shape[1]
    out_arr = np.empty((bsz, k), np.float32)
    row_arr = np.empty(k, np.float64)
    cdef float[:, ::1] gx = out_arr
    cdef double[::1] row = row_arr
    with nogil:
        fps_dense_bwd_input(&gy[0, 0], &w[0, 0], &gx[0, 0], &row[0], bsz, j, k)
    return out_arr


def dense_bwd_params(const float[:, ::1] x, const float[:, ::1] gy):
    cdef Py_ssize_t bsz = x.shape[0], k = x.shape[1], j = gy.shape[1]
    gw64_arr = np.zeros((j, k), np.float64)
    gb64_arr = np.zeros(j, np.float64)
    cdef double[:, ::1] gw64 = gw64_arr
    cdef double[::1] gb64 = gb64_arr
    with nogil:
        fps_dense_bwd_params(&x[0, 0], &gy[0, 0], &gw64[0, 0], &gb64[0], bsz, j, k)
    return gw64_arr.astype(np.float32), gb64_arr.astype(np.float32)


def maxpool2d_fwd(const float[:, :, :, ::1] x, int k):
    cdef Py_ssize_t bsz = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t ho = h // k, wo = wd // k
    y_arr = np.empty((bsz, c, ho, wo), np.float32)
    idx_arr = np.empty((bsz, c, ho, wo), np.int64)
    cdef float[:, :, :, ::1] y = y_arr
    cdef long long[:, :, :, ::1] idx = idx_arr
    with nogil:
        fps_maxpool2d_fwd(&x[0, 0, 0, 0], &y[0, 0, 0, 0], &idx[0, 0, 0, 0],
                          bsz, c, h, wd, k)
    return y_arr, idx_arr


def maxpool2d_scatter(const float[:, :, :, ::1] g, const long long[:, :, :, ::1] idx,
                      int h, int wd):
    cdef Py_ssize_t bsz = g.shape[0], c = g.shape[1], ho = g.shape[2], wo = g.shape[3]
    cdef Py_ssize_t k = h // ho
    out_arr = np.zeros((bsz, c, h, wd), np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    with nogil:
        fps_maxpool2d_scatter(&g[0, 0, 0, 0], &idx[0, 0, 0, 0], &out[0, 0, 0, 0],
                              bsz, c, h, wd, k)
    return out_arr
