"""Pure-numpy implementations of the hot kernels.

This is the fallback used when the compiled extension is unavailable
(or when FPSIM_PURE_PYTHON=1). All kernels accumulate in float64 and
cast the result to float32 once, in a fixed term order, so results are
bit-reproducible run to run. For every kernel except
``conv2d_bwd_params`` the term order matches the compiled backend
exactly, making the two backends bit-identical per call; the conv
weight-gradient differs only in float64 summation order (sub-ulp after
the float32 cast).

No BLAS-backed routine is used anywhere: results do not depend on BLAS
thread settings.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _pad2d(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int) -> np.ndarray:
    """Direct stride-1 convolution. x:[B,Ci,H,W], w:[Co,Ci,kh,kw], b:[Co]."""
    bsz, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = h + 2 * pad - kh + 1
    wo = wd + 2 * pad - kw + 1
    xp = _pad2d(x, pad).astype(np.float64)
    w64 = w.astype(np.float64)
    acc = np.zeros((bsz, cout, ho, wo), np.float64)
    for ci in range(cin):
        for dh in range(kh):
            for dw in range(kw):
                acc += (
                    xp[:, None, ci, dh : dh + ho, dw : dw + wo]
                    * w64[None, :, ci, dh, dw, None, None]
                )
    acc += b.astype(np.float64)[None, :, None, None]
    return acc.astype(np.float32)


def conv2d_bwd_input(
    gy: np.ndarray, w: np.ndarray, pad: int, h: int, wd: int
) -> np.ndarray:
    """Gradient of conv2d_fwd w.r.t. its input. gy:[B,Co,Ho,Wo] -> [B,Ci,H,W]."""
    bsz, cout, ho, wo = gy.shape
    _, cin, kh, kw = w.shape
    gy64 = gy.astype(np.float64)
    w64 = w.astype(np.float64)
    gxp = np.zeros((bsz, cin, h + 2 * pad, wd + 2 * pad), np.float64)
    for co in range(cout):
        for dh in range(kh):
            for dw in range(kw):
                gxp[:, :, dh : dh + ho, dw : dw + wo] += (
                    gy64[:, None, co, :, :] * w64[co, None, :, dh, dw, None, None]
                )
    gx = gxp[:, :, pad : pad + h, pad : pad + wd]
    return gx.astype(np.float32)


def conv2d_bwd_params(
    x: np.ndarray, gy: np.ndarray, pad: int, kh: int, kw: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of conv2d_fwd w.r.t. weights and bias."""
    _, _, ho, wo = gy.shape
    cout = gy.shape[1]
    cin = x.shape[1]
    xp = _pad2d(x, pad).astype(np.float64)
    gy64 = gy.astype(np.float64)
    gw = np.empty((cout, cin, kh, kw), np.float64)
    for dh in range(kh):
        for dw in range(kw):
            gw[:, :, dh, dw] = np.einsum(
                "bohw,bchw->oc", gy64, xp[:, :, dh : dh + ho, dw : dw + wo]
            )
    gb = np.zeros(cout, np.float64)
    for bi in range(gy.shape[0]):
        gb += gy64[bi].sum(axis=(1, 2))
    return gw.astype(np.float32), gb.astype(np.float32)


def dense_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map. x:[B,K], w:[J,K], b:[J] -> [B,J]."""
    bsz, k = x.shape
    j = w.shape[0]
    x64 = x.astype(np.float64)
    w64 = w.astype(np.float64)
    acc = np.zeros((bsz, j), np.float64)
    for ki in range(k):
        acc += x64[:, ki, None] * w64[None, :, ki]
    acc += b.astype(np.float64)[None, :]
    return acc.astype(np.float32)


def dense_bwd_input(gy: np.ndarray, w: np.ndarray) -> np.ndarray:
    """gx[b,k] = sum_j gy[b,j] * w[j,k]."""
    gy64 = gy.astype(np.float64)
    w64 = w.astype(np.float64)
    acc = np.zeros((gy.shape[0], w.shape[1]), np.float64)
    for ji in range(w.shape[0]):
        acc += gy64[:, ji, None] * w64[None, ji, :]
    return acc.astype(np.float32)


def dense_bwd_params(
    x: np.ndarray, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """gw[j,k] = sum_b gy[b,j] * x[b,k]; gb[j] = sum_b gy[b,j]."""
    x64 = x.astype(np.float64)
    gy64 = gy.astype(np.float64)
    gw = np.zeros((gy.shape[1], x.shape[1]), np.float64)
    gb = np.zeros(gy.shape[1], np.float64)
    for bi in range(x.shape[0]):
        gw += gy64[bi, :, None] * x64[bi, None, :]
        gb += gy64[bi]
    return gw.astype(np.float32), gb.astype(np.float32)


def maxpool2d_fwd(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping k x k max pooling.

    Returns the pooled values and, per output cell, the flat index of the
    winning cell in the input H*W plane (first maximum wins, i.e. ties go
    to the lowest flat index).
    """
    bsz, c, h, wd = x.shape
    ho, wo = h // k, wd // k
    x = x[:, :, : ho * k, : wo * k]  # ragged tail cells never pool
    win = x.reshape(bsz, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(bsz, c, ho, wo, k * k)
    local = win.argmax(axis=-1)
    y = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    di, dj = local // k, local % k
    rows = np.arange(ho)[None, None, :, None] * k + di
    cols = np.arange(wo)[None, None, None, :] * k + dj
    idx = (rows * wd + cols).astype(np.int64)
    return np.ascontiguousarray(y), np.ascontiguousarray(idx)


def maxpool2d_scatter(
    g: np.ndarray, idx: np.ndarray, h: int, wd: int
) -> np.ndarray:
    """Route per-output values back onto the winning input cells."""
    bsz, c, ho, wo = g.shape
    out = np.zeros((bsz, c, h * wd), np.float32)
    np.put_along_axis(out, idx.reshape(bsz, c, -1), g.reshape(bsz, c, -1), axis=2)
    return out.reshape(bsz, c, h, wd)
