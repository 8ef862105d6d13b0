"""Patch gather/scatter loops for conv2d, jitted when numba is present.

These are the memory-bound halves of the im2col convolution; the matmul
halves go to BLAS either way.  The numpy fallbacks compute identical
results, just slower.
"""

import numpy as np

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


@njit(cache=True)
def _im2col_jit(x, KH, KW, stride):
    B, H, W, C = x.shape
    OH = (H - KH) // stride + 1
    OW = (W - KW) // stride + 1
    cols = np.empty((B * OH * OW, KH * KW * C), dtype=x.dtype)
    n = 0
    for b in range(B):
        for oh in range(OH):
            ih = oh * stride
            for ow in range(OW):
                iw = ow * stride
                m = 0
                for kh in range(KH):
                    for kw in range(KW):
                        for c in range(C):
                            cols[n, m] = x[b, ih + kh, iw + kw, c]
                            m += 1
                n += 1
    return cols


@njit(cache=True)
def _col2im_jit(gcols, B, H, W, C, KH, KW, stride):
    OH = (H - KH) // stride + 1
    OW = (W - KW) // stride + 1
    gx = np.zeros((B, H, W, C), dtype=gcols.dtype)
    n = 0
    for b in range(B):
        for oh in range(OH):
            ih = oh * stride
            for ow in range(OW):
                iw = ow * stride
                m = 0
                for kh in range(KH):
                    for kw in range(KW):
                        for c in range(C):
                            gx[b, ih + kh, iw + kw, c] += gcols[n, m]
                            m += 1
                n += 1
    return gx


def _im2col_np(x, KH, KW, stride):
    B, H, W, C = x.shape
    OH = (H - KH) // stride + 1
    OW = (W - KW) // stride + 1
    cols = np.empty((B, OH, OW, KH, KW, C), dtype=x.dtype)
    for kh in range(KH):
        for kw in range(KW):
            cols[:, :, :, kh, kw, :] = x[:, kh:kh + stride * OH:stride,
                                         kw:kw + stride * OW:stride, :]
    return cols.reshape(B * OH * OW, KH * KW * C)


def _col2im_np(gcols, B, H, W, C, KH, KW, stride):
    OH = (H - KH) // stride + 1
    OW = (W - KW) // stride + 1
    g6 = gcols.reshape(B, OH, OW, KH, KW, C)
    gx = np.zeros((B, H, W, C), dtype=gcols.dtype)
    for kh in range(KH):
        for kw in range(KW):
            gx[:, kh:kh + stride * OH:stride,
               kw:kw + stride * OW:stride, :] += g6[:, :, :, kh, kw, :]
    return gx


if _HAVE_NUMBA:
    def im2col(x, KH, KW, stride):
        return _im2col_jit(np.ascontiguousarray(x), KH, KW, stride)

    def col2im(gcols, B, H, W, C, KH, KW, stride):
        return _col2im_jit(np.ascontiguousarray(gcols), B, H, W, C, KH, KW, stride)
else:
    im2col = _im2col_np

    def col2im(gcols, B, H, W, C, KH, KW, stride):
        return _col2im_np(gcols, B, H, W, C, KH, KW, stride)
