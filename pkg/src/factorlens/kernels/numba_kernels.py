"""Numba-compiled im2col/col2im.

Each output element is written by exactly one thread (prange over the batch),
so results are bit-deterministic regardless of thread count.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def _im2col_core(x, cols, k, stride, pad, out_h, out_w):
    b, c, h, w = x.shape
    for bi in prange(b):
        for i in range(out_h):
            for j in range(out_w):
                row = (bi * out_h + i) * out_w + j
                for ci in range(c):
                    base = ci * k * k
                    for u in range(k):
                        hh = i * stride + u - pad
                        if hh < 0 or hh >= h:
                            continue
                        for v in range(k):
                            ww = j * stride + v - pad
                            if ww < 0 or ww >= w:
                                continue
                            cols[row, base + u * k + v] = x[bi, ci, hh, ww]


@njit(parallel=True, cache=True)
def _col2im_core(cols, out, k, stride, pad, out_h, out_w):
    b, c, h, w = out.shape
    for bi in prange(b):
        for i in range(out_h):
            for j in range(out_w):
                row = (bi * out_h + i) * out_w + j
                for ci in range(c):
                    base = ci * k * k
                    for u in range(k):
                        hh = i * stride + u - pad
                        if hh < 0 or hh >= h:
                            continue
                        for v in range(k):
                            ww = j * stride + v - pad
                            if ww < 0 or ww >= w:
                                continue
                            out[bi, ci, hh, ww] += cols[row, base + u * k + v]


def im2col(x, k, stride, pad, out_h, out_w):
    b, c, _, _ = x.shape
    cols = np.zeros((b * out_h * out_w, c * k * k), dtype=x.dtype)
    _im2col_core(np.ascontiguousarray(x), cols, k, stride, pad, out_h, out_w)
    return cols


def col2im(cols, b, c, h, w, k, stride, pad, out_h, out_w):
    out = np.zeros((b, c, h, w), dtype=cols.dtype)
    _col2im_core(np.ascontiguousarray(cols), out, k, stride, pad, out_h, out_w)
    return out
