"""Strided 2-D convolution and transposed convolution with explicit gradients.

Layout is NCHW. Forward/backward pairs are exact adjoints built from the
backend's im2col/col2im plus BLAS matmuls, so the same code path serves both
float32 training and float64 gradient checking.
"""

import numpy as np

from . import col2im, im2col
from ..errors import ModelError


def conv_out_hw(h, w, k, stride, pad):
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def _nhwc_flat(x):
    b, c, h, w = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(b * h * w, c)


def _unflatten_nhwc(y_flat, b, h, w, c):
    return np.ascontiguousarray(y_flat.reshape(b, h, w, c).transpose(0, 3, 1, 2))


def conv2d_fwd(x, w, stride, pad):
    """y[b,co,i,j] = sum_{ci,u,v} x[b,ci,i*s+u-p,j*s+v-p] * w[co,ci,u,v].

    Returns (y, cols); ``cols`` is the im2col buffer reused by the backward
    pass for the weight gradient.
    """
    b, ci, h, wd = x.shape
    co, ci_w, k, _ = w.shape
    if ci_w != ci:
        raise ModelError(f"conv2d: input has {ci} channels, weight expects {ci_w}")
    oh, ow = conv_out_hw(h, wd, k, stride, pad)
    cols = im2col(x, k, stride, pad, oh, ow)
    y_flat = cols @ w.reshape(co, -1).T
    return _unflatten_nhwc(y_flat, b, oh, ow, co), cols


def conv2d_bwd(gy, cols, w, x_shape, stride, pad):
    """Gradients of conv2d_fwd w.r.t. input and weight."""
    b, ci, h, wd = x_shape
    co = w.shape[0]
    k = w.shape[2]
    oh, ow = gy.shape[2], gy.shape[3]
    gy_flat = _nhwc_flat(gy)
    gw = (cols.T @ gy_flat).T.reshape(w.shape)
    g_cols = gy_flat @ w.reshape(co, -1)
    gx = col2im(g_cols, b, ci, h, wd, k, stride, pad, oh, ow)
    return gx, gw


def convt2d_fwd(x, w, stride, pad, out_hw):
    """Transposed convolution (adjoint of conv2d_fwd in the spatial map).

    x: (B, Cin, H, W); w: (Cin, Cout, K, K); output (B, Cout, *out_hw).
    ``out_hw`` must satisfy the conv geometry (out + 2p - k)//s + 1 == H.
    """
    b, cin, h, wd = x.shape
    cin_w, cout, k, _ = w.shape
    if cin_w != cin:
        raise ModelError(f"convt2d: input has {cin} channels, weight expects {cin_w}")
    oh, ow = out_hw
    if conv_out_hw(oh, ow, k, stride, pad) != (h, wd):
        raise ModelError(f"convt2d: output size {out_hw} inconsistent with input {(h, wd)}")
    cols = _nhwc_flat(x) @ w.reshape(cin, -1)
    return col2im(cols, b, cout, oh, ow, k, stride, pad, h, wd)


def convt2d_bwd(gy, x, w, stride, pad):
    """Gradients of convt2d_fwd w.r.t. input and weight."""
    b, cin, h, wd = x.shape
    k = w.shape[2]
    cols_g = im2col(gy, k, stride, pad, h, wd)
    gx_flat = cols_g @ w.reshape(cin, -1).T
    gx = _unflatten_nhwc(gx_flat, b, h, wd, cin)
    gw = (_nhwc_flat(x).T @ cols_g).reshape(w.shape)
    return gx, gw
