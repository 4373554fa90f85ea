"""Pure-numpy im2col/col2im, used when numba is unavailable or disabled."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k, stride, pad, out_h, out_w):
    """Gather sliding windows of ``x`` into a matrix of patch rows.

    x: (B, C, H, W). Returns (B*out_h*out_w, C*k*k) where row (b, i, j)
    holds the padded window at output position (i, j) in C-major order.
    """
    b, c, _, _ = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: (B, C, out_h, out_w, k, k) view
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * out_h * out_w, c * k * k)
    return np.ascontiguousarray(cols)


def col2im(cols, b, c, h, w, k, stride, pad, out_h, out_w):
    """Adjoint of :func:`im2col`: scatter-add patch rows back to (B, C, H, W)."""
    cols = cols.reshape(b, out_h, out_w, c, k, k)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for u in range(k):
        for v in range(k):
            xp[:, :, u:u + stride * out_h:stride, v:v + stride * out_w:stride] += (
                cols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
            )
    return xp[:, :, pad:pad + h, pad:pad + w]
