"""Numpy implementation of the dilated convolution kernels.

One BLAS matmul per kernel tap over a zero-padded copy of the input.
Serves as the fallback when the compiled extension is not built and as
the reference the extension is tested against.
"""

import numpy as np


def conv1d_dilated_fwd(x, w, b, dilation):
    cin, t = x.shape
    cout, _, k = w.shape
    pad = (k // 2) * dilation
    xp = np.zeros((cin, t + 2 * pad))
    xp[:, pad:pad + t] = x
    y = np.empty((cout, t))
    y[:] = b[:, None]
    for j in range(k):
        y += w[:, :, j] @ xp[:, j * dilation:j * dilation + t]
    return y


def conv1d_dilated_bwd(x, w, gy, dilation):
    cin, t = x.shape
    cout, _, k = w.shape
    pad = (k // 2) * dilation
    xp = np.zeros((cin, t + 2 * pad))
    xp[:, pad:pad + t] = x
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    for j in range(k):
        lo = j * dilation
        gw[:, :, j] = gy @ xp[:, lo:lo + t].T
        gxp[:, lo:lo + t] += w[:, :, j].T @ gy
    gx = np.ascontiguousarray(gxp[:, pad:pad + t])
    gb = gy.sum(axis=1)
    return gx, gw, gb
