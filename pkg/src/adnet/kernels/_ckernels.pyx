# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dilated convolution kernels, the hot loop of training.

Plain C loops over contiguous float64 memoryviews; the per-tap inner loop
runs over a precomputed valid range so there is no bounds branch inside.
"""

import numpy as np


def conv1d_dilated_fwd(double[:, ::1] x, double[:, :, ::1] w, double[::1] b,
                       Py_ssize_t dilation):
    cdef Py_ssize_t cin = x.shape[0]
    cdef Py_ssize_t t = x.shape[1]
    cdef Py_ssize_t cout = w.shape[0]
    cdef Py_ssize_t k = w.shape[2]
    cdef Py_ssize_t pad = (k // 2) * dilation
    out = np.empty((cout, t))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t co, ci, j, tt, lo, hi, shift
    cdef double wj, bc
    for co in range(cout):
        bc = b[co]
        for tt in range(t):
            y[co, tt] = bc
        for ci in range(cin):
            for j in range(k):
                wj = w[co, ci, j]
                shift = j * dilation - pad
                lo = -shift if shift < 0 else 0
                hi = t - shift if shift > 0 else t
                for tt in range(lo, hi):
                    y[co, tt] += wj * x[ci, tt + shift]
    return out


def conv1d_dilated_bwd(double[:, ::1] x, double[:, :, ::1] w, double[:, ::1] gy,
                       Py_ssize_t dilation):
    cdef Py_ssize_t cin = x.shape[0]
    cdef Py_ssize_t t = x.shape[1]
    cdef Py_ssize_t cout = w.shape[0]
    cdef Py_ssize_t k = w.shape[2]
    cdef Py_ssize_t pad = (k // 2) * dilation
    gx_arr = np.zeros((cin, t))
    gw_arr = np.zeros((cout, cin, k))
    gb_arr = np.zeros(cout)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t co, ci, j, tt, lo, hi, shift
    cdef double wj, g, acc
    for co in range(cout):
        acc = 0.0
        for tt in range(t):
            acc += gy[co, tt]
        gb[co] = acc
        for ci in range(cin):
            for j in range(k):
                wj = w[co, ci, j]
                shift = j * dilation - pad
                lo = -shift if shift < 0 else 0
                hi = t - shift if shift > 0 else t
                acc = 0.0
                for tt in range(lo, hi):
                    g = gy[co, tt]
                    acc += g * x[ci, tt + shift]
                    gx[ci, tt + shift] += wj * g
                gw[co, ci, j] += acc
    return gx_arr, gw_arr, gb_arr
