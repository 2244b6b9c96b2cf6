# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for convolution and pooling.

Every routine here has a numpy twin in ``_pykernels`` with the same
signature and the same summation order, so both backends agree bit for bit.
"""
import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, int kh, int kw, int stride):
    cdef Py_ssize_t n_batch = x.shape[0], channels = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t out_h = (height - kh) // stride + 1
    cdef Py_ssize_t out_w = (width - kw) // stride + 1
    cdef Py_ssize_t plane = out_h * out_w
    out = np.empty((channels * kh * kw, n_batch * plane), dtype=np.float64)
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t n, c, i, j, oy, ox, row, base
    for c in range(channels):
        for i in range(kh):
            for j in range(kw):
                row = (c * kh + i) * kw + j
                for n in range(n_batch):
                    for oy in range(out_h):
                        base = n * plane + oy * out_w
                        if stride == 1:
                            # a unit-stride output row is one contiguous input run
                            memcpy(&cols[row, base], &x[n, c, i + oy, j], out_w * sizeof(double))
                        else:
                            for ox in range(out_w):
                                cols[row, base + ox] = x[n, c, i + oy * stride, j + ox * stride]
    return out


def col2im(const double[:, ::1] cols, int n_batch, int channels, int height, int width,
           int kh, int kw, int stride):
    cdef Py_ssize_t out_h = (height - kh) // stride + 1
    cdef Py_ssize_t out_w = (width - kw) // stride + 1
    cdef Py_ssize_t plane = out_h * out_w
    out = np.zeros((n_batch, channels, height, width), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = out
    cdef Py_ssize_t n, c, i, j, oy, ox, row, base
    for c in range(channels):
        for i in range(kh):
            for j in range(kw):
                row = (c * kh + i) * kw + j
                for n in range(n_batch):
                    for oy in range(out_h):
                        base = n * plane + oy * out_w
                        for ox in range(out_w):
                            dx[n, c, i + oy * stride, j + ox * stride] += cols[row, base + ox]
    return out


def maxpool_forward(const double[:, :, :, ::1] x, int window):
    cdef Py_ssize_t n_batch = x.shape[0], channels = x.shape[1]
    cdef Py_ssize_t out_h = x.shape[2] // window, out_w = x.shape[3] // window
    out = np.empty((n_batch, channels, out_h, out_w), dtype=np.float64)
    arg = np.empty((n_batch, channels, out_h, out_w), dtype=np.int64)
    cdef double[:, :, :, ::1] o = out
    cdef cnp.int64_t[:, :, :, ::1] a = arg
    cdef Py_ssize_t n, c, oy, ox, i, j, best_k
    cdef double best, v
    for n in range(n_batch):
        for c in range(channels):
            for oy in range(out_h):
                for ox in range(out_w):
                    best = x[n, c, oy * window, ox * window]
                    best_k = 0
                    for i in range(window):
                        for j in range(window):
                            v = x[n, c, oy * window + i, ox * window + j]
                            if v > best:
                                best = v
                                best_k = i * window + j
                    o[n, c, oy, ox] = best
                    a[n, c, oy, ox] = best_k
    return out, arg


def maxpool_backward(const double[:, :, :, ::1] grad, const cnp.int64_t[:, :, :, ::1] arg,
                     int window):
    cdef Py_ssize_t n_batch = grad.shape[0], channels = grad.shape[1]
    cdef Py_ssize_t out_h = grad.shape[2], out_w = grad.shape[3]
    out = np.zeros((n_batch, channels, out_h * window, out_w * window), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = out
    cdef Py_ssize_t n, c, oy, ox, k
    for n in range(n_batch):
        for c in range(channels):
            for oy in range(out_h):
                for ox in range(out_w):
                    k = arg[n, c, oy, ox]
                    dx[n, c, oy * window + k // window, ox * window + k % window] = grad[n, c, oy, ox]
    return out
