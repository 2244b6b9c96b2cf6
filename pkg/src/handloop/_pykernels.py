"""Numpy implementations of the convolution and pooling inner loops.

Same signatures and accumulation order as the compiled ``_ckernels`` module.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw, stride):
    n_batch, channels, height, width = x.shape
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win[:, :, :out_h, :out_w]
    # (N, C, Ho, Wo, kh, kw) -> (C, kh, kw, N, Ho, Wo)
    cols = np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3))
    return cols.reshape(channels * kh * kw, n_batch * out_h * out_w)


def col2im(cols, n_batch, channels, height, width, kh, kw, stride):
    out_h = (height - kh) // stride + 1
    out_w = (width - kw) // stride + 1
    taps = cols.reshape(channels, kh, kw, n_batch, out_h, out_w).transpose(3, 0, 1, 2, 4, 5)
    dx = np.zeros((n_batch, channels, height, width))
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += taps[:, :, i, j]
    return dx


def maxpool_forward(x, window):
    n_batch, channels, height, width = x.shape
    out_h, out_w = height // window, width // window
    blocks = x.reshape(n_batch, channels, out_h, window, out_w, window)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n_batch, channels, out_h, out_w, -1)
    # argmax returns the first maximum in row-major window order
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(grad, arg, window):
    n_batch, channels, out_h, out_w = grad.shape
    blocks = np.zeros((n_batch, channels, out_h, out_w, window * window))
    np.put_along_axis(blocks, arg[..., None], grad[..., None], axis=-1)
    blocks = blocks.reshape(n_batch, channels, out_h, out_w, window, window)
    return np.ascontiguousarray(
        blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n_batch, channels, out_h * window, out_w * window)
    )
