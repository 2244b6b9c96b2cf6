"""Differentiable operations.

Image ops take ``(N, C, H, W)`` batches; a single ``(C, H, W)`` image is
accepted and returned without the batch axis. Vector ops take ``(N, n)`` or a
single ``(n,)`` vector.
"""
import numpy as np

from .. import kernels
from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)

    return make_result(a.data + b.data, "add", (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g, needs):
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(-g, b.shape) if needs[1] else None)

    return make_result(a.data - b.data, "sub", (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g, needs):
        return (_unbroadcast(g * b.data, a.shape) if needs[0] else None,
                _unbroadcast(g * a.data, b.shape) if needs[1] else None)

    return make_result(a.data * b.data, "mul", (a, b), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0

    def backward(g, needs):
        return (g * mask,)

    return make_result(x.data * mask, "relu", (x,), backward)


def identity(x):
    return as_tensor(x)


def reshape(x, shape):
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g, needs):
        return (g.reshape(x.shape),)

    return make_result(data, "reshape", (x,), backward)


def concat(tensors, axis=1):
    """Join along ``axis``; all other extents must agree."""
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            s != r for k, (s, r) in enumerate(zip(t.shape, ref)) if k != axis % len(ref)
        ):
            raise ValueError(f"concat: shapes {ref} and {t.shape} differ outside axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g, needs):
        return tuple(
            np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis) if needs[k] else None
            for k in range(len(tensors))
        )

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), "concat",
                       tuple(tensors), backward)


def split_batch(x, index):
    """Rows ``[0, index)`` and ``[index, N)`` of a batch, as two tensors."""
    x = as_tensor(x)
    n = x.shape[0]

    def head_backward(g, needs):
        full = np.zeros_like(x.data)
        full[:index] = g
        return (full,)

    def tail_backward(g, needs):
        full = np.zeros_like(x.data)
        full[index:] = g
        return (full,)

    head = make_result(x.data[:index], "split_head", (x,), head_backward)
    tail = make_result(x.data[index:n], "split_tail", (x,), tail_backward)
    return head, tail


def total(x):
    """Sum of all elements as a scalar tensor."""
    x = as_tensor(x)

    def backward(g, needs):
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(np.array(x.data.sum()), "sum", (x,), backward)


def mean(x):
    x = as_tensor(x)
    count = x.data.size

    def backward(g, needs):
        return (np.full(x.shape, float(g) / count),)

    return make_result(np.array(x.data.mean()), "mean", (x,), backward)


def sum_squares(x):
    x = as_tensor(x)

    def backward(g, needs):
        return (2.0 * float(g) * x.data,)

    return make_result(np.array(np.dot(x.data.ravel(), x.data.ravel())), "sum_squares", (x,),
                       backward)


def mse(a, b):
    """Mean of squared differences over all elements."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    count = diff.size

    def backward(g, needs):
        scale = 2.0 * float(g) / count
        return (scale * diff if needs[0] else None, -scale * diff if needs[1] else None)

    return make_result(np.array(np.dot(diff.ravel(), diff.ravel()) / count), "mse", (a, b),
                       backward)


def row_norm(x):
    """Euclidean norm of each row of an ``(N, d)`` tensor.

    The gradient at a zero row is taken as zero.
    """
    x = as_tensor(x)
    norms = np.sqrt(np.einsum("ij,ij->i", x.data, x.data))

    def backward(g, needs):
        safe = np.where(norms > 0, norms, 1.0)
        return (x.data * (g / safe * (norms > 0))[:, None],)

    return make_result(norms, "row_norm", (x,), backward)


def fully_connected(x, weight, bias):
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    single = x.ndim == 1
    xd = x.data[None, :] if single else x.data
    if xd.ndim != 2 or weight.ndim != 2 or xd.shape[1] != weight.shape[1]:
        raise ValueError(f"fully_connected: input {x.shape} does not match weights {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"fully_connected: bias {bias.shape} does not match weights {weight.shape}")
    out = xd @ weight.data.T + bias.data

    def backward(g, needs):
        g2 = g[None, :] if single else g
        dx = None
        if needs[0]:
            dx = g2 @ weight.data
            dx = dx[0] if single else dx
        dw = g2.T @ xd if needs[1] else None
        db = g2.sum(axis=0) if needs[2] else None
        return dx, dw, db

    return make_result(out[0] if single else out, "fully_connected", (x, weight, bias), backward)


def _conv_output_size(extent, k, stride, pad):
    return (extent + 2 * pad - k) // stride + 1


def _from_cols(m, n_batch, height, width):
    """(K, N*H*W) matrix -> contiguous (N, K, H, W) array."""
    k_out = m.shape[0]
    return np.ascontiguousarray(m.reshape(k_out, n_batch, height, width).transpose(1, 0, 2, 3))


def _to_cols(x):
    """(N, K, H, W) array -> contiguous (K, N*H*W) matrix."""
    n_batch, k_out = x.shape[:2]
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(k_out, -1)


def conv2d(x, weight, bias, stride=1, pad=0):
    """Cross-correlation of ``x`` with ``weight`` plus ``bias``.

    ``pad`` zero-extends each border symmetrically (0 = valid convolution).
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if stride < 1:
        raise ValueError("conv2d: stride must be >= 1")
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d: expected (N,C,H,W) input and (K,C,h,w) filters, "
                         f"got {x.shape} and {weight.shape}")
    n_batch, channels, height, width = xd.shape
    k_out, k_in, kh, kw = weight.shape
    if channels != k_in:
        raise ValueError(f"conv2d: input has {channels} channels but filters expect {k_in}")
    if bias.shape != (k_out,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {k_out} filters")
    if kh > height + 2 * pad or kw > width + 2 * pad:
        raise ValueError(f"conv2d: filter {kh}x{kw} larger than input {height}x{width}")
    if pad:
        xd = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out_h = _conv_output_size(height, kh, stride, pad)
    out_w = _conv_output_size(width, kw, stride, pad)
    if stride == 1 and k_out <= _DIRECT_MAX_FILTERS:
        return _conv2d_direct(x, weight, bias, xd, pad, single)
    cols = kernels.im2col(xd, kh, kw, stride)
    wmat = weight.data.reshape(k_out, -1)
    out = np.matmul(wmat, cols) + bias.data[:, None]
    out = _from_cols(out, n_batch, out_h, out_w)

    def backward(g, needs):
        g4 = g[None] if single else g
        gm = _to_cols(g4)
        dx = dw = db = None
        if needs[0]:
            dcols = np.matmul(wmat.T, gm)
            dx = kernels.col2im(dcols, n_batch, channels, height + 2 * pad, width + 2 * pad,
                                kh, kw, stride)
            if pad:
                dx = dx[:, :, pad:pad + height, pad:pad + width]
            dx = dx[0] if single else dx
        if needs[1]:
            dw = np.matmul(gm, cols.T).reshape(weight.shape)
        if needs[2]:
            db = gm.sum(axis=1)
        return dx, dw, db

    return make_result(out[0] if single else out, "conv2d", (x, weight, bias), backward)


# below this many filters the im2col matrix dwarfs the useful work
_DIRECT_MAX_FILTERS = 2


def _conv2d_direct(x, weight, bias, xp, pad, single):
    """Stride-1 convolution for few filters, without an im2col matrix.

    Channels are contracted first (one matrix product per pass); the taps are
    then combined with shifted adds over arrays that only carry ``k_out``
    channels.
    """
    n_batch, channels, hp, wp = xp.shape
    k_out, _, kh, kw = weight.shape
    out_h, out_w = hp - kh + 1, wp - kw + 1
    # (C, N*Hp*Wp)
    xc = np.ascontiguousarray(xp.transpose(1, 0, 2, 3)).reshape(channels, -1)
    # (K*kh*kw, C)
    wt = np.ascontiguousarray(weight.data.transpose(0, 2, 3, 1)).reshape(-1, channels)
    mixed = np.matmul(wt, xc).reshape(k_out, kh, kw, n_batch, hp, wp)
    out = np.zeros((k_out, n_batch, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            out += mixed[:, i, j, :, i:i + out_h, j:j + out_w]
    out += bias.data[:, None, None, None]
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))

    def backward(g, needs):
        g4 = g[None] if single else g
        gk = np.ascontiguousarray(g4.transpose(1, 0, 2, 3))
        dx = dw = db = None
        if needs[0]:
            spread = np.zeros((k_out, kh, kw, n_batch, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    spread[:, i, j, :, i:i + out_h, j:j + out_w] = gk
            dxc = np.matmul(wt.T, spread.reshape(k_out * kh * kw, -1))
            dxp = dxc.reshape(channels, n_batch, hp, wp).transpose(1, 0, 2, 3)
            dx = np.ascontiguousarray(dxp[:, :, pad:hp - pad, pad:wp - pad])
            dx = dx[0] if single else dx
        if needs[1]:
            gm = gk.reshape(k_out, -1)
            xcv = xc.reshape(channels, n_batch, hp, wp)
            dw = np.empty_like(weight.data)
            for i in range(kh):
                for j in range(kw):
                    shifted = np.ascontiguousarray(xcv[:, :, i:i + out_h, j:j + out_w])
                    dw[:, :, i, j] = np.matmul(gm, shifted.reshape(channels, -1).T)
        if needs[2]:
            db = g4.sum(axis=(0, 2, 3))
        return dx, dw, db

    return make_result(out[0] if single else out, "conv2d", (x, weight, bias), backward)


def max_pool2d(x, window):
    """Non-overlapping max pooling; returns ``(output, argmax)``.

    ``argmax`` holds, per output cell, the row-major offset of the winner
    inside its window. Ties go to the first element in that order.
    """
    x = as_tensor(x)
    if window < 2:
        raise ValueError("max_pool2d: window must be >= 2")
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.shape[2] % window or xd.shape[3] % window:
        raise ValueError(f"max_pool2d: extents {xd.shape[2:]} not divisible by window {window}")
    out, arg = kernels.maxpool_forward(xd, window)

    def backward(g, needs):
        g4 = g[None] if single else g
        dx = kernels.maxpool_backward(g4, arg, window)
        return (dx[0] if single else dx,)

    result = make_result(out[0] if single else out, "max_pool2d", (x,), backward)
    return result, (arg[0] if single else arg)


def unpool2d(x, factor):
    """Place each value at the top-left of a ``factor x factor`` zero block."""
    x = as_tensor(x)
    if factor < 2:
        raise ValueError("unpool2d: factor must be >= 2")
    shape = x.shape[:-2] + (x.shape[-2] * factor, x.shape[-1] * factor)
    out = np.zeros(shape)
    out[..., ::factor, ::factor] = x.data

    def backward(g, needs):
        return (np.ascontiguousarray(g[..., ::factor, ::factor]),)

    return make_result(out, "unpool2d", (x,), backward)


def _phase_taps(k, pad, factor, phase):
    """Filter taps hitting non-zero input for output rows ``factor*m + phase``.

    Returns ``(taps, first_offset)``: the tap indices (step ``factor``) and the
    input row offset ``a - m`` of the first tap.
    """
    taps = [i for i in range(k) if (phase + i - pad) % factor == 0]
    first = (phase + taps[0] - pad) // factor if taps else 0
    return taps, first


# rows of the channels-last work matrix handled per chunk; keeps the
# accumulators cache-resident
_SHIFT_CHUNK_ROWS = 4096


def unpool_conv2d(x, weight, bias, factor=2):
    """``conv2d(unpool2d(x, factor), weight, bias, pad=(k-1)//2)`` without the zeros.

    Each output phase (row/column residue modulo ``factor``) only sees a
    subset of the filter taps. The input is zero-bordered and laid out
    channels-last, so with rows flattened over ``(N, H, W)`` a tap at input
    offset ``(a, b)`` is the contiguous row slice starting at ``a*W + b``:
    every tap becomes one ``(rows, C) @ (C, K)`` product with no column copy.
    Rows that fall in the border are computed and discarded.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    n_batch, channels, height, width = xd.shape
    k_out, k_in, kh, kw = weight.shape
    if channels != k_in:
        raise ValueError(f"unpool_conv2d: input has {channels} channels but filters expect {k_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("unpool_conv2d: needs odd filter extents for same-size output")
    pad_h, pad_w = (kh - 1) // 2, (kw - 1) // 2
    # enough zero border for every phase's shifted window
    margin = max(pad_h, pad_w) // factor + 1
    hp, wp = height + 2 * margin, width + 2 * margin
    xp = np.zeros((n_batch, hp, wp, channels))
    xp[:, margin:margin + height, margin:margin + width] = xd.transpose(0, 2, 3, 1)
    flat = xp.reshape(-1, channels)
    taps_w = np.ascontiguousarray(weight.data.transpose(2, 3, 1, 0))  # (kh, kw, C, K)

    phases = []
    for py in range(factor):
        ty, oy = _phase_taps(kh, pad_h, factor, py)
        for px in range(factor):
            tx, ox = _phase_taps(kw, pad_w, factor, px)
            taps = [(i, j, (margin + oy + a) * wp + margin + ox + b)
                    for a, i in enumerate(ty) for b, j in enumerate(tx)]
            phases.append((py, px, taps))

    plane = hp * wp
    chunk = max(1, _SHIFT_CHUNK_ROWS // plane)
    out = np.empty((n_batch, height * factor, width * factor, k_out))
    for s in range(0, n_batch, chunk):
        e = min(n_batch, s + chunk)
        src = flat[s * plane:e * plane]
        rows = len(src)
        tmp = np.empty((rows, k_out))
        for py, px, taps in phases:
            acc = np.zeros((rows, k_out))
            for i, j, off in taps:
                part = tmp[:rows - off]
                np.matmul(src[off:], taps_w[i, j], out=part)
                acc[:rows - off] += part
            out[s:e, py::factor, px::factor] = acc.reshape(e - s, hp, wp, k_out)[:, :height, :width]
    out += bias.data
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(g, needs):
        g4 = g[None] if single else g
        g_cl = g4.transpose(0, 2, 3, 1)
        dflat = np.zeros_like(flat) if needs[0] else None
        dw = np.zeros_like(taps_w) if needs[1] else None
        for s in range(0, n_batch, chunk):
            e = min(n_batch, s + chunk)
            lo, hi = s * plane, e * plane
            rows = hi - lo
            src = flat[lo:hi]
            for py, px, taps in phases:
                # phase gradient on the bordered grid; border rows stay zero
                gp = np.zeros((e - s, hp, wp, k_out))
                gp[:, :height, :width] = g_cl[s:e, py::factor, px::factor]
                gp = gp.reshape(rows, k_out)
                for i, j, off in taps:
                    if needs[0]:
                        dflat[lo + off:hi] += gp[:rows - off] @ taps_w[i, j].T
                    if needs[1]:
                        dw[i, j] += src[off:].T @ gp[:rows - off]
        dx = None
        if needs[0]:
            dx = dflat.reshape(n_batch, hp, wp, channels)[:, margin:margin + height,
                                                          margin:margin + width]
            dx = np.ascontiguousarray(dx.transpose(0, 3, 1, 2))
            dx = dx[0] if single else dx
        dwt = np.ascontiguousarray(dw.transpose(3, 2, 0, 1)) if needs[1] else None
        db = g4.sum(axis=(0, 2, 3)) if needs[2] else None
        return dx, dwt, db

    return make_result(out[0] if single else out, "unpool_conv2d", (x, weight, bias), backward)
