"""Backend selection for the hot convolution/pooling loops.

``im2col`` lays a batch out as a ``(C*kh*kw, N*Ho*Wo)`` matrix (rows ordered
channel, filter row, filter column; columns ordered sample, output row,
output column) so a convolution is one matrix product.

The compiled extension is used when it was built; otherwise (or when
``HANDLOOP_PURE_PYTHON=1`` is set) the numpy fallback is used. Both backends
produce bit-identical results.
"""
import os

import numpy as np

from . import _pykernels

_compiled = None
if not os.environ.get("HANDLOOP_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]


def use_backend(name):
    """Switch the active backend; returns the previous backend name."""
    global BACKEND, _impl
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable (have {sorted(BACKENDS)})")
    previous = BACKEND
    BACKEND, _impl = name, BACKENDS[name]
    return previous


def im2col(x, kh, kw, stride):
    return _impl.im2col(np.ascontiguousarray(x, dtype=np.float64), kh, kw, stride)


def col2im(cols, n_batch, channels, height, width, kh, kw, stride):
    return _impl.col2im(np.ascontiguousarray(cols, dtype=np.float64),
                        n_batch, channels, height, width, kh, kw, stride)


def maxpool_forward(x, window):
    return _impl.maxpool_forward(np.ascontiguousarray(x, dtype=np.float64), window)


def maxpool_backward(grad, arg, window):
    return _impl.maxpool_backward(np.ascontiguousarray(grad, dtype=np.float64),
                                  np.ascontiguousarray(arg, dtype=np.int64), window)
