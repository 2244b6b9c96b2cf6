"""Central finite-difference checks of tape gradients."""
import numpy as np

from .tensor import Tape, Tensor


def finite_diff_check(f, x, step=1e-6, coords=None):
    """Max over coordinates of ``|analytic - numeric| / max(1, |analytic|)``.

    ``f`` maps a Tensor to a scalar Tensor. ``coords`` optionally restricts the
    check to a subset of flat indices of ``x``.
    """
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    probe = Tensor(base, requires_grad=True)
    with Tape():
        out = f(probe)
        out.backward()
    analytic = probe.grad.ravel() if probe.grad is not None else np.zeros(base.size)

    flat = base.ravel()
    idx = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + step
        up = f(Tensor(base)).item()
        flat[i] = orig - step
        down = f(Tensor(base)).item()
        flat[i] = orig
        numeric = (up - down) / (2 * step)
        err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst


def check_parameters(loss_fn, params, picks, step=1e-6):
    """Finite-difference check of ``loss_fn()`` w.r.t. chosen parameter entries.

    ``params`` maps names to leaf Tensors that ``loss_fn`` reads; ``picks`` is
    a list of ``(name, flat_index)``. Returns the max relative error.
    """
    for p in params.values():
        p.requires_grad = True
        p.grad = None
    with Tape():
        loss = loss_fn()
        loss.backward()
    worst = 0.0
    for name, i in picks:
        p = params[name]
        flat = p.data.reshape(-1)
        analytic = p.grad.reshape(-1)[i] if p.grad is not None else 0.0
        orig = flat[i]
        flat[i] = orig + step
        up = loss_fn().item()
        flat[i] = orig - step
        down = loss_fn().item()
        flat[i] = orig
        numeric = (up - down) / (2 * step)
        worst = max(worst, abs(analytic - numeric) / max(1.0, abs(analytic)))
    for p in params.values():
        p.grad = None
    return worst
