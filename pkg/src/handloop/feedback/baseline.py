"""Image-space pose optimisation: minimise the synthesizer residual directly."""
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tape, Tensor, sub, sum_squares
from .loop import _frames, model_resolution


@dataclass
class BaselineConfig:
    max_iterations: int = 50
    lower: float = -1.0
    upper: float = 1.0
    initial_step: float = 0.1
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    tolerance: float = 1e-8
    max_backtracks: int = 30

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("baseline bounds must satisfy lower < upper")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if self.initial_step <= 0 or self.max_iterations < 0:
            raise ValueError("initial_step must be positive and max_iterations >= 0")


def image_objective(synthesizer, frames, poses):
    """Per-frame mean squared residual ``|D - synth(p)|^2 / |D|``."""
    out = synthesizer(Tensor(poses)).data[:, 0]
    return np.mean((out - frames) ** 2, axis=(1, 2))


def objective_and_gradient(synthesizer, frames, poses):
    """Objective per frame and its gradient with respect to each pose."""
    synthesizer.set_trainable(False)
    p = Tensor(poses, requires_grad=True)
    with Tape():
        out = synthesizer(p)
        scale = 1.0 / (frames.shape[1] * frames.shape[2])
        loss = sum_squares(sub(out, Tensor(frames[:, None]))) * scale
        loss.backward()
    values = np.mean((out.data[:, 0] - frames) ** 2, axis=(1, 2))
    return values, p.grad


def baseline_optimize(synthesizer, frames, initial, config=None):
    """Projected gradient descent with Armijo backtracking inside the pose box.

    Each frame runs its own line search: the search direction is the unit
    gradient, the trial step starts at ``initial_step`` and shrinks until the
    projected point gives a sufficient decrease. A frame stops when no step is
    accepted, when the decrease falls below ``tolerance``, or after
    ``max_iterations``. Returns ``(poses, trace)`` where ``trace`` has shape
    ``(iterations + 1, N)`` (one row per iteration, frozen frames repeat their
    last value).
    """
    cfg = config or BaselineConfig()
    x, single = _frames(frames, model_resolution(synthesizer), "baseline_optimize")
    p = np.clip(np.asarray(initial, dtype=np.float64).reshape(len(x), -1), cfg.lower, cfg.upper)
    active = np.ones(len(x), dtype=bool)
    f, grad = objective_and_gradient(synthesizer, x, p)
    trace = [f.copy()]
    for _ in range(cfg.max_iterations):
        if not active.any():
            break
        norm = np.linalg.norm(grad, axis=1)
        active &= norm > 0
        step = np.full(len(x), cfg.initial_step)
        searching = active.copy()
        accepted = np.zeros(len(x), dtype=bool)
        trial = p.copy()
        f_trial = f.copy()
        for _ in range(cfg.max_backtracks):
            if not searching.any():
                break
            idx = np.flatnonzero(searching)
            direction = grad[idx] / norm[idx, None]
            cand = np.clip(p[idx] - step[idx, None] * direction, cfg.lower, cfg.upper)
            f_cand = image_objective(synthesizer, x[idx], cand)
            moved = np.sum(grad[idx] * (p[idx] - cand), axis=1)
            ok = f_cand <= f[idx] - cfg.sufficient_decrease * moved
            ok &= f_cand < f[idx]
            good = idx[ok]
            trial[good], f_trial[good] = cand[ok], f_cand[ok]
            accepted[good] = True
            searching[good] = False
            step[idx[~ok]] *= cfg.shrink
        decrease = f - f_trial
        p[accepted] = trial[accepted]
        f[accepted] = f_trial[accepted]
        active &= accepted & (decrease > cfg.tolerance)
        trace.append(f.copy())
        if active.any():
            idx = np.flatnonzero(active)
            _, g = objective_and_gradient(synthesizer, x[idx], p[idx])
            grad[idx] = g
    trace = np.stack(trace)
    if single:
        return p[0], trace[:, 0]
    return p, trace
