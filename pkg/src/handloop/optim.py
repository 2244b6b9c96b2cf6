"""RMSprop with gradient truncation, weight decay and a geometric learning-rate decay."""
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RmsPropState:
    """Running mean of squared (truncated) gradients, one array per parameter."""

    mean_square: dict = field(default_factory=dict)
    decay: float = 0.9
    epsilon: float = 1e-6
    clip: float = 0.01
    # "element": clamp each entry to [-clip, clip]; "norm": rescale each
    # parameter's gradient to L2 norm <= clip
    clip_mode: str = "element"

    @classmethod
    def for_params(cls, params, **kwargs):
        state = cls(**kwargs)
        state.mean_square = {k: np.zeros_like(v) for k, v in params.items()}
        return state


@dataclass
class LrSchedule:
    initial_lr: float
    decay_factor: float = 0.95

    def __post_init__(self):
        if self.initial_lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ValueError("learning rate must be positive and decay_factor in (0, 1]")

    def lr(self, epoch):
        return schedule_lr(self, epoch)


def schedule_lr(schedule, epoch):
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return schedule.initial_lr * schedule.decay_factor ** epoch


def truncate(grad, clip, mode="element"):
    if mode == "element":
        return np.clip(grad, -clip, clip)
    if mode == "norm":
        norm = np.sqrt(np.dot(grad.ravel(), grad.ravel()))
        return grad * (clip / norm) if norm > clip else grad
    raise ValueError(f"unknown clip mode {mode!r}")


def rmsprop_step(params, grads, state, lr):
    """One RMSprop update.

    Returns new ``(params, state)``; the inputs are not modified. Raises
    ``FloatingPointError`` naming the first parameter with a non-finite
    gradient.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    new_params, new_ms = dict(params), dict(state.mean_square)
    for name, g in grads.items():
        g = truncate(g, state.clip, state.clip_mode)
        ms = state.decay * state.mean_square[name] + (1.0 - state.decay) * g * g
        new_ms[name] = ms
        new_params[name] = params[name] - lr * g / np.sqrt(ms + state.epsilon)
    new_state = RmsPropState(new_ms, state.decay, state.epsilon, state.clip, state.clip_mode)
    return new_params, new_state


def apply_weight_decay(grads, params, gamma):
    """Add the gradient of ``gamma * ||params||^2`` to ``grads``."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return dict(grads)
    return {k: g + 2.0 * gamma * params[k] for k, g in grads.items()}


class RmsProp:
    """Stateful wrapper that trains a Model's parameter tensors in place."""

    def __init__(self, model, schedule, decay=0.9, epsilon=1e-6, clip=0.01, clip_mode="element",
                 weight_decay=0.0):
        self.model = model
        self.schedule = schedule
        self.weight_decay = weight_decay
        self.state = RmsPropState.for_params(model.arrays(), decay=decay, epsilon=epsilon,
                                             clip=clip, clip_mode=clip_mode)

    def step(self, epoch):
        params = self.model.arrays()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                 for k, t in self.model.params.items()}
        grads = apply_weight_decay(grads, params, self.weight_decay)
        new_params, self.state = rmsprop_step(params, grads, self.state,
                                              schedule_lr(self.schedule, epoch))
        for k, t in self.model.params.items():
            t.data = new_params[k]
            t.grad = None
