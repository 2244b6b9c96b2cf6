"""Run-time composition of the three networks."""
from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor
from ..networks.training import frames_4d


def model_resolution(model):
    if model.kind == "synthesizer":
        return int(model.meta["resolution"])
    return int(model.input_shape[-1])


def check_networks(*models):
    """Reject a set of networks that disagree on frame resolution."""
    res = {m.kind: model_resolution(m) for m in models if m is not None}
    if len(set(res.values())) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in res.items())
        raise ValueError(f"network resolution mismatch: {detail}")
    return next(iter(res.values())) if res else None


def _frames(frames, resolution, who):
    x = np.asarray(frames, dtype=np.float64)
    single = x.ndim == 2
    x = x[None] if single else x
    if x.ndim != 3 or x.shape[1:] != (resolution, resolution):
        raise ValueError(f"{who}: frame shape {np.shape(frames)[-2:]} does not match "
                         f"trained resolution {resolution}")
    return x, single


@dataclass
class LoopConfig:
    predictor: object = None
    synthesizer: object = None
    updater: object = None
    iterations: int = 2

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    @property
    def resolution(self):
        return check_networks(self.predictor, self.synthesizer, self.updater)


def predict_initial(predictor, frames):
    """Predictor forward pass for one ``(R, R)`` frame or a ``(N, R, R)`` batch."""
    x, single = _frames(frames, model_resolution(predictor), "predict_initial")
    pose = predictor(Tensor(frames_4d(x))).data
    return pose[0] if single else pose


def synthesize(synthesizer, poses):
    """Synthesizer forward pass for one pose or a batch of poses."""
    p = np.asarray(poses, dtype=np.float64)
    single = p.ndim == 1
    out = synthesizer(Tensor(p[None] if single else p)).data[:, 0]
    return out[0] if single else out


def update_step(updater, synthesizer, frames, poses):
    """``pose + upd(frame, synth(pose))`` for one frame or a batch."""
    check_networks(synthesizer, updater)
    x, single = _frames(frames, model_resolution(updater), "update_step")
    p = np.asarray(poses, dtype=np.float64).reshape(len(x), -1)
    synth = synthesizer(Tensor(p)).data
    new = p + updater(Tensor(frames_4d(x)), Tensor(synth)).data
    return new[0] if single else new


def run_feedback_loop(frames, config):
    """Predict, then apply ``config.iterations`` update steps.

    Returns ``(final, trace)``; ``trace[i]`` is the estimate after ``i`` steps
    (``trace[0]`` is the predictor output), so it has ``iterations + 1`` entries.
    """
    config.resolution
    pose = predict_initial(config.predictor, frames)
    trace = [pose]
    for _ in range(config.iterations):
        pose = update_step(config.updater, config.synthesizer, frames, pose)
        trace.append(pose)
    return pose, np.stack(trace)


def run_batched_loop(frames, config, batch_size=256):
    """``run_feedback_loop`` over a large ``(N, R, R)`` set, in chunks.

    Returns the trace with shape ``(iterations + 1, N, 3J)``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    parts = [run_feedback_loop(frames[s:s + batch_size], config)[1]
             for s in range(0, len(frames), batch_size)]
    return np.concatenate(parts, axis=1)
