"""Structured-light style sensor artefacts and pose perturbation."""
from dataclasses import dataclass

import numpy as np


@dataclass
class NoiseSettings:
    hole_prob: float = 0.15     # chance a boundary pixel loses its depth
    depth_sigma: float = 0.01   # Gaussian depth noise, normalized units
    jump: float = 0.05          # neighbour difference that counts as a discontinuity

    @classmethod
    def off(cls):
        return cls(hole_prob=0.0, depth_sigma=0.0)


def boundary_mask(frame, jump=0.05):
    """Foreground pixels within one pixel (8-neighbourhood) of a depth discontinuity."""
    padded = np.pad(frame, 1, mode="edge")
    rows, cols = frame.shape
    near = np.zeros(frame.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = padded[1 + dy:1 + dy + rows, 1 + dx:1 + dx + cols]
            near |= np.abs(shifted - frame) > jump
    return near & (frame < 1.0)


def add_sensor_noise(frame, rng, settings=None):
    """Drop boundary pixels to +1 and jitter the remaining surface depths.

    Always draws one uniform and one normal variate per pixel, so the random
    stream advances identically whatever the settings.
    """
    settings = settings or NoiseSettings()
    frame = np.asarray(frame, dtype=np.float64)
    u = rng.random(frame.shape)
    n = rng.standard_normal(frame.shape)
    out = frame.copy()
    if settings.hole_prob > 0:
        holes = boundary_mask(frame, settings.jump) & (u < settings.hole_prob)
        out[holes] = 1.0
    if settings.depth_sigma > 0:
        surface = out < 1.0
        out[surface] += settings.depth_sigma * n[surface]
    return np.clip(out, -1.0, 1.0)


def perturb_pose(pose, sigma, rng):
    """Add i.i.d. Gaussian noise to every coordinate (no clamping)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    pose = np.asarray(pose, dtype=np.float64)
    noise = rng.standard_normal(pose.shape)
    return pose + sigma * noise
