"""Synthetic (depth frame, pose) datasets and the HPDS file format."""
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError
from .noise import NoiseSettings, add_sensor_noise
from .render import render_depth
from .skeleton import CubeParams, HandSkeleton, forward_kinematics, normalize_joints, sample_angles

MAGIC = b"HPDS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIdQ")


@dataclass
class Dataset:
    frames: np.ndarray          # (N, R, R)
    poses: np.ndarray           # (N, 3J)
    half_extent: float = 150.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.poses = np.asarray(self.poses, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[1] != self.frames.shape[2]:
            raise ValueError(f"frames must be (N, R, R), got {self.frames.shape}")
        if self.poses.ndim != 2 or self.poses.shape[1] % 3:
            raise ValueError(f"poses must be (N, 3J), got {self.poses.shape}")
        if len(self.frames) != len(self.poses):
            raise ValueError("frame and pose counts differ")

    def __len__(self):
        return len(self.frames)

    @property
    def resolution(self):
        return self.frames.shape[1]

    @property
    def joints(self):
        return self.poses.shape[1] // 3

    @property
    def cube(self):
        return CubeParams(half_extent=self.half_extent)

    def subset(self, index):
        return Dataset(self.frames[index], self.poses[index], self.half_extent, dict(self.meta))

    def equals(self, other):
        return (self.half_extent == other.half_extent
                and self.frames.shape == other.frames.shape
                and self.poses.shape == other.poses.shape
                and self.frames.tobytes() == other.frames.tobytes()
                and self.poses.tobytes() == other.poses.tobytes())


def record_rng(seed, index):
    """Independent stream per record, so any subset regenerates identically."""
    return np.random.default_rng([int(seed), int(index)])


def make_record(index, seed, resolution=64, noise=True, skeleton=None, cube=None):
    skeleton = skeleton or HandSkeleton()
    cube = cube or CubeParams()
    rng = record_rng(seed, index)
    angles = sample_angles(skeleton, rng)
    joints, _ = forward_kinematics(angles, skeleton, cube)
    frame = render_depth(angles, skeleton, cube, resolution)
    settings = noise if isinstance(noise, NoiseSettings) else (
        NoiseSettings() if noise else NoiseSettings.off())
    frame = add_sensor_noise(frame, rng, settings)
    return frame, normalize_joints(joints, cube)


def generate_dataset(count, resolution=64, seed=0, noise=True, start=0, skeleton=None,
                     half_extent=150.0):
    """Records ``start .. start+count-1`` of the stream defined by ``seed``."""
    if resolution % 8 or resolution < 8:
        raise ValueError("resolution must be a positive multiple of 8")
    skeleton = skeleton or HandSkeleton()
    cube = CubeParams(half_extent=half_extent)
    frames = np.empty((count, resolution, resolution))
    poses = np.empty((count, 3 * skeleton.n_joints))
    for k in range(count):
        frames[k], poses[k] = make_record(start + k, seed, resolution, noise, skeleton, cube)
    meta = {"seed": seed, "start": start, "noise": bool(noise)}
    return Dataset(frames, poses, half_extent, meta)


def dataset_bytes(ds):
    n, r, _ = ds.frames.shape
    parts = [_HEADER.pack(MAGIC, VERSION, r, ds.joints, float(ds.half_extent), n)]
    body = np.concatenate([ds.frames.reshape(n, -1), ds.poses], axis=1) if n else np.empty(0)
    parts.append(np.ascontiguousarray(body, dtype="<f8").tobytes())
    return b"".join(parts)


def dataset_from_bytes(blob):
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError("bad magic")
    if len(blob) < _HEADER.size:
        raise FormatError("unexpected end of stream")
    _, version, r, j, half, n = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise FormatError(f"version mismatch: file has {version}, expected {VERSION}")
    width = r * r + 3 * j
    body = len(blob) - _HEADER.size
    if body % (8 * width):
        raise FormatError("unexpected end of stream")
    found = body // (8 * width)
    if found != n:
        raise FormatError(f"record count mismatch: header says {n}, body holds {found}")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    data = data.reshape(n, width)
    return Dataset(data[:, :r * r].reshape(n, r, r), data[:, r * r:].reshape(n, 3 * j), half)


def write_dataset(ds, path):
    with open(path, "wb") as fh:
        fh.write(dataset_bytes(ds))


def read_dataset(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())
