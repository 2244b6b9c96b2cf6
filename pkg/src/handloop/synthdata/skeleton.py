"""Articulated 14-joint hand skeleton and its forward kinematics.

Hand-local frame, in millimetres: origin at the palm centre, +x to the right,
+y along the extended fingers, +z away from the camera (the palm faces -z).
Flexing a finger curls it towards -z and -y.
"""
from dataclasses import dataclass, field

import numpy as np

JOINT_NAMES = (
    "wrist_a", "wrist_b", "palm",
    "thumb_root", "thumb_mid", "thumb_tip",
    "index_mid", "index_tip", "middle_mid", "middle_tip",
    "ring_mid", "ring_tip", "pinky_mid", "pinky_tip",
)
FINGERS = ("index", "middle", "ring", "pinky")

# angle vector layout
ANGLE_NAMES = tuple(
    [f"{f}_{a}" for f in FINGERS for a in ("abduct", "mcp_flex", "pip_flex")]
    + ["thumb_abduct", "thumb_root_flex", "thumb_mid_flex", "roll", "pitch", "yaw", "tx", "ty", "tz"]
)
N_ANGLES = len(ANGLE_NAMES)
GLOBAL_ROT = slice(15, 18)
TRANSLATION = slice(18, 21)

_D = np.pi / 180.0


@dataclass
class CubeParams:
    """Metric cube around the hand; ``half_extent`` in mm."""

    center: tuple = (0.0, 0.0, 600.0)
    half_extent: float = 150.0

    def __post_init__(self):
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")
        self.center = tuple(float(c) for c in self.center)


def _default_limits():
    lo, hi = [], []
    for _ in FINGERS:
        lo += [-15 * _D, 0.0, 0.0]
        hi += [15 * _D, 90 * _D, 90 * _D]
    lo += [-10 * _D, 0.0, 0.0]
    hi += [40 * _D, 50 * _D, 80 * _D]
    lo += [-60 * _D, -30 * _D, -30 * _D, -10.0, -10.0, -10.0]
    hi += [60 * _D, 30 * _D, 30 * _D, 10.0, 10.0, 10.0]
    return np.array(lo), np.array(hi)


@dataclass
class HandSkeleton:
    wrist: tuple = ((-22.0, -48.0, 0.0), (22.0, -48.0, 0.0))
    palm_axes: tuple = (40.0, 46.0, 13.0)
    # cube centre sits at this hand-local point for the canonical pose
    anchor: tuple = (0.0, 25.0, 0.0)
    finger_base: tuple = ((-27.0, 40.0, 0.0), (-9.0, 44.0, 0.0), (9.0, 42.0, 0.0), (26.0, 36.0, 0.0))
    finger_len: tuple = ((38.0, 40.0), (42.0, 44.0), (39.0, 41.0), (30.0, 33.0))
    finger_radius: tuple = ((8.5, 7.5), (8.5, 7.5), (8.0, 7.0), (7.0, 6.0))
    thumb_root: tuple = (-36.0, -22.0, -4.0)
    thenar_base: tuple = (-12.0, -30.0, 0.0)
    thumb_rest_angle: float = 40 * _D
    thumb_len: tuple = (34.0, 32.0)
    thumb_radius: tuple = (10.0, 9.0)
    thenar_radius: float = 13.0
    wrist_radius: float = 16.0
    forearm_len: float = 170.0
    forearm_radius: float = 24.0
    limits: tuple = field(default_factory=_default_limits)

    @property
    def n_joints(self):
        return len(JOINT_NAMES)

    def __post_init__(self):
        lengths = np.concatenate([np.ravel(self.finger_len), self.thumb_len])
        if np.any(lengths <= 0):
            raise ValueError("segment lengths must be positive")


def rotation(roll, pitch, yaw):
    """``Rz(roll) @ Rx(pitch) @ Ry(yaw)``."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    return rz @ rx @ ry


def _bend(direction, angle):
    """Tilt an in-palm-plane unit direction towards -z by ``angle``."""
    return np.cos(angle) * direction - np.sin(angle) * np.array([0.0, 0.0, 1.0])


def _local_chain(angles, sk):
    """Joint positions plus capsule list in the hand-local frame."""
    joints = np.zeros((len(JOINT_NAMES), 3))
    capsules = []
    wa, wb = np.array(sk.wrist[0]), np.array(sk.wrist[1])
    joints[0], joints[1], joints[2] = wa, wb, 0.0
    wrist_mid = 0.5 * (wa + wb)
    capsules.append((wrist_mid, wrist_mid - np.array([0.0, sk.forearm_len, 0.0]), sk.forearm_radius))
    capsules.append((wa, wb, sk.wrist_radius))

    abd, f1, f2 = angles[12:15]
    root = np.array(sk.thumb_root)
    rest = sk.thumb_rest_angle + abd
    base_dir = np.array([-np.sin(rest), np.cos(rest), 0.0])
    mid = root + sk.thumb_len[0] * _bend(base_dir, f1)
    tip = mid + sk.thumb_len[1] * _bend(base_dir, f1 + f2)
    joints[3], joints[4], joints[5] = root, mid, tip
    capsules.append((np.array(sk.thenar_base), root, sk.thenar_radius))
    capsules.append((root, mid, sk.thumb_radius[0]))
    capsules.append((mid, tip, sk.thumb_radius[1]))

    for k in range(4):
        abd, f1, f2 = angles[3 * k:3 * k + 3]
        base = np.array(sk.finger_base[k])
        direction = np.array([-np.sin(abd), np.cos(abd), 0.0])
        mid = base + sk.finger_len[k][0] * _bend(direction, f1)
        tip = mid + sk.finger_len[k][1] * _bend(direction, f1 + f2)
        joints[6 + 2 * k], joints[7 + 2 * k] = mid, tip
        capsules.append((base, mid, sk.finger_radius[k][0]))
        capsules.append((mid, tip, sk.finger_radius[k][1]))
    return joints, capsules


def forward_kinematics(angles, skeleton, cube):
    """World-frame (mm) joints ``(J, 3)`` and render primitives for an angle vector.

    Primitives are ``{"capsules": [(a, b, r), ...], "ellipsoids": [(c, axes, R), ...]}``.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (N_ANGLES,):
        raise ValueError(f"angle vector must have length {N_ANGLES}")
    joints, capsules = _local_chain(angles, skeleton)
    rot = rotation(*angles[GLOBAL_ROT])
    offset = np.asarray(cube.center) + angles[TRANSLATION]
    anchor = np.asarray(skeleton.anchor)

    def to_world(p):
        return rot @ (p - anchor) + offset

    world_joints = (joints - anchor) @ rot.T + offset
    prims = {
        "capsules": [(to_world(a), to_world(b), r) for a, b, r in capsules],
        "ellipsoids": [(to_world(np.zeros(3)), np.asarray(skeleton.palm_axes, dtype=float), rot)],
    }
    return world_joints, prims


def normalize_joints(joints_mm, cube):
    return ((np.asarray(joints_mm) - np.asarray(cube.center)) / cube.half_extent).reshape(-1)


def denormalize_pose(pose, cube):
    return np.asarray(pose).reshape(-1, 3) * cube.half_extent + np.asarray(cube.center)


def sample_angles(skeleton, rng):
    lo, hi = skeleton.limits
    return rng.uniform(lo, hi)


def sample_pose(skeleton, rng, cube=None):
    """Uniform in-limit angles and the matching normalized pose vector."""
    cube = cube or CubeParams()
    angles = sample_angles(skeleton, rng)
    joints, _ = forward_kinematics(angles, skeleton, cube)
    return angles, normalize_joints(joints, cube)
