"""Procedural articulated-hand depth data and hand-cube normalization."""
from .dataset import (Dataset, dataset_bytes, dataset_from_bytes, generate_dataset, make_record,
                      read_dataset, record_rng, write_dataset)
from .noise import NoiseSettings, add_sensor_noise, boundary_mask, perturb_pose
from .render import normalize_cube, pixel_grid, render_depth, render_primitives
from .skeleton import (ANGLE_NAMES, JOINT_NAMES, N_ANGLES, CubeParams, HandSkeleton,
                       denormalize_pose, forward_kinematics, normalize_joints, sample_angles,
                       sample_pose)

__all__ = [
    "ANGLE_NAMES", "JOINT_NAMES", "N_ANGLES", "CubeParams", "Dataset", "HandSkeleton",
    "NoiseSettings", "add_sensor_noise", "boundary_mask", "dataset_bytes", "dataset_from_bytes",
    "denormalize_pose", "forward_kinematics", "generate_dataset", "make_record",
    "normalize_cube", "normalize_joints", "perturb_pose", "pixel_grid", "read_dataset",
    "record_rng", "render_depth", "render_primitives", "sample_angles", "sample_pose",
    "write_dataset",
]
