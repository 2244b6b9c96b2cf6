import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handloop.errors import FormatError
from handloop.synthdata import (ANGLE_NAMES, JOINT_NAMES, CubeParams, Dataset, HandSkeleton,
                                NoiseSettings, add_sensor_noise, boundary_mask, dataset_bytes,
                                dataset_from_bytes, forward_kinematics, generate_dataset,
                                normalize_cube, perturb_pose, read_dataset, render_depth,
                                render_primitives, sample_angles, sample_pose, write_dataset)
from handloop.synthdata.render import pixel_grid

SK = HandSkeleton()
CUBE = CubeParams()


def test_layout_sizes():
    assert len(JOINT_NAMES) == 14 and SK.n_joints == 14
    assert len(ANGLE_NAMES) == 21


def test_flat_hand_fingertips_are_chain_sums():
    joints, _ = forward_kinematics(np.zeros(21), SK, CUBE)
    anchor = np.array(SK.anchor)
    centre = np.array(CUBE.center)
    for k, name in enumerate(("index", "middle", "ring", "pinky")):
        base = np.array(SK.finger_base[k])
        tip_local = base + np.array([0.0, sum(SK.finger_len[k]), 0.0])
        np.testing.assert_allclose(joints[JOINT_NAMES.index(f"{name}_tip")],
                                   tip_local - anchor + centre, atol=1e-9)
        mid_local = base + np.array([0.0, SK.finger_len[k][0], 0.0])
        np.testing.assert_allclose(joints[JOINT_NAMES.index(f"{name}_mid")],
                                   mid_local - anchor + centre, atol=1e-9)
    np.testing.assert_allclose(joints[JOINT_NAMES.index("palm")], centre - anchor)


def test_same_seed_same_pose():
    a = sample_pose(SK, np.random.default_rng(5))
    b = sample_pose(SK, np.random.default_rng(5))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_sampled_poses_stay_in_cube():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        _, pose = sample_pose(SK, rng)
        assert pose.shape == (42,)
        worst = max(worst, np.abs(pose).max())
    assert worst <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.floats(0.0, np.pi / 2), st.floats(0.0, np.pi / 2 - 0.02))
def test_flexion_lowers_fingertip(finger, mcp, pip):
    angles = np.zeros(21)
    angles[3 * finger + 1] = mcp
    angles[3 * finger + 2] = pip
    tip = JOINT_NAMES.index(("index", "middle", "ring", "pinky")[finger] + "_tip")
    before = forward_kinematics(angles, SK, CUBE)[0][tip, 1]
    angles[3 * finger + 2] = pip + 0.02
    after = forward_kinematics(angles, SK, CUBE)[0][tip, 1]
    assert after < before


def test_empty_scene_renders_background():
    sk = HandSkeleton(finger_radius=((0.0, 0.0),) * 4, thumb_radius=(0.0, 0.0), thenar_radius=0.0,
                      wrist_radius=0.0, forearm_radius=0.0, palm_axes=(0.0, 0.0, 0.0))
    frame = render_depth(np.zeros(21), sk, CUBE, 32)
    assert np.all(frame == 1.0)


def test_sphere_depth_closed_form():
    r, res = 40.0, 32
    c = np.array(CUBE.center)
    prims = {"capsules": [(c, c, r)]}
    frame = normalize_cube(render_primitives(prims, CUBE, res), CUBE)
    px, py = pixel_grid(CUBE, res)
    d2 = (px - c[0]) ** 2 + (py - c[1]) ** 2
    expected = np.where(d2 <= r * r, -np.sqrt(np.maximum(r * r - d2, 0)) / CUBE.half_extent, 1.0)
    np.testing.assert_allclose(frame, expected, atol=1e-12)
    assert frame.min() >= -r / CUBE.half_extent
    assert frame.min() == pytest.approx(-np.sqrt(r * r - d2.min()) / CUBE.half_extent)
    centre = frame[res // 2, res // 2]
    assert centre < frame[0, 0] and centre < frame[res // 2, 0]


def test_joints_project_onto_the_surface():
    rng = np.random.default_rng(3)
    res = 64
    for _ in range(20):
        angles = sample_angles(SK, rng)
        joints, _ = forward_kinematics(angles, SK, CUBE)
        frame = render_depth(angles, SK, CUBE, res)
        px, py = pixel_grid(CUBE, res)
        step = 2 * CUBE.half_extent / res
        for x, y, _ in joints:
            col = int((x - px[0, 0]) / step + 0.5)
            row = int((py[0, 0] - y) / step + 0.5)
            if 0 <= row < res and 0 <= col < res:
                assert frame[row, col] < 1.0


def test_render_is_deterministic_and_bounded():
    angles = sample_angles(SK, np.random.default_rng(9))
    a = render_depth(angles, SK, CUBE, 32)
    b = render_depth(angles, SK, CUBE, 32)
    assert a.tobytes() == b.tobytes()
    assert a.min() >= -1 and a.max() <= 1


def test_normalize_cube_rules():
    out = normalize_cube(np.array([600.0, np.nan, 10_000.0, 0.0, 675.0]), CUBE)
    assert out.tolist() == [0.0, 1.0, 1.0, -1.0, 0.5]


def test_noise_off_is_identity():
    frame = render_depth(sample_angles(SK, np.random.default_rng(1)), SK, CUBE, 32)
    out = add_sensor_noise(frame, np.random.default_rng(0), NoiseSettings.off())
    np.testing.assert_array_equal(out, frame)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.floats(0.0, 1.0), st.floats(0.0, 2.0))
def test_noise_keeps_range(seed, hole, sigma):
    frame = render_depth(sample_angles(SK, np.random.default_rng(seed)), SK, CUBE, 16)
    out = add_sensor_noise(frame, np.random.default_rng(seed), NoiseSettings(hole, sigma))
    assert out.min() >= -1.0 and out.max() <= 1.0


def test_hole_rate_on_boundary_pixels():
    rng = np.random.default_rng(11)
    settings_ = NoiseSettings(hole_prob=0.15, depth_sigma=0.0)
    dropped = total = 0
    while total < 10_000:
        frame = render_depth(sample_angles(SK, rng), SK, CUBE, 64)
        mask = boundary_mask(frame)
        out = add_sensor_noise(frame, rng, settings_)
        dropped += int(np.sum(out[mask] == 1.0))
        total += int(mask.sum())
        # nothing off the boundary changes
        assert np.array_equal(out[~mask], frame[~mask])
    frac = dropped / total
    sigma = np.sqrt(0.15 * 0.85 / total)
    assert abs(frac - 0.15) < 3 * sigma


def test_perturb_pose_statistics():
    rng = np.random.default_rng(2)
    pose = np.zeros(42)
    assert np.array_equal(perturb_pose(pose, 0.0, rng), pose)
    draws = np.stack([perturb_pose(pose, 0.1, rng) for _ in range(10_000)])
    std = draws.std(axis=0)
    se = 0.1 / np.sqrt(2 * len(draws))
    assert np.all(np.abs(std - 0.1) < 3 * se)
    a = perturb_pose(pose, 0.1, np.random.default_rng(4))
    b = perturb_pose(pose, 0.1, np.random.default_rng(4))
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ValueError):
        perturb_pose(pose, -1.0, rng)


def test_records_are_independent_of_batch_split():
    whole = generate_dataset(6, 16, seed=3)
    tail = generate_dataset(3, 16, seed=3, start=3)
    assert whole.subset(slice(3, 6)).equals(tail)
    assert np.all(np.abs(whole.poses) <= 1.0)
    assert whole.frames.min() >= -1.0 and whole.frames.max() <= 1.0


def test_dataset_round_trip(tmp_path):
    ds = generate_dataset(4, 16, seed=1)
    path = tmp_path / "d.hpds"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back.equals(ds)
    assert dataset_bytes(back) == path.read_bytes()


def test_empty_dataset_round_trips():
    ds = Dataset(np.zeros((0, 8, 8)), np.zeros((0, 42)))
    back = dataset_from_bytes(dataset_bytes(ds))
    assert len(back) == 0 and back.resolution == 8 and back.joints == 14


def test_dataset_format_errors():
    blob = dataset_bytes(generate_dataset(2, 8, seed=0))
    with pytest.raises(FormatError, match="bad magic"):
        dataset_from_bytes(b"NOPE" + blob[4:])
    with pytest.raises(FormatError, match="unexpected end of stream"):
        dataset_from_bytes(blob[:-3])
    with pytest.raises(FormatError, match="unexpected end of stream"):
        dataset_from_bytes(blob[:10])
    width = 8 * (8 * 8 + 42)
    with pytest.raises(FormatError, match="record count"):
        dataset_from_bytes(blob[:-width])
