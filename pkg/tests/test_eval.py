import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from handloop.eval import (DEFAULT_THRESHOLDS, MetricReport, curve_svg, emit_csv, emit_svg,
                           joint_errors_mm, mean_joint_error, within_max_curve, write_report)


def test_identical_poses_have_zero_error(rng):
    p = rng.standard_normal(42)
    assert np.all(joint_errors_mm(p, p, 150.0) == 0)


def test_offset_scales_to_millimetres():
    truth = np.zeros(42)
    pred = truth.copy()
    pred[0] = 0.1
    err = joint_errors_mm(pred, truth, 150.0)
    assert err[0] == pytest.approx(15.0)
    assert np.all(err[1:] == 0)


def test_joint_count_mismatch():
    with pytest.raises(ValueError):
        joint_errors_mm(np.zeros(42), np.zeros(39), 150.0)


def test_errors_follow_joint_permutation(rng):
    a, b = rng.standard_normal((5, 42)), rng.standard_normal((5, 42))
    perm = rng.permutation(14)

    def permute(p):
        return p.reshape(5, 14, 3)[:, perm].reshape(5, 42)

    np.testing.assert_array_equal(joint_errors_mm(permute(a), permute(b), 150.0),
                                  joint_errors_mm(a, b, 150.0)[:, perm])


def test_curve_examples():
    assert within_max_curve(np.array([[10.0, 3.0]]), [5, 15]) == [(5.0, 0.0), (15.0, 1.0)]
    two = np.array([[10.0, 1.0], [20.0, 2.0]])
    assert within_max_curve(two, [15])[0][1] == 0.5
    with pytest.raises(ValueError):
        within_max_curve(two, [])


def test_curve_uses_strict_threshold():
    assert within_max_curve(np.array([[10.0]]), [10.0]) == [(10.0, 0.0)]


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 4), elements=st.floats(0.001, 200.0)))
def test_curve_properties(errors):
    curve = within_max_curve(errors)
    fracs = [f for _, f in curve]
    assert all(0.0 <= f <= 1.0 for f in fracs)
    assert all(a <= b for a, b in zip(fracs, fracs[1:]))
    assert within_max_curve(errors, [0.0])[0][1] == 0.0
    assert within_max_curve(errors, [np.inf])[0][1] == 1.0
    assert mean_joint_error(errors) == pytest.approx(sum(errors.ravel()) / errors.size)


def test_default_grid_is_one_millimetre_steps():
    assert DEFAULT_THRESHOLDS[0] == 0.0 and DEFAULT_THRESHOLDS[-1] == 80.0
    assert len(DEFAULT_THRESHOLDS) == 81


def test_csv_rows_and_bytes_are_stable(tmp_path, rng):
    report = MetricReport.from_poses(rng.standard_normal((4, 42)) * 0.1, np.zeros((4, 42)), 150.0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(report, a)
    emit_csv(report, b)
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "threshold_mm,fraction"
    assert len(lines) == len(report.thresholds) + 1


def test_svg_is_wellformed_and_deterministic(tmp_path):
    curves = {"init": [(0.0, 0.0), (40.0, 0.5), (80.0, 1.0)], "loop": [(0.0, 0.0), (80.0, 1.0)]}
    path = tmp_path / "c.svg"
    emit_svg(curves, path)
    root = ET.fromstring(path.read_bytes())
    assert root.tag.endswith("svg")
    assert len([e for e in root.iter() if e.tag.endswith("polyline")]) == 2
    assert curve_svg(curves) == path.read_text()


def test_unwritable_path_is_reported(tmp_path):
    report = MetricReport(np.ones((1, 14)))
    with pytest.raises(OSError, match="cannot write"):
        emit_csv(report, tmp_path / "missing" / "x.csv")


def test_write_report_files(tmp_path, rng):
    truth = np.zeros((3, 42))
    reports = {"init": MetricReport.from_poses(rng.standard_normal((3, 42)) * 0.1, truth, 150.0),
               "loop": MetricReport.from_poses(rng.standard_normal((3, 42)) * 0.05, truth, 150.0)}
    write_report(reports, tmp_path / "r")
    names = sorted(p.name for p in (tmp_path / "r").iterdir())
    assert names == ["curve.csv", "curve.svg", "metrics.csv"]
    rows = (tmp_path / "r" / "metrics.csv").read_text().splitlines()
    assert rows[0] == "method,frames,joints,mean_error_mm" and len(rows) == 3
