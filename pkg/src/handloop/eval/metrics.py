"""Joint errors in millimetres and the max-joint-within-threshold curve."""
import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLDS = tuple(float(t) for t in range(0, 81))


def joint_errors_mm(predicted, truth, half_extent):
    """Euclidean error per joint, in mm. Accepts ``(3J,)`` or ``(N, 3J)`` poses."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"pose shapes differ: {p.shape} vs {t.shape}")
    if p.shape[-1] % 3:
        raise ValueError(f"pose length {p.shape[-1]} is not a multiple of 3")
    diff = (p - t).reshape(p.shape[:-1] + (-1, 3))
    return np.linalg.norm(diff, axis=-1) * float(half_extent)


def mean_joint_error(errors):
    """Mean over every (frame, joint) pair."""
    return float(np.mean(errors))


def within_max_curve(errors, thresholds=DEFAULT_THRESHOLDS):
    """Fraction of frames whose worst joint error is strictly below each threshold."""
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("threshold list is empty")
    errors = np.atleast_2d(np.asarray(errors, dtype=np.float64))
    if errors.shape[0] == 0:
        raise ValueError("no frames to evaluate")
    worst = errors.max(axis=1)
    return [(t, float(np.mean(worst < t))) for t in thresholds]


@dataclass
class MetricReport:
    errors: np.ndarray
    thresholds: tuple = DEFAULT_THRESHOLDS
    meta: dict = field(default_factory=dict)

    @property
    def mean_error(self):
        return mean_joint_error(self.errors)

    @property
    def curve(self):
        return within_max_curve(self.errors, self.thresholds)

    @classmethod
    def from_poses(cls, predicted, truth, half_extent, thresholds=DEFAULT_THRESHOLDS, **meta):
        errors = np.atleast_2d(joint_errors_mm(predicted, truth, half_extent))
        return cls(errors, tuple(thresholds), dict(meta))


def _write_text(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def curve_csv(curve):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold_mm", "fraction"])
    for t, frac in curve:
        writer.writerow([repr(float(t)), repr(float(frac))])
    return buf.getvalue()


def emit_csv(report, path):
    """Write the report's curve as ``threshold_mm,fraction`` rows."""
    _write_text(path, curve_csv(report.curve))


def emit_metrics_csv(reports, path):
    """One row per method: mean error and frame/joint counts."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "frames", "joints", "mean_error_mm"])
    for name, report in reports.items():
        writer.writerow([name, report.errors.shape[0], report.errors.shape[1],
                         repr(float(report.mean_error))])
    _write_text(path, buf.getvalue())


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def curve_svg(curves, width=480, height=320, margin=48):
    """Standalone SVG with one polyline per named curve."""
    if not curves:
        raise ValueError("no curves to plot")
    t_max = max(max(t for t, _ in c) for c in curves.values()) or 1.0
    plot_w, plot_h = width - 2 * margin, height - 2 * margin

    def xy(t, frac):
        return margin + plot_w * t / t_max, height - margin - plot_h * frac

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
    ]
    for k in range(5):
        frac = k / 4
        x, y = xy(0, frac)
        out.append(f'<text x="{x - 6:.2f}" y="{y + 4:.2f}" font-size="10" '
                   f'text-anchor="end">{frac:.2f}</text>')
        t = t_max * k / 4
        x, y = xy(t, 0)
        out.append(f'<text x="{x:.2f}" y="{y + 14:.2f}" font-size="10" '
                   f'text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{width / 2:.2f}" y="{height - 8}" font-size="12" '
               'text-anchor="middle">max joint error threshold (mm)</text>')
    out.append(f'<text x="14" y="{height / 2:.2f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {height / 2:.2f})">fraction of frames</text>')
    for k, (name, curve) in enumerate(curves.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join("{:.2f},{:.2f}".format(*xy(t, f)) for t, f in curve)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = margin + 14 * k
        out.append(f'<line x1="{width - margin - 90}" y1="{ly}" x2="{width - margin - 70}" '
                   f'y2="{ly}" stroke="{color}" stroke-width="1.5"/>')
        label = str(name).replace("&", "&amp;").replace("<", "&lt;")
        out.append(f'<text x="{width - margin - 66}" y="{ly + 4}" font-size="10">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(curves, path):
    """Write ``{method name: curve}`` as an SVG line plot."""
    _write_text(path, curve_svg(curves))


def write_report(reports, out_dir):
    """``metrics.csv``, ``curve.csv`` (first method) and ``curve.svg`` in ``out_dir``.

    With several methods, ``curve.csv`` gains a leading ``method`` column.
    """
    os.makedirs(out_dir, exist_ok=True)
    emit_metrics_csv(reports, os.path.join(out_dir, "metrics.csv"))
    if len(reports) == 1:
        emit_csv(next(iter(reports.values())), os.path.join(out_dir, "curve.csv"))
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "threshold_mm", "fraction"])
        for name, report in reports.items():
            for t, frac in report.curve:
                writer.writerow([name, repr(float(t)), repr(float(frac))])
        _write_text(os.path.join(out_dir, "curve.csv"), buf.getvalue())
    emit_svg({name: r.curve for name, r in reports.items()}, os.path.join(out_dir, "curve.svg"))
