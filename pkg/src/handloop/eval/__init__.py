"""Evaluation metrics and figure-style outputs."""
from .metrics import (DEFAULT_THRESHOLDS, MetricReport, curve_csv, curve_svg, emit_csv,
                      emit_metrics_csv, emit_svg, joint_errors_mm, mean_joint_error,
                      within_max_curve, write_report)

__all__ = [
    "DEFAULT_THRESHOLDS", "MetricReport", "curve_csv", "curve_svg", "emit_csv",
    "emit_metrics_csv", "emit_svg", "joint_errors_mm", "mean_joint_error", "within_max_curve",
    "write_report",
]
