"""Iterative pose refinement and the image-space optimisation baseline."""
from .baseline import BaselineConfig, baseline_optimize, image_objective, objective_and_gradient
from .loop import (LoopConfig, check_networks, model_resolution, predict_initial,
                   run_batched_loop, run_feedback_loop, synthesize, update_step)

__all__ = [
    "BaselineConfig", "LoopConfig", "baseline_optimize", "check_networks", "image_objective",
    "model_resolution", "objective_and_gradient", "predict_initial", "run_batched_loop",
    "run_feedback_loop", "synthesize", "update_step",
]
