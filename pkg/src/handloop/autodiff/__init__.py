"""Minimal float64 tensor engine with reverse-mode differentiation."""
from .gradcheck import check_parameters, finite_diff_check
from .model import (LayerSpec, Model, deserialize, init_params, load_model, save_model,
                    serialize)
from .ops import (add, concat, conv2d, fully_connected, max_pool2d, mean, mse, mul, relu,
                  reshape, row_norm, split_batch, sub, sum_squares, total, unpool2d,
                  unpool_conv2d)
from .tensor import Tape, Tensor, active_tape, backward

__all__ = [
    "LayerSpec", "Model", "Tape", "Tensor", "active_tape", "add", "backward", "check_parameters",
    "concat", "conv2d", "deserialize", "finite_diff_check", "fully_connected", "init_params",
    "load_model", "max_pool2d", "mean", "mse", "mul", "relu", "reshape", "row_norm",
    "save_model", "serialize", "split_batch", "sub", "sum_squares", "total", "unpool2d",
    "unpool_conv2d",
]
