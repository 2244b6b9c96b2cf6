"""Finite-difference checks over every layer kind and the three training losses."""
import numpy as np

from .autodiff import (LayerSpec, Model, Tensor, check_parameters, concat, conv2d,
                       finite_diff_check, fully_connected, max_pool2d, mse, relu, reshape, total,
                       unpool2d, unpool_conv2d)
from .autodiff.ops import mul
from .networks import (build_predictor, build_synthesizer, build_updater, hinge_loss,
                       predictor_loss, synthesizer_loss)

LAYER_TOLERANCE = 1e-6
LOSS_TOLERANCE = 1e-5


def _weighted_sum(out, rng):
    # random weights keep the check sensitive to every output element
    w = rng.standard_normal(out.shape)
    return total(mul(out, w))


def layer_checks(seed=0):
    """``{name: max relative error}`` for each layer kind on random input."""
    rng = np.random.default_rng(seed)
    results = {}

    x = rng.standard_normal((1, 8, 8))
    filt = rng.standard_normal((2, 1, 3, 3))
    bias = rng.standard_normal(2)
    results["conv"] = max(
        finite_diff_check(lambda t: total(conv2d(t, filt, bias, stride=2)), x),
        finite_diff_check(lambda t: total(conv2d(x, t, bias, stride=2)), filt),
        finite_diff_check(lambda t: total(conv2d(x, filt, t, stride=2)), bias),
    )
    xb = rng.standard_normal((2, 3, 6, 6))
    fb = rng.standard_normal((4, 3, 5, 5))
    wr = rng.standard_normal((2, 4, 6, 6))
    results["conv_padded"] = max(
        finite_diff_check(lambda t: total(mul(conv2d(t, fb, bias[:1].repeat(4), pad=2), wr)), xb),
        finite_diff_check(lambda t: total(mul(conv2d(xb, t, np.zeros(4), pad=2), wr)), fb),
    )
    f1 = rng.standard_normal((1, 3, 5, 5))
    w1 = rng.standard_normal((2, 1, 6, 6))
    results["conv_single_filter"] = max(
        finite_diff_check(lambda t: total(mul(conv2d(t, f1, np.zeros(1), pad=2), w1)), xb),
        finite_diff_check(lambda t: total(mul(conv2d(xb, t, np.zeros(1), pad=2), w1)), f1),
    )
    fw = rng.standard_normal((8, 16))
    fx = rng.standard_normal(16)
    fr = rng.standard_normal(8)
    results["fully_connected"] = max(
        finite_diff_check(lambda t: total(mul(fully_connected(t, fw, np.zeros(8)), fr)), fx),
        finite_diff_check(lambda t: total(mul(fully_connected(fx, t, np.zeros(8)), fr)), fw),
        finite_diff_check(lambda t: total(mul(fully_connected(fx, fw, t), fr)), np.zeros(8)),
    )
    xp = rng.standard_normal((1, 8, 8))
    results["max_pool"] = finite_diff_check(
        lambda t: _weighted_sum(max_pool2d(t, 2)[0], np.random.default_rng(3)), xp)
    xu = rng.standard_normal((1, 4, 4))
    results["unpool"] = finite_diff_check(
        lambda t: _weighted_sum(unpool2d(t, 2), np.random.default_rng(4)), xu)
    xf = rng.standard_normal((2, 3, 4, 4))
    ff = rng.standard_normal((2, 3, 5, 5))
    wf = rng.standard_normal((2, 2, 8, 8))
    results["unpool_conv_fused"] = max(
        finite_diff_check(lambda t: total(mul(unpool_conv2d(t, ff, np.zeros(2)), wf)), xf),
        finite_diff_check(lambda t: total(mul(unpool_conv2d(xf, t, np.zeros(2)), wf)), ff),
    )
    xr = rng.standard_normal(12)
    xr[np.abs(xr) < 0.05] += 0.1
    results["relu"] = finite_diff_check(
        lambda t: _weighted_sum(relu(t), np.random.default_rng(5)), xr)
    results["linear"] = finite_diff_check(
        lambda t: _weighted_sum(Model("probe", [LayerSpec("linear")], (5,))(t),
                                np.random.default_rng(6)), rng.standard_normal((2, 5)))
    results["reshape"] = finite_diff_check(
        lambda t: _weighted_sum(reshape(t, (4, 3)), np.random.default_rng(7)),
        rng.standard_normal((2, 6)))
    other = rng.standard_normal((2, 3))
    results["concat"] = finite_diff_check(
        lambda t: _weighted_sum(concat([t, Tensor(other)], axis=1), np.random.default_rng(8)),
        rng.standard_normal((2, 2)))
    target = rng.standard_normal((3, 4))
    results["mse"] = finite_diff_check(lambda t: mse(t, target), rng.standard_normal((3, 4)))
    return results


def _picks(model, rng, count=5):
    names = sorted(model.params)
    out = []
    for _ in range(count):
        name = names[rng.integers(len(names))]
        out.append((name, int(rng.integers(model.params[name].size))))
    return out


def loss_checks(seed=0, resolution=32, joints=14):
    """End-to-end checks of the predictor, synthesizer and updater losses
    with respect to randomly chosen parameters."""
    rng = np.random.default_rng(seed)
    results = {}

    pred = build_predictor(resolution, joints, seed=seed)
    frames = rng.uniform(-1, 1, (2, resolution, resolution))
    poses = rng.uniform(-0.5, 0.5, (2, 3 * joints))
    results["predictor_loss"] = check_parameters(
        lambda: predictor_loss(pred, frames, poses), pred.params, _picks(pred, rng))

    synth = build_synthesizer(resolution, joints, seed=seed)
    # random biases move every unit away from the relu kink
    for name, t in synth.params.items():
        if name.endswith(".bias"):
            t.data[:] = rng.uniform(0.05, 0.2, t.shape)
    targets = rng.uniform(-1, 1, (2, resolution, resolution))
    results["synthesizer_loss"] = check_parameters(
        lambda: synthesizer_loss(synth, poses, targets), synth.params, _picks(synth, rng))

    upd = build_updater(resolution, joints, seed=seed)
    for name, t in upd.params.items():
        if name.endswith(".bias"):
            t.data[:] = rng.uniform(0.05, 0.2, t.shape)
    synth_images = rng.uniform(-1, 1, (2, resolution, resolution))
    current = poses + 0.3
    results["updater_loss"] = check_parameters(
        lambda: hinge_loss(upd, frames, synth_images, current, poses, 0.6),
        upd.params, _picks(upd, rng))
    return results


def run_suite(seed=0, resolution=32):
    """All checks; returns ``(results, passed)``."""
    layers = layer_checks(seed)
    losses = loss_checks(seed, resolution)
    passed = (max(layers.values()) < LAYER_TOLERANCE and max(losses.values()) < LOSS_TOLERANCE)
    return {**layers, **losses}, passed
