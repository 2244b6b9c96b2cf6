import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from handloop.optim import (LrSchedule, RmsPropState, apply_weight_decay, rmsprop_step,
                            schedule_lr, truncate)


def state_for(params, **kw):
    return RmsPropState.for_params(params, **kw)


def test_zero_gradient_leaves_everything_unchanged():
    params = {"w": np.array([0.3, -1.2])}
    state = state_for(params)
    new, new_state = rmsprop_step(params, {"w": np.zeros(2)}, state, 0.01)
    np.testing.assert_array_equal(new["w"], params["w"])
    np.testing.assert_array_equal(new_state.mean_square["w"], 0.0)


def test_single_step_recurrence():
    params = {"w": np.array([1.0])}
    state = state_for(params, decay=0.9, epsilon=1e-6, clip=0.01)
    new, new_state = rmsprop_step(params, {"w": np.array([0.01])}, state, 0.01)
    assert new_state.mean_square["w"][0] == pytest.approx(1e-5, rel=1e-12)
    step = 0.01 * 0.01 / np.sqrt(1.1e-5)
    assert step == pytest.approx(3.0151e-2, rel=1e-4)
    assert params["w"][0] - new["w"][0] == pytest.approx(step, rel=1e-12)


def test_large_gradient_is_truncated_to_clip():
    params = {"w": np.array([0.0])}
    a, _ = rmsprop_step(params, {"w": np.array([5.0])}, state_for(params), 0.01)
    b, _ = rmsprop_step(params, {"w": np.array([0.01])}, state_for(params), 0.01)
    np.testing.assert_array_equal(a["w"], b["w"])


def test_inputs_are_not_modified():
    params = {"w": np.array([1.0, 2.0])}
    state = state_for(params)
    rmsprop_step(params, {"w": np.array([0.1, -0.1])}, state, 0.01)
    assert params["w"].tolist() == [1.0, 2.0]
    assert state.mean_square["w"].tolist() == [0.0, 0.0]


def test_non_finite_gradient_names_parameter():
    params = {"layer.weight": np.zeros(2)}
    with pytest.raises(FloatingPointError, match="layer.weight"):
        rmsprop_step(params, {"layer.weight": np.array([np.nan, 0.0])}, state_for(params), 0.01)


def test_norm_clipping_mode():
    g = np.array([3.0, 4.0])
    np.testing.assert_allclose(truncate(g, 1.0, "norm"), [0.6, 0.8])
    np.testing.assert_array_equal(truncate(np.array([0.1, 0.1]), 1.0, "norm"), [0.1, 0.1])
    with pytest.raises(ValueError):
        truncate(g, 1.0, "other")


def test_weight_decay_adds_two_gamma_p():
    grads = {"w": np.array([0.0])}
    assert apply_weight_decay(grads, {"w": np.array([1.0])}, 0.001)["w"][0] == pytest.approx(0.002)
    same = apply_weight_decay({"w": np.array([0.5])}, {"w": np.array([9.0])}, 0.0)
    assert same["w"].tolist() == [0.5]
    with pytest.raises(ValueError):
        apply_weight_decay(grads, {"w": np.array([1.0])}, -1.0)


def test_schedule_values():
    assert schedule_lr(LrSchedule(0.01), 0) == 0.01
    assert schedule_lr(LrSchedule(0.001), 0) == 0.001
    assert schedule_lr(LrSchedule(0.01, 0.95), 2) == pytest.approx(0.009025, rel=1e-12)
    with pytest.raises(ValueError):
        schedule_lr(LrSchedule(0.01), -1)
    with pytest.raises(ValueError):
        LrSchedule(0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 60), st.floats(0.5, 1.0))
def test_schedule_is_positive_and_non_increasing(epoch, factor):
    s = LrSchedule(0.01, factor)
    assert 0 < s.lr(epoch + 1) <= s.lr(epoch)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite),
       st.integers(1, 4))
def test_step_displacement_is_bounded(p, g, steps):
    lr, clip, decay, eps = 0.01, 0.01, 0.9, 1e-6
    params = {"w": p}
    state = state_for(params, decay=decay, epsilon=eps, clip=clip)
    bound = lr * clip / np.sqrt((1 - decay) * clip ** 2 + eps)
    for _ in range(steps):
        new, state = rmsprop_step(params, {"w": g}, state, lr)
        # the first step from zero state attains the bound; later steps are smaller
        slack = 2 * np.spacing(np.abs(params["w"]))
        assert np.all(np.abs(new["w"] - params["w"]) <= bound * (1 + 1e-12) + slack)
        assert np.all(state.mean_square["w"] >= 0)
        assert state.mean_square["w"].shape == p.shape
        params = new


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 5, elements=st.floats(-1, 1)))
def test_huge_gradients_cannot_exceed_clip_step(g):
    params = {"w": np.zeros(5)}
    lr = 0.01
    big, _ = rmsprop_step(params, {"w": g * 1e6}, state_for(params), lr)
    bound = lr * 0.01 / np.sqrt(0.1 * 0.01 ** 2 + 1e-6)
    assert np.all(np.abs(big["w"]) <= bound * (1 + 1e-12))


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, 4, elements=finite), arrays(np.float64, 4, elements=finite))
def test_step_is_deterministic(p, g):
    params = {"w": p}
    a, sa = rmsprop_step(params, {"w": g}, state_for(params), 0.01)
    b, sb = rmsprop_step(params, {"w": g}, state_for(params), 0.01)
    assert a["w"].tobytes() == b["w"].tobytes()
    assert sa.mean_square["w"].tobytes() == sb.mean_square["w"].tobytes()
