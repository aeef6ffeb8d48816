import numpy as np
import pytest

from hrtfspace.adam import AdamState, adam_step


def test_zero_gradient_leaves_parameters_unchanged():
    state = AdamState(value=np.array([1.0, -2.0, 3.0]))
    adam_step(state, np.zeros(3), lr=0.1)
    np.testing.assert_array_equal(state.value, [1.0, -2.0, 3.0])


def test_first_step_magnitude_is_learning_rate():
    # after bias correction the first update is -lr * g / (|g| + eps)
    state = AdamState(value=np.array([0.0]))
    adam_step(state, np.array([0.5]), lr=0.01)
    assert state.value[0] == pytest.approx(-0.01, rel=1e-6)
    state = AdamState(value=np.array([0.0]))
    adam_step(state, np.array([-3.0]), lr=0.01)
    assert state.value[0] == pytest.approx(0.01, rel=1e-6)


def test_two_identical_steps_match_scalar_reference():
    # frozen from a hand-run scalar implementation (g=0.5, lr=0.01, x0=1)
    state = AdamState(value=np.array([1.0]))
    adam_step(state, np.array([0.5]), lr=0.01)
    adam_step(state, np.array([0.5]), lr=0.01)
    assert state.value[0] == pytest.approx(0.9800000004, abs=1e-12)


def test_moments_track_shapes():
    state = AdamState(value=np.zeros((2, 3)))
    adam_step(state, np.ones((2, 3)), lr=0.1)
    assert state.m.shape == (2, 3)
    assert state.v.shape == (2, 3)
    assert state.step == 1
