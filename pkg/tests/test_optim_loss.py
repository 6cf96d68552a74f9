import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tlconvnet.errors import ShapeError
from tlconvnet.nn import OptimizerState, bce_loss, optimizer_step


def test_bce_uninformed_prediction():
    loss, grad = bce_loss(np.array([0.5]), np.array([1]))
    assert loss == pytest.approx(math.log(2))
    assert grad[0] == pytest.approx(-2.0)


def test_bce_is_mean_over_batch():
    loss, grad = bce_loss(np.array([0.5, 0.5]), np.array([1, 0]))
    assert loss == pytest.approx(math.log(2))
    np.testing.assert_allclose(grad, [-1.0, 1.0])


@given(p=st.floats(0, 1), y=st.sampled_from([0, 1]))
def test_bce_finite_everywhere(p, y):
    loss, grad = bce_loss(np.array([p]), np.array([y]))
    assert math.isfinite(loss) and np.all(np.isfinite(grad))
    assert loss <= -math.log(1e-7) + 1e-9


def test_sgd_step():
    p = np.array([1.0])
    optimizer_step([p], [np.array([1.0])], OptimizerState("sgd", learning_rate=0.001))
    assert p[0] == pytest.approx(0.999)


@pytest.mark.parametrize("g", [1.0, -3.0, 250.0])
def test_adam_first_step_moves_by_learning_rate(g):
    p = np.array([0.0])
    state = OptimizerState("adam", learning_rate=0.001)
    optimizer_step([p], [np.array([g])], state)
    assert p[0] == pytest.approx(-0.001 * np.sign(g), rel=1e-4)
    assert state.step == 1


def test_adam_matches_reference_recurrence():
    rng = np.random.default_rng(0)
    grads = rng.standard_normal((5, 3))
    p = np.zeros(3)
    state = OptimizerState("adam", learning_rate=0.01)
    ref, m, v = np.zeros(3), np.zeros(3), np.zeros(3)
    for t, g in enumerate(grads, start=1):
        optimizer_step([p], [g], state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        optimizer_step([np.zeros(3)], [np.zeros(2)], OptimizerState())
    with pytest.raises(ShapeError):
        optimizer_step([np.zeros(3)], [], OptimizerState())


def test_invalid_state():
    with pytest.raises(ValueError):
        OptimizerState("rmsprop")
    with pytest.raises(ValueError):
        OptimizerState(learning_rate=0)


def test_bce_confident_correct_prediction():
    loss, _ = bce_loss(np.array([1 - 1e-7]), np.array([1]))
    assert loss == pytest.approx(0, abs=1e-6)


def test_sgd_zero_gradient():
    p = np.array([0.3, -1.0])
    optimizer_step([p], [np.zeros(2)], OptimizerState("sgd"))
    np.testing.assert_array_equal(p, [0.3, -1.0])


def test_adam_zero_gradient_after_history_moves_by_at_most_lr():
    p = np.array([0.0])
    state = OptimizerState("adam", learning_rate=0.001)
    optimizer_step([p], [np.array([2.0])], state)
    before = p.copy()
    optimizer_step([p], [np.array([0.0])], state)
    assert 0 < abs(p[0] - before[0]) <= 0.001 + 1e-12
