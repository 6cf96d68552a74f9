import numpy as np
import pytest

from tlconvnet.nn import Conv1D, Dense, MaxPool1D, ReLU, gradient_check, relative_error

from gradcases import SEEDS, isolated_cases, run_desk_tl, run_isolated

KINDS = sorted(isolated_cases(0))


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("seed", SEEDS)
def test_isolated_layer_float32_backward(kind, seed):
    res, tol = run_isolated(kind, seed)
    assert res.passed(tol), res


@pytest.mark.parametrize("kind", KINDS)
def test_isolated_layer_float64(kind):
    res, _ = run_isolated(kind, 3, analytic_dtype=None)
    assert res.passed(1e-6), res


@pytest.mark.parametrize("seed", SEEDS)
def test_full_desk_model(seed):
    res = run_desk_tl(seed)
    assert res.checked >= 25
    assert res.passed(1e-3), res


def test_detects_a_wrong_backward():
    class BrokenDense(Dense):
        def backward(self, grad):
            dx = super().backward(grad)
            self.grads["weight"] = self.grads["weight"] * 1.1
            return dx

    r = np.random.default_rng(0)
    res = gradient_check([BrokenDense(4, 2, rng=r)], r.standard_normal((3, 4)), loss="probe")
    assert not res.passed(1e-3)


def test_kink_crossings_are_excluded():
    # inputs sitting on the ReLU hinge flip the gate under any perturbation
    conv = Conv1D(1, 1, 1)
    conv.weight[:] = 1.0
    x = np.zeros((1, 4, 1))
    res = gradient_check([conv, ReLU()], x, loss="probe", check_input=True, step=1e-3)
    assert res.excluded


def test_pool_near_ties_are_excluded():
    x = np.array([[[1.0], [1.0 + 1e-6]]])
    res = gradient_check([MaxPool1D(2, 2)], x, loss="probe", check_input=True, step=1e-3)
    assert len(res.excluded) == 2 and res.checked == 0


def test_does_not_touch_original_model():
    r = np.random.default_rng(0)
    d = Dense(3, 1, rng=r)
    before = d.weight.copy()
    gradient_check([d], r.standard_normal((2, 3)), loss="probe")
    assert d.weight.dtype == np.float32
    np.testing.assert_array_equal(d.weight, before)


def test_relative_error():
    assert relative_error(1.0, 1.0) == 0
    assert relative_error(0.0, 0.0) == 0
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)
