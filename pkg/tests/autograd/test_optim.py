"""Tests for the Adam optimizer."""
import numpy as np
import pytest

from app.autograd.optim import Adam, OptimizerState, adam_step
from app.autograd.tensor import parameter
from app.models.errors import DimensionError, NumericalError


def test_zero_gradient_leaves_parameters_unchanged():
    x = parameter([1.0, -2.0])
    adam_step([x], [np.zeros(2)], OptimizerState.for_params([x], lr=0.1))
    np.testing.assert_array_equal(x.data, [1.0, -2.0])


def test_first_step_moves_by_learning_rate():
    x = parameter(1.0)
    optimizer = Adam([x], lr=0.1)
    (x * x).backward()
    optimizer.step()
    assert float(x.data) == pytest.approx(0.9, abs=1e-6)
    assert optimizer.state.step == 1


def test_minimises_quadratic():
    x = parameter([3.0, -4.0])
    optimizer = Adam([x], lr=0.1)
    for _ in range(500):
        optimizer.zero_grad()
        (x * x).sum().backward()
        optimizer.step()
    assert np.all(np.abs(x.data) < 0.1)


def test_none_gradient_skips_parameter():
    x, y = parameter(1.0), parameter(1.0)
    state = OptimizerState.for_params([x, y], lr=0.1)
    adam_step([x, y], [np.array(1.0), None], state)
    assert y.data == 1.0
    assert x.data < 1.0


def test_non_finite_gradient_raises():
    x = parameter(1.0)
    with pytest.raises(NumericalError):
        adam_step([x], [np.array(np.nan)], OptimizerState.for_params([x], lr=0.1))


def test_state_round_trip():
    x = parameter(np.ones((2, 2)))
    optimizer = Adam([x], lr=0.05)
    (x * x).sum().backward()
    optimizer.step()

    fresh = OptimizerState.for_params([x], lr=1.0)
    fresh.load_state_dict(optimizer.state.state_dict())
    assert fresh.step == 1
    assert fresh.lr == 0.05
    np.testing.assert_array_equal(fresh.first_moments[0], optimizer.state.first_moments[0])


def test_state_shape_mismatch():
    x = parameter(np.ones(3))
    arrays = OptimizerState.for_params([parameter(np.ones(2))], lr=0.1).state_dict()
    with pytest.raises(DimensionError):
        OptimizerState.for_params([x], lr=0.1).load_state_dict(arrays)


def test_empty_parameter_list():
    with pytest.raises(ValueError):
        Adam([])
