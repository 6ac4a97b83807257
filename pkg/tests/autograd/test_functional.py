"""Tests for the differentiable building blocks."""
import numpy as np
import pytest

from app.autograd import functional as F
from app.autograd.tensor import parameter
from app.models.errors import DimensionError


def test_matmul_identity(rng):
    m = rng.standard_normal((3, 3))
    np.testing.assert_array_equal(F.matmul(np.eye(3), m).data, m)


def test_matmul_scalars():
    assert F.matmul([[2.0]], [[3.0]]).data.tolist() == [[6.0]]


def test_softmax_uniform():
    np.testing.assert_allclose(F.softmax([0.0, 0.0]).data, [0.5, 0.5])


def test_softmax_shift_invariant_and_normalised(rng):
    x = rng.standard_normal((4, 6))
    a = F.softmax(x, axis=-1).data
    b = F.softmax(x + 100.0, axis=-1).data
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a.sum(axis=-1), np.ones(4), atol=1e-12)


def test_softmax_large_logits_stay_finite():
    out = F.softmax([1000.0, 0.0]).data
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)


def test_softmax_bad_axis():
    with pytest.raises(DimensionError):
        F.softmax(np.ones((2, 2)), axis=3)


def test_layer_norm_constant_row():
    out = F.layer_norm([5.0, 5.0, 5.0], np.ones(3), np.zeros(3)).data
    np.testing.assert_allclose(out, np.zeros(3), atol=1e-12)


def test_layer_norm_needs_two_features():
    with pytest.raises(DimensionError):
        F.layer_norm(np.ones((2, 1)), np.ones(1), np.zeros(1))


def test_mse_value():
    assert F.mse([1.0, 1.0], [0.0, 0.0]).item() == pytest.approx(1.0)


def test_mse_shape_mismatch():
    with pytest.raises(DimensionError):
        F.mse(np.ones(3), np.ones(2))


def test_l1_value():
    assert F.l1([1.0, -3.0], [0.0, 0.0]).item() == pytest.approx(2.0)


def test_concat_splits_gradient():
    a, b = parameter(np.ones((2, 1))), parameter(np.ones((2, 3)))
    (F.concat([a, b], axis=-1) * np.arange(4.0)).sum().backward()
    np.testing.assert_allclose(a.grad, [[0.0], [0.0]])
    np.testing.assert_allclose(b.grad, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])


def test_masked_mean_ignores_zero_weight():
    x = parameter([1.0, 100.0, 3.0])
    out = F.masked_mean(x, np.array([1.0, 0.0, 1.0]))
    assert out.item() == pytest.approx(2.0)
    out.backward()
    np.testing.assert_allclose(x.grad, [0.5, 0.0, 0.5])


def test_masked_mean_without_weight():
    with pytest.raises(DimensionError):
        F.masked_mean(np.ones(3), np.zeros(3))


def test_sigmoid_and_softplus_extremes():
    np.testing.assert_allclose(F.sigmoid([-800.0, 0.0, 800.0]).data, [0.0, 0.5, 1.0], atol=1e-12)
    assert F.softplus([800.0]).data[0] == pytest.approx(800.0)
