"""Differentiable building blocks used by the networks and losses."""
from typing import Optional, Sequence, Tuple

import numpy as np

from app.autograd.tensor import ArrayLike, Function, MatMul, Tensor, as_tensor
from app.models.errors import DimensionError

_GELU_C = np.sqrt(2.0 / np.pi)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int) -> np.ndarray:
        if not -x.ndim <= axis < x.ndim:
            raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
        self.axis = axis
        shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
        self.out = shifted / np.sum(shifted, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        y = self.out
        return (y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True)),)


class LayerNorm(Function):
    """Normalisation over the last axis followed by a per-channel affine map"""

    def forward(self, x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
        if x.ndim < 1 or x.shape[-1] < 2:
            raise DimensionError(f"layer_norm needs a last axis of length >= 2, got shape {x.shape}")
        if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
            raise DimensionError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match {x.shape[-1]}")
        mean = x.mean(axis=-1, keepdims=True)
        var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mean) * self.inv_std
        return self.x_hat * gain + bias

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        _, gain, _ = self.tensors
        lead = tuple(range(grad.ndim - 1))
        grad_gain = np.sum(grad * self.x_hat, axis=lead)
        grad_bias = np.sum(grad, axis=lead)
        g_hat = grad * gain.data
        grad_x = self.inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - self.x_hat * (g_hat * self.x_hat).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gain, grad_bias


class MSE(Function):
    def forward(self, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
        if pred.shape != target.shape:
            raise DimensionError(f"mse shapes differ: {pred.shape} vs {target.shape}")
        self.diff = pred - target
        return np.asarray(np.mean(self.diff * self.diff))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g = grad * 2.0 * self.diff / self.diff.size
        return g, -g


class L1(Function):
    def forward(self, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
        if pred.shape != target.shape:
            raise DimensionError(f"l1 shapes differ: {pred.shape} vs {target.shape}")
        self.sign = np.sign(pred - target)
        return np.asarray(np.mean(np.abs(pred - target)))

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g = grad * self.sign / self.sign.size
        return g, -g


class GELU(Function):
    """tanh approximation"""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.inner = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
        return 0.5 * x * (1.0 + self.inner)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        (x,) = self.tensors
        th = self.inner
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x.data ** 2)
        return (grad * (0.5 * (1.0 + th) + 0.5 * x.data * (1.0 - th * th) * d_inner),)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = _stable_sigmoid(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * self.out * (1.0 - self.out),)


class Softplus(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.logaddexp(0.0, x)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        (x,) = self.tensors
        return (grad * _stable_sigmoid(x.data),)


class Abs(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.abs(x)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        (x,) = self.tensors
        return (grad * np.sign(x.data),)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError as e:
            raise DimensionError(f"concat along axis {axis}: {e}") from e
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return out

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.split(grad, self.splits, axis=self.axis))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Matrix product of two tensors

    Raises:
        DimensionError: If the inner dimensions disagree
    """
    return MatMul.apply(a, b)


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def layer_norm(x: ArrayLike, gain: ArrayLike, bias: ArrayLike, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, gain, bias, eps=eps)


def mse(pred: ArrayLike, target: ArrayLike) -> Tensor:
    """Mean of squared differences, a scalar tensor"""
    return MSE.apply(pred, target)


def l1(pred: ArrayLike, target: ArrayLike) -> Tensor:
    """Mean absolute difference, a scalar tensor"""
    return L1.apply(pred, target)


def gelu(x: ArrayLike) -> Tensor:
    return GELU.apply(x)


def sigmoid(x: ArrayLike) -> Tensor:
    return Sigmoid.apply(x)


def softplus(x: ArrayLike) -> Tensor:
    return Softplus.apply(x)


def tanh(x: ArrayLike) -> Tensor:
    return as_tensor(x).tanh()


def abs(x: ArrayLike) -> Tensor:  # noqa: A001
    return Abs.apply(x)


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    return Concat.apply(*tensors, axis=axis)


def masked_mean(values: ArrayLike, weights: np.ndarray, denom: Optional[float] = None) -> Tensor:
    """
    Weighted mean of `values` under a constant non-negative weight array

    The default denominator is the total weight; entries with zero weight
    receive zero gradient.
    """
    values = as_tensor(values)
    weights = np.broadcast_to(np.asarray(weights, dtype=np.float64), values.shape)
    total = float(weights.sum()) if denom is None else float(denom)
    if total <= 0.0:
        raise DimensionError("masked_mean has no weighted entries")
    return (values * weights).sum() / total
