from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.autograd.tensor import Tensor
from app.models.errors import DimensionError, NumericalError


@dataclass
class OptimizerState:
    """Adam moment buffers, one pair per parameter, plus the step counter"""
    lr: float
    first_moments: List[np.ndarray] = field(default_factory=list)
    second_moments: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float) -> "OptimizerState":
        return cls(
            lr=lr,
            first_moments=[np.zeros_like(p.data) for p in params],
            second_moments=[np.zeros_like(p.data) for p in params],
        )

    def state_dict(self) -> Dict[str, np.ndarray]:
        arrays = {"step": np.array([float(self.step)]), "lr": np.array([self.lr])}
        for i, (m, v) in enumerate(zip(self.first_moments, self.second_moments)):
            arrays[f"m.{i:04d}"] = m.copy()
            arrays[f"v.{i:04d}"] = v.copy()
        return arrays

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        count = len(self.first_moments)
        for i in range(count):
            m, v = arrays[f"m.{i:04d}"], arrays[f"v.{i:04d}"]
            if m.shape != self.first_moments[i].shape or v.shape != self.second_moments[i].shape:
                raise DimensionError(f"optimizer moment {i} has shape {m.shape}, expected {self.first_moments[i].shape}")
            self.first_moments[i] = m.copy()
            self.second_moments[i] = v.copy()
        self.step = int(arrays["step"][0])
        self.lr = float(arrays["lr"][0])


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[Optional[np.ndarray]],
    state: OptimizerState,
    betas: tuple = (0.9, 0.999),
    eps: float = 1e-8
) -> Sequence[Tensor]:
    """
    Apply one bias-corrected Adam update in place

    Args:
        params: Parameters to update
        grads: One gradient per parameter; None leaves the parameter and its moments untouched
        state: Moment buffers shape-matched to `params`
        betas: Exponential decay rates of the moment estimates
        eps: Denominator guard

    Returns:
        The updated parameters
    """
    if len(params) != len(state.first_moments) or len(grads) != len(params):
        raise DimensionError("optimizer state does not match the parameter list")
    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step

    for i, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            continue
        if grad.shape != param.shape or state.first_moments[i].shape != param.shape:
            raise DimensionError(f"gradient {grad.shape} does not match parameter {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient for parameter {i}")
        m = beta1 * state.first_moments[i] + (1.0 - beta1) * grad
        v = beta2 * state.second_moments[i] + (1.0 - beta2) * grad * grad
        state.first_moments[i], state.second_moments[i] = m, v
        param.data -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return params


class Adam:
    """Adam over a fixed list of trainable tensors"""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas: tuple = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        if not self.params:
            raise ValueError("Adam needs at least one parameter")
        self.betas = betas
        self.eps = eps
        self.state = OptimizerState.for_params(self.params, lr)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.betas, self.eps)
