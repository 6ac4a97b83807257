"""Straight-line (optimal transport) probability path with zero final sigma."""
from dataclasses import dataclass
from typing import Union

import numpy as np

from app.models.errors import DimensionError

T_EPS = 1e-5

TimeLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class OTPath:
    final_sigma: float = 0.0

    def __post_init__(self):
        if self.final_sigma != 0.0:
            raise ValueError("only the zero-sigma path is supported")


@dataclass
class FlowState:
    x_t: np.ndarray
    t: float

    def __post_init__(self):
        if not 0.0 <= self.t < 1.0:
            raise ValueError(f"flow state time must lie in [0, 1), got {self.t}")


def _time_like(t: TimeLike, x: np.ndarray) -> np.ndarray:
    """Broadcast a scalar or per-sample time against the sample axis of x"""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    if t.ndim != 1 or t.shape[0] != x.shape[0]:
        raise DimensionError(f"times of shape {t.shape} do not match samples of shape {x.shape}")
    return t.reshape(t.shape[0], *([1] * (x.ndim - 1)))


def interpolate(x0: np.ndarray, x1: np.ndarray, t: TimeLike) -> np.ndarray:
    """
    Point on the straight path from noise x0 to data x1

    Args:
        x0: Noise sample
        x1: Data sample of the same shape
        t: Scalar time, or one time per leading-axis sample

    Returns:
        (1 - t) x0 + t x1
    """
    x0, x1 = np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise DimensionError(f"path endpoints differ in shape: {x0.shape} vs {x1.shape}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError(f"path time must lie in [0, 1], got {t}")
    t_b = _time_like(t_arr, x0)
    return (1.0 - t_b) * x0 + t_b * x1


def ot_velocity(x1: np.ndarray, x_t: np.ndarray, t: TimeLike) -> np.ndarray:
    """
    Conditional target velocity (x1 - x_t) / (1 - t)

    Raises:
        ValueError: If t exceeds 1 - 1e-5, where the path is singular
    """
    x1, x_t = np.asarray(x1, dtype=np.float64), np.asarray(x_t, dtype=np.float64)
    if x1.shape != x_t.shape:
        raise DimensionError(f"velocity operands differ in shape: {x1.shape} vs {x_t.shape}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr > 1.0 - T_EPS):
        raise ValueError(f"path velocity is singular at t={t}; t must be <= 1 - {T_EPS}")
    return (x1 - x_t) / (1.0 - _time_like(t_arr, x1))
