"""Conditional flow matching objective, guidance mixing and sampling."""
from typing import Callable, Optional, Tuple, Union

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import Tensor
from app.flow.paths import T_EPS, interpolate, ot_velocity
from app.flow.solvers import VelocityFn, ode_solve
from app.models.errors import DimensionError
from app.models.schemas import SolverConfig

DEFAULT_CFG_W = 2.0

ModelFn = Callable[[np.ndarray, np.ndarray], Tensor]


def sample_times(rng: np.random.Generator, n: int) -> np.ndarray:
    """Training times drawn uniformly from [0, 1 - 1e-5]"""
    return rng.uniform(0.0, 1.0 - T_EPS, size=n)


def cfm_loss(
    model: ModelFn,
    x1: np.ndarray,
    rng: np.random.Generator,
    t: Optional[np.ndarray] = None,
    x0: Optional[np.ndarray] = None,
    frame_weights: Optional[np.ndarray] = None,
    return_target: bool = False
) -> Union[Tensor, Tuple[Tensor, np.ndarray]]:
    """
    Flow matching regression loss on the straight path

    Conditioning (audio, style prompt) is bound into `model`, which receives
    the noisy state x_t and one time per sample.

    Args:
        model: Callable (x_t, t) -> velocity tensor shaped like x1
        x1: Data batch, samples along the first axis
        rng: Source for t and x0 when they are not given
        t: Per-sample times; drawn from U[0, 1 - 1e-5] when omitted
        x0: Noise batch; drawn from N(0, 1) when omitted
        frame_weights: Optional weights over all axes but the last; only
            weighted entries contribute to the mean
        return_target: Also return the target velocity

    Returns:
        Scalar mean squared error between model velocity and target velocity
    """
    x1 = np.asarray(x1, dtype=np.float64)
    n = x1.shape[0]
    t = sample_times(rng, n) if t is None else np.asarray(t, dtype=np.float64)
    x0 = rng.standard_normal(x1.shape) if x0 is None else np.asarray(x0, dtype=np.float64)
    if x0.shape != x1.shape:
        raise DimensionError(f"noise shape {x0.shape} differs from data shape {x1.shape}")

    x_t = interpolate(x0, x1, t)
    target = ot_velocity(x1, x_t, t)
    v = model(x_t, t)
    if v.shape != target.shape:
        raise DimensionError(f"model velocity {v.shape} does not match target {target.shape}")

    if frame_weights is None:
        loss = F.mse(v, target)
    else:
        weights = np.asarray(frame_weights, dtype=np.float64)[..., None]
        diff = v - target
        loss = F.masked_mean(diff * diff, weights, denom=float(weights.sum()) * x1.shape[-1])
    return (loss, target) if return_target else loss


def cfg_velocity(v_cond: np.ndarray, v_uncond: np.ndarray, w: float = DEFAULT_CFG_W) -> np.ndarray:
    """Guided velocity v_cond + w (v_cond - v_uncond)"""
    v_cond, v_uncond = np.asarray(v_cond, dtype=np.float64), np.asarray(v_uncond, dtype=np.float64)
    if v_cond.shape != v_uncond.shape:
        raise DimensionError(f"guidance branches differ in shape: {v_cond.shape} vs {v_uncond.shape}")
    return v_cond + w * (v_cond - v_uncond)


def guided_field(cond_fn: VelocityFn, uncond_fn: Optional[VelocityFn], w: float) -> VelocityFn:
    """Velocity field mixing both branches; w=0 or no unconditional branch skips it"""
    if uncond_fn is None or w == 0.0:
        return cond_fn

    def field(x: np.ndarray, t: float) -> np.ndarray:
        v_cond = cond_fn(x, t)
        v_uncond = uncond_fn(x, t)
        return cfg_velocity(getattr(v_cond, "data", v_cond), getattr(v_uncond, "data", v_uncond), w)

    return field


def sample(
    cond_fn: VelocityFn,
    shape: Tuple[int, ...],
    rng: np.random.Generator,
    solver: Optional[SolverConfig] = None,
    cfg_w: float = DEFAULT_CFG_W,
    uncond_fn: Optional[VelocityFn] = None,
    x0: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Draw x0 ~ N(0, 1) and push it to t=1 along the guided field

    Args:
        cond_fn: Conditional velocity branch
        shape: Sample shape
        rng: Noise source
        solver: ODE method and steps; midpoint with 5 steps by default
        cfg_w: Guidance weight
        uncond_fn: Unconditional branch; guidance is off without it
        x0: Explicit starting noise

    Returns:
        The generated sample
    """
    x0 = rng.standard_normal(shape) if x0 is None else np.asarray(x0, dtype=np.float64)
    return ode_solve(guided_field(cond_fn, uncond_fn, cfg_w), x0, solver or SolverConfig())
