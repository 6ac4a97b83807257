from typing import Callable, Union

import numpy as np

from app.autograd.tensor import Tensor, no_grad
from app.models.errors import NumericalError
from app.models.schemas import SolverConfig, SolverMethod
from app.utils.logging import setup_logger

logger = setup_logger("Solvers")

VelocityFn = Callable[[np.ndarray, float], Union[np.ndarray, Tensor]]


def _evaluate(velocity_fn: VelocityFn, x: np.ndarray, t: float) -> np.ndarray:
    v = velocity_fn(x, t)
    v = v.data if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64)
    return np.broadcast_to(v, x.shape)


def ode_solve(velocity_fn: VelocityFn, x0: np.ndarray, config: SolverConfig) -> np.ndarray:
    """
    Integrate dx/dt = velocity_fn(x, t) from t=0 to t=1 with fixed steps

    Args:
        velocity_fn: Field evaluated at the current state and time
        x0: Initial state
        config: Method (euler or midpoint) and step count

    Returns:
        The state at t=1

    Raises:
        NumericalError: If the state becomes non-finite
    """
    x = np.array(x0, dtype=np.float64)
    h = 1.0 / config.steps
    with no_grad():
        for step in range(config.steps):
            t = step * h
            if config.method == SolverMethod.EULER:
                x = x + h * _evaluate(velocity_fn, x, t)
            else:
                x_mid = x + 0.5 * h * _evaluate(velocity_fn, x, t)
                x = x + h * _evaluate(velocity_fn, x_mid, t + 0.5 * h)
            if not np.all(np.isfinite(x)):
                logger.error("ODE state diverged", extra={"step": step, "t": t, "method": config.method.value})
                raise NumericalError(f"non-finite ODE state at step {step} (t={t:.4f})")
    return x
