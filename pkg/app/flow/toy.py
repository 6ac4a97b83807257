"""Flow matching on the planar Gaussian mixture: the smallest end-to-end run."""
from typing import Optional, Tuple

import numpy as np

from app.autograd import functional as F
from app.autograd.optim import Adam
from app.autograd.tensor import ArrayLike, Tensor, as_tensor
from app.flow.cfm import cfm_loss, sample
from app.models.schemas import SolverConfig, SolverMethod
from app.nn.layers import MLP
from app.nn.module import Module
from app.nn.transformer import time_embed
from app.synth.toy import GaussianMixture2D
from app.utils.logging import setup_logger
from app.utils.metrics import TrainingMonitor
from app.utils.workers import step_rng

logger = setup_logger("ToyFlow")

TOY_TIME_DIM = 16
TOY_SOLVER = SolverConfig(method=SolverMethod.MIDPOINT, steps=20)


class ToyVelocityMLP(Module):
    def __init__(self, rng: np.random.Generator, hidden: int = 64, dim: int = 2):
        self.dim = dim
        self.net = MLP([dim + 1 + TOY_TIME_DIM, hidden, hidden, dim], rng)

    def forward(self, x: ArrayLike, t: np.ndarray) -> Tensor:
        x = as_tensor(x)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        features = np.concatenate([t[:, None], time_embed(t, TOY_TIME_DIM)], axis=1)
        return self.net(F.concat([x, features], axis=-1))


def train_toy_flow(
    seed: int,
    steps: int = 3000,
    batch: int = 256,
    lr: float = 1e-3,
    target: Optional[GaussianMixture2D] = None,
    monitor: Optional[TrainingMonitor] = None
) -> Tuple[ToyVelocityMLP, TrainingMonitor]:
    """
    Fit a velocity field that carries N(0, I) onto the mixture

    Args:
        seed: Seeds initialisation and every per-step draw
        steps: Adam steps
        batch: Mixture samples per step
        lr: Adam learning rate
        target: Mixture to learn; the default two-mode mixture when omitted
        monitor: Receives the loss per step

    Returns:
        The trained model and the monitor holding its loss curve
    """
    target = target or GaussianMixture2D()
    model = ToyVelocityMLP(np.random.default_rng([seed, 0]))
    optimizer = Adam(model.parameters(), lr=lr)
    monitor = monitor or TrainingMonitor(["cfm"], log_interval=max(steps // 20, 1), name="toy_flow")

    for step in range(steps):
        rng = step_rng(seed, step)
        x1 = target.sample(batch, rng)
        optimizer.zero_grad()
        loss = cfm_loss(model, x1, rng)
        loss.backward()
        optimizer.step()
        monitor.log_step(step, cfm=loss.item())

    logger.info("Toy flow trained", extra={"steps": steps, "final_loss": monitor.last("cfm")})
    return model, monitor


def sample_toy(
    model: ToyVelocityMLP,
    n: int,
    rng: np.random.Generator,
    solver: SolverConfig = TOY_SOLVER
) -> np.ndarray:
    return sample(lambda x, t: model(x, np.full(x.shape[0], t)), (n, model.dim), rng, solver)
