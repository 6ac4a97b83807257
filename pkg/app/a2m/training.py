from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.a2m.losses import DEFAULT_LAMBDA_SYNC, DEFAULT_PROMPT_DROPOUT, DEFAULT_PROMPT_RATE, icsa2m_loss, make_batch
from app.a2m.layout import INPUT_WIDTH
from app.a2m.sync import SyncScorer
from app.autograd.optim import Adam
from app.models.errors import NumericalError
from app.models.schemas import D_MOTION, Objective
from app.nn.transformer import TransformerConfig, VelocityModel
from app.synth.speakers import Clip
from app.utils.logging import setup_logger
from app.utils.metrics import TrainingMonitor
from app.utils.workers import step_rng

logger = setup_logger("A2MTraining")

LOSS_COMPONENTS = ("total", "cfm", "sync")


@dataclass
class A2MTrainConfig:
    steps: int = 200
    batch_size: int = 8
    window: int = 192
    lr: float = 1e-3
    lambda_sync: float = DEFAULT_LAMBDA_SYNC
    prompt_dropout: float = DEFAULT_PROMPT_DROPOUT
    prompt_rate: float = DEFAULT_PROMPT_RATE
    objective: Objective = Objective.FLOW
    log_interval: int = 10
    record_wall_time: bool = True


def build_a2m_model(config: TransformerConfig, seed: int) -> VelocityModel:
    """Velocity model sized for the audio-to-motion layout"""
    sized = TransformerConfig(**{**config.model_dump(), "input_dim": INPUT_WIDTH, "output_dim": D_MOTION})
    return VelocityModel(sized, np.random.default_rng([seed, 2]))


def train_icsa2m(
    model: VelocityModel,
    clips: Sequence[Clip],
    config: A2MTrainConfig,
    seed: int,
    scorer: Optional[SyncScorer] = None,
    optimizer: Optional[Adam] = None,
    start_step: int = 0,
    monitor: Optional[TrainingMonitor] = None
) -> TrainingMonitor:
    """
    Masked-infilling training of the audio-to-motion velocity model

    Every step draws its batch from a generator keyed on (seed, step), so a run
    resumed at `start_step` with the saved parameters and optimizer state
    replays the same losses.

    Args:
        model: Model to train in place
        clips: Training clips
        config: Loop settings
        seed: Base seed
        scorer: Frozen sync scorer; needed when lambda_sync > 0
        optimizer: Optimizer to continue from; a fresh Adam when omitted
        start_step: First step index
        monitor: Receives (total, cfm, sync) per step

    Returns:
        The monitor with the loss curve

    Raises:
        NumericalError: If the loss becomes non-finite
    """
    optimizer = optimizer or Adam(model.trainable_parameters(), lr=config.lr)
    monitor = monitor or TrainingMonitor(
        LOSS_COMPONENTS, log_interval=config.log_interval, record_wall_time=config.record_wall_time, name="a2m"
    )
    scorer_state = scorer.state_dict() if scorer is not None else None

    for step in range(start_step, start_step + config.steps):
        rng = step_rng(seed, step)
        batch = make_batch(clips, rng, config.batch_size, config.window, config.prompt_dropout, config.prompt_rate)
        optimizer.zero_grad()
        with monitor.track():
            total, cfm_part, sync_part = icsa2m_loss(model, batch, scorer, config.lambda_sync, config.objective)
            if not np.isfinite(total.item()):
                logger.error("Audio-to-motion loss diverged", extra={"step": step})
                raise NumericalError(f"non-finite loss at step {step}")
            total.backward()
            optimizer.step()
        monitor.log_step(step, total=total.item(), cfm=cfm_part.item(), sync=sync_part.item())

    if scorer_state is not None:
        changed = [k for k, v in scorer.state_dict().items() if not np.array_equal(v, scorer_state[k])]
        if changed:
            raise RuntimeError(f"frozen sync scorer changed during training: {changed}")
    logger.info("Audio-to-motion training finished", extra={"steps": config.steps, "final_total": monitor.last("total")})
    return monitor


def next_step_loss(
    model: VelocityModel,
    clips: Sequence[Clip],
    config: A2MTrainConfig,
    seed: int,
    step: int,
    scorer: Optional[SyncScorer] = None
) -> float:
    """Loss the training loop would see at `step`, without updating anything"""
    batch = make_batch(
        clips, step_rng(seed, step), config.batch_size, config.window, config.prompt_dropout, config.prompt_rate
    )
    total, _, _ = icsa2m_loss(model, batch, scorer, config.lambda_sync, config.objective)
    return total.item()
