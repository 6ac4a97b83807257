"""
Generic conditional renderer: a frame encoder to a 16x16x8 feature grid and
a decoder from (grid, motion scalar) back to a 32x32 frame.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.autograd import functional as F
from app.autograd.optim import Adam
from app.autograd.tensor import ArrayLike, Tensor, as_tensor, no_grad
from app.models.errors import DimensionError
from app.models.schemas import IMAGE_SIZE
from app.nn.layers import Linear
from app.nn.module import Module
from app.synth.identities import IdentityWorld
from app.utils.logging import setup_logger
from app.utils.metrics import TrainingMonitor
from app.utils.workers import step_rng

logger = setup_logger("Renderer")

GRID_SHAPE = (16, 16, 8)
GRID_SIZE = int(np.prod(GRID_SHAPE))
PIXELS = IMAGE_SIZE * IMAGE_SIZE
HIDDEN = 256
MOTION_FEATURES = 4
MIN_PRETRAIN_IDENTITIES = 50


def motion_features(m: Union[float, np.ndarray]) -> np.ndarray:
    """[m, m^2, sin(pi m), cos(pi m)] per condition"""
    m = np.atleast_1d(np.asarray(m, dtype=np.float64))
    return np.stack([m, m * m, np.sin(np.pi * m), np.cos(np.pi * m)], axis=-1)


class Encoder(Module):
    def __init__(self, rng: np.random.Generator):
        self.inner = Linear(PIXELS, HIDDEN, rng)
        self.outer = Linear(HIDDEN, GRID_SIZE, rng)

    def forward(self, images: ArrayLike) -> Tensor:
        x = as_tensor(images)
        batch = x.shape[0]
        h = F.gelu(self.inner(x.reshape(batch, PIXELS) - 0.5))
        return self.outer(h).reshape(batch, *GRID_SHAPE)


class Decoder(Module):
    """Four linear layers, all LoRA-injectable"""

    def __init__(self, rng: np.random.Generator):
        self.grid_proj = Linear(GRID_SIZE, HIDDEN, rng)
        self.motion_proj = Linear(MOTION_FEATURES, HIDDEN, rng)
        self.hidden = Linear(HIDDEN, HIDDEN, rng)
        self.out = Linear(HIDDEN, PIXELS, rng)

    def forward(self, grid: ArrayLike, m: Union[float, np.ndarray]) -> Tensor:
        g = as_tensor(grid)
        batch = g.shape[0]
        h = self.grid_proj(g.reshape(batch, GRID_SIZE)) + self.motion_proj(motion_features(m))
        h = F.gelu(self.hidden(F.gelu(h)))
        return F.sigmoid(self.out(h)).reshape(batch, IMAGE_SIZE, IMAGE_SIZE)


class GenericRenderer(Module):
    def __init__(self, rng: np.random.Generator):
        self.encoder = Encoder(rng)
        self.decoder = Decoder(rng)

    def encode(self, images: ArrayLike) -> Tensor:
        """(batch, 32, 32) or (32, 32) frames to (batch, 16, 16, 8) grids"""
        x = as_tensor(images)
        if x.shape[-2:] != (IMAGE_SIZE, IMAGE_SIZE):
            raise DimensionError(f"frames must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {x.shape}")
        return self.encoder(x.reshape(1, IMAGE_SIZE, IMAGE_SIZE) if x.ndim == 2 else x)

    def decode(self, grid: ArrayLike, m: Union[float, np.ndarray]) -> Tensor:
        """
        Render grids at motion conditions

        Args:
            grid: (batch, 16, 16, 8) or a single (16, 16, 8) grid
            m: One condition per grid (a scalar for a single grid)

        Returns:
            (batch, 32, 32) frames, or (32, 32) for a single grid
        """
        g = as_tensor(grid)
        single = g.shape == GRID_SHAPE
        if single:
            g = g.reshape(1, *GRID_SHAPE)
        if g.shape[1:] != GRID_SHAPE:
            raise DimensionError(f"grids must be {GRID_SHAPE}, got {g.shape}")
        m = np.asarray(m, dtype=np.float64)
        if m.size not in (1, g.shape[0]):
            raise DimensionError(f"{m.size} conditions for {g.shape[0]} grids")
        out = self.decoder(g, np.broadcast_to(m.reshape(-1), (g.shape[0],)))
        return out.reshape(IMAGE_SIZE, IMAGE_SIZE) if single else out

    def reconstruct(self, source: ArrayLike, m: Union[float, np.ndarray]) -> Tensor:
        return self.decode(self.encode(source), m)


def pretrain_generic(
    world: IdentityWorld,
    steps: int,
    seed: int,
    identities: Optional[Sequence[int]] = None,
    batch: int = 16,
    lr: float = 1e-3,
    monitor: Optional[TrainingMonitor] = None,
    min_identities: int = MIN_PRETRAIN_IDENTITIES
) -> Tuple[GenericRenderer, TrainingMonitor]:
    """
    Train encoder and decoder jointly across identities

    Each pair takes a source frame of an identity, encodes it and decodes at
    the condition of another frame of the same identity, under per-pixel L1.

    Args:
        world: Identity world
        steps: Adam steps
        seed: Seeds initialisation and pair draws
        identities: Identities to train on; all by default
        batch: Pairs per step
        lr: Adam learning rate
        monitor: Receives the L1 loss per step
        min_identities: Smallest identity pool accepted; lower it only for smoke runs

    Returns:
        The renderer and the monitor with its loss curve

    Raises:
        ValueError: If fewer than `min_identities` identities (or none) are given
    """
    ids = np.arange(len(world.identities)) if identities is None else np.asarray(identities)
    if ids.size == 0 or ids.size < min_identities:
        raise ValueError(f"pretraining needs at least {max(min_identities, 1)} identities, got {ids.size}")
    renderer = GenericRenderer(np.random.default_rng([seed, 4]))
    optimizer = Adam(renderer.parameters(), lr=lr)
    monitor = monitor or TrainingMonitor(["l1"], log_interval=max(steps // 20, 1), name="pretrain")
    frames_per = world.frames_per

    for step in range(steps):
        rng = step_rng(seed, step, stream=4)
        who = ids[rng.integers(ids.size, size=batch)]
        src = rng.integers(frames_per, size=batch)
        tgt = rng.integers(frames_per, size=batch)
        optimizer.zero_grad()
        pred = renderer.decode(renderer.encode(world.frames[who, src]), world.conditions[who, tgt])
        loss = F.l1(pred, world.frames[who, tgt])
        loss.backward()
        optimizer.step()
        monitor.log_step(step, l1=loss.item())

    logger.info("Generic renderer pretrained", extra={"steps": steps, "final_l1": monitor.last("l1")})
    return renderer, monitor


def reconstruction_l1(renderer: GenericRenderer, world: IdentityWorld, identities: Sequence[int]) -> float:
    """Mean L1 of decoding every frame of each identity from its first frame"""
    errors = []
    with no_grad():
        for i in identities:
            frames, conditions = world.clip(int(i))
            grid = renderer.encode(frames[0])
            pred = renderer.decode(np.repeat(grid.data, len(conditions), axis=0), conditions)
            errors.append(np.mean(np.abs(pred.data - frames)))
    return float(np.mean(errors))
