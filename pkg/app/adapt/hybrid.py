"""
Static-dynamic hybrid adaptation of a generic renderer to one identity.

The static part is the feature grid, initialised from the encoder and then
optimised directly. The dynamic part is a set of LoRA adapters on every
decoder linear layer. Base encoder and decoder weights never change.
"""
import copy
from dataclasses import dataclass, field
from typing import Collection, Dict, List, Mapping, Optional, Protocol, Tuple

import numpy as np

from app.adapt.renderer import GRID_SHAPE, GenericRenderer
from app.autograd import functional as F
from app.autograd.optim import Adam
from app.autograd.tensor import ArrayLike, Tensor, no_grad, parameter
from app.models.errors import ConfigurationError, DimensionError, NumericalError
from app.models.schemas import IMAGE_SIZE
from app.nn.layers import LoRALinear, inject_lora, lora_parameters
from app.nn.module import Module
from app.utils.logging import setup_logger
from app.utils.metrics import TrainingMonitor
from app.utils.workers import step_rng

logger = setup_logger("SDHybrid")

INVERSION = "inversion"
LORA = "lora"
ALL_COMPONENTS = frozenset({INVERSION, LORA})
HELD_OUT_FRACTION = 0.2


class LossHook(Protocol):
    """Extra image loss: (pred, target) -> scalar Tensor"""

    def __call__(self, pred: Tensor, target: Tensor) -> Tensor:
        ...


def lpips_hook(pred: Tensor, target: Tensor) -> Tensor:
    raise NotImplementedError("perceptual loss needs a pretrained vision network; supply a hook")


def id_hook(pred: Tensor, target: Tensor) -> Tensor:
    raise NotImplementedError("identity loss needs a pretrained face network; supply a hook")


@dataclass
class AdaptConfig:
    iters: int = 2000
    lr: float = 1e-3
    lora_rank: int = 4
    lora_alpha: Optional[float] = None
    lambda_lpips: float = 0.2
    lambda_id: float = 0.1
    held_out_fraction: float = HELD_OUT_FRACTION
    log_interval: int = 100
    record_wall_time: bool = True

    def hook_weights(self) -> Dict[str, float]:
        return {"lpips": self.lambda_lpips, "id": self.lambda_id}


class FeatureGrid(Module):
    """Learnable 16x16x8 latent for one identity"""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != GRID_SHAPE:
            raise DimensionError(f"feature grid must be {GRID_SHAPE}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericalError("feature grid holds non-finite values")
        self.values = parameter(values.copy())

    @property
    def trainable(self) -> bool:
        return self.values.requires_grad


@dataclass
class AdaptationResult:
    renderer: GenericRenderer
    grid: FeatureGrid
    adapters: List[LoRALinear]
    monitor: TrainingMonitor
    components: frozenset
    train_frames: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    held_out_frames: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def init_inversion(renderer: GenericRenderer, first_frame: ArrayLike) -> FeatureGrid:
    """Trainable grid holding the encoder's prediction for the first frame"""
    frame = np.asarray(getattr(first_frame, "data", first_frame), dtype=np.float64)
    if frame.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise DimensionError(f"first frame must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {frame.shape}")
    with no_grad():
        encoded = renderer.encode(frame).data[0]
    return FeatureGrid(encoded)


def split_frames(n_frames: int, held_out_fraction: float = HELD_OUT_FRACTION) -> Tuple[np.ndarray, np.ndarray]:
    """Leading frames for training, the last `held_out_fraction` for evaluation"""
    if n_frames < 1:
        raise ValueError("empty clip")
    held = int(round(n_frames * held_out_fraction))
    held = min(held, n_frames - 1)
    cut = n_frames - held
    return np.arange(cut), np.arange(cut, n_frames)


def frame_order(train_idx: np.ndarray, seed: int, iters: int) -> np.ndarray:
    """
    Frame visited at each iteration: the training frames reshuffled every epoch

    Iteration `it` depends only on (seed, it // n), so each pass covers every
    training frame once.
    """
    train_idx = np.asarray(train_idx)
    if train_idx.size == 0:
        raise ValueError("no training frames")
    n = train_idx.size
    epochs = [train_idx[step_rng(seed, epoch, stream=5).permutation(n)] for epoch in range(-(-iters // n))]
    return np.concatenate(epochs)[:iters] if epochs else np.zeros(0, dtype=train_idx.dtype)


def _check_clip(frames: np.ndarray, conditions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    frames = np.asarray(frames, dtype=np.float64)
    conditions = np.asarray(conditions, dtype=np.float64)
    if frames.shape[0] == 0:
        raise ValueError("empty clip")
    if frames.shape[1:] != (IMAGE_SIZE, IMAGE_SIZE):
        raise DimensionError(f"frames must be (n, {IMAGE_SIZE}, {IMAGE_SIZE}), got {frames.shape}")
    if conditions.shape != (frames.shape[0],):
        raise DimensionError(f"{conditions.shape} conditions for {frames.shape[0]} frames")
    if np.any(conditions < 0.0) or np.any(conditions > 1.0):
        raise ValueError("motion conditions must lie in [0, 1]")
    return frames, conditions


def sd_hybrid_adapt(
    renderer: GenericRenderer,
    frames: np.ndarray,
    conditions: np.ndarray,
    config: Optional[AdaptConfig] = None,
    seed: int = 0,
    components: Collection[str] = ALL_COMPONENTS,
    hooks: Optional[Mapping[str, LossHook]] = None,
    train_limit: Optional[int] = None
) -> AdaptationResult:
    """
    Adapt a copy of the renderer to one identity's clip

    Args:
        renderer: Pretrained generic renderer; left untouched
        frames: (n, 32, 32) frames of one identity
        conditions: (n,) motion conditions in [0, 1]
        config: Iterations, learning rate, LoRA rank and hook weights
        seed: Seeds LoRA initialisation and frame draws
        components: Subset of {"inversion", "lora"} to optimise
        hooks: Extra losses keyed "lpips" or "id", weighted from the config
        train_limit: Use only the first `train_limit` training frames

    Returns:
        The adapted renderer copy, grid, adapters and loss curve

    Raises:
        ValueError: If the clip is empty
        ConfigurationError: If no component is trainable or a hook is unknown
        NumericalError: If the loss becomes non-finite
    """
    config = config or AdaptConfig()
    frames, conditions = _check_clip(frames, conditions)
    components = frozenset(components)
    unknown = components - ALL_COMPONENTS
    if unknown:
        raise ConfigurationError(f"unknown adaptation components: {sorted(unknown)}")
    hooks = dict(hooks or {})
    weights = config.hook_weights()
    if set(hooks) - set(weights):
        raise ConfigurationError(f"unknown loss hooks: {sorted(set(hooks) - set(weights))}")

    adapted = copy.deepcopy(renderer)
    adapted.freeze()
    grid = init_inversion(adapted, frames[0])
    if INVERSION not in components:
        grid.freeze()
    rng = np.random.default_rng([seed, 5])
    adapters = inject_lora(adapted.decoder, config.lora_rank, rng, config.lora_alpha) if LORA in components else []

    train_idx, held_idx = split_frames(frames.shape[0], config.held_out_fraction)
    if train_limit is not None:
        train_idx = train_idx[:max(1, train_limit)]
    params = grid.trainable_parameters() + lora_parameters(adapters)
    if config.iters > 0 and not params:
        raise ConfigurationError("adaptation needs at least one trainable component")

    monitor = TrainingMonitor(
        ["total", "l1"], log_interval=config.log_interval, record_wall_time=config.record_wall_time, name="adapt"
    )
    optimizer = Adam(params, lr=config.lr) if params else None
    order = frame_order(train_idx, seed, config.iters)

    for it in range(config.iters):
        k = int(order[it])
        optimizer.zero_grad()
        with monitor.track():
            pred = adapted.decode(grid.values, conditions[k])
            target = Tensor(frames[k])
            l1 = F.l1(pred, target)
            total = l1
            for name, hook in hooks.items():
                total = total + hook(pred, target) * weights[name]
            if not np.isfinite(total.item()):
                logger.error("Adaptation loss diverged", extra={"iteration": it})
                raise NumericalError(f"non-finite adaptation loss at iteration {it}")
            total.backward()
            optimizer.step()
        monitor.log_step(it, total=total.item(), l1=l1.item())

    logger.info(
        "SD-hybrid adaptation finished",
        extra={"components": sorted(components), "iters": config.iters, "final_l1": monitor.last("l1")}
    )
    return AdaptationResult(
        renderer=adapted,
        grid=grid,
        adapters=adapters,
        monitor=monitor,
        components=components,
        train_frames=train_idx,
        held_out_frames=held_idx,
    )


def render(result: AdaptationResult, motion_cond: float) -> np.ndarray:
    """Decode the adapted grid at one motion condition"""
    m = float(motion_cond)
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"motion condition {m} outside [0, 1]")
    with no_grad():
        return result.renderer.decode(result.grid.values, m).data


def render_batch(result: AdaptationResult, conditions: np.ndarray) -> np.ndarray:
    conditions = np.asarray(conditions, dtype=np.float64)
    if np.any(conditions < 0.0) or np.any(conditions > 1.0):
        raise ValueError("motion conditions must lie in [0, 1]")
    grids = np.repeat(result.grid.values.data[None], conditions.size, axis=0)
    with no_grad():
        return result.renderer.decode(grids, conditions).data


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """Peak signal-to-noise ratio for pixel range [0, 1]"""
    mse = float(np.mean((np.asarray(pred) - np.asarray(target)) ** 2))
    return float("inf") if mse == 0.0 else float(10.0 * np.log10(1.0 / mse))


def evaluate_frames(result: AdaptationResult, frames: np.ndarray, conditions: np.ndarray, indices: np.ndarray) -> Dict[str, float]:
    """PSNR and mean L1 of the adapted renderer on the given frames"""
    pred = render_batch(result, conditions[indices])
    target = frames[indices]
    return {"psnr": psnr(pred, target), "l1": float(np.mean(np.abs(pred - target)))}
