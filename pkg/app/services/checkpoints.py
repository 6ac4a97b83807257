"""Model checkpoints: parameters, optimizer moments, step and config echo."""
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from app.adapt.hybrid import LORA, AdaptationResult, FeatureGrid
from app.adapt.renderer import GenericRenderer
from app.a2m.sync import SyncScorer
from app.autograd.optim import Adam
from app.models.errors import ArchiveError
from app.nn.layers import inject_lora
from app.nn.module import Module
from app.nn.transformer import TransformerConfig, VelocityModel
from app.services.archive import Archive, load_archive, save_archive
from app.utils.files import PathLike
from app.utils.logging import setup_logger

logger = setup_logger("Checkpoints")

KIND_SYNC = "sync"
KIND_A2M = "a2m"
KIND_RENDERER = "renderer"
KIND_ADAPTATION = "adaptation"

MODEL_PREFIX = "model."
OPTIM_PREFIX = "optim."
GRID_KEY = "grid.values"


def save_checkpoint(
    path: PathLike,
    kind: str,
    module: Module,
    seed: int,
    config_echo: Optional[str] = None,
    step: int = 0,
    optimizer: Optional[Adam] = None,
    meta: Optional[Dict[str, Any]] = None,
    arrays: Optional[Dict[str, np.ndarray]] = None
) -> Path:
    """
    Write a module's parameters and, optionally, its optimizer state

    Args:
        path: Destination; written atomically
        kind: Checkpoint kind checked on load
        module: Module whose state dict is stored under "model."
        seed: Run seed
        config_echo: Canonical config rendering
        step: Next training step
        optimizer: Adam state stored under "optim."
        meta: Extra metadata
        arrays: Extra arrays stored verbatim
    """
    table = {f"{MODEL_PREFIX}{k}": v for k, v in module.state_dict().items()}
    if optimizer is not None:
        table.update({f"{OPTIM_PREFIX}{k}": v for k, v in optimizer.state.state_dict().items()})
    table.update(arrays or {})
    header: Dict[str, Any] = {"kind": kind, "step": step, **(meta or {})}
    if config_echo is not None:
        header["config"] = config_echo
    written = save_archive(path, Archive(seed=seed, meta=header, arrays=table))
    logger.info("Checkpoint saved", extra={"path": str(written), "kind": kind, "step": step})
    return written


def _section(archive: Archive, prefix: str) -> Dict[str, np.ndarray]:
    return {k[len(prefix):]: v for k, v in archive.arrays.items() if k.startswith(prefix)}


def restore_module(archive: Archive, module: Module) -> Module:
    module.load_state_dict(_section(archive, MODEL_PREFIX))
    return module


def restore_optimizer(archive: Archive, optimizer: Adam) -> Adam:
    state = _section(archive, OPTIM_PREFIX)
    if not state:
        raise ArchiveError("checkpoint holds no optimizer state")
    try:
        optimizer.state.load_state_dict(state)
    except KeyError as e:
        raise ArchiveError(f"optimizer state is missing {e}") from e
    return optimizer


def load_sync_scorer(path: PathLike) -> SyncScorer:
    archive = load_archive(path, KIND_SYNC)
    scorer = restore_module(archive, SyncScorer(np.random.default_rng(0)))
    return scorer.freeze()


def save_a2m_checkpoint(
    path: PathLike,
    model: VelocityModel,
    seed: int,
    step: int,
    optimizer: Optional[Adam] = None,
    config_echo: Optional[str] = None,
    objective: str = "flow"
) -> Path:
    meta = {"model_config": model.config.model_dump(), "objective": objective}
    return save_checkpoint(path, KIND_A2M, model, seed, config_echo, step, optimizer, meta)


def load_a2m_checkpoint(path: PathLike) -> tuple:
    """
    Returns:
        (model, archive); the archive still carries step and optimizer state
    """
    archive = load_archive(path, KIND_A2M)
    try:
        config = TransformerConfig(**archive.meta["model_config"])
    except (KeyError, TypeError, ValueError) as e:
        raise ArchiveError(f"checkpoint has no usable model config: {e}") from e
    model = VelocityModel(config, np.random.default_rng(0))
    return restore_module(archive, model), archive


def load_renderer(path: PathLike) -> GenericRenderer:
    archive = load_archive(path, KIND_RENDERER)
    return restore_module(archive, GenericRenderer(np.random.default_rng(0))).freeze()


def save_adaptation(path: PathLike, result: AdaptationResult, seed: int, config_echo: Optional[str] = None) -> Path:
    adapter = result.adapters[0] if result.adapters else None
    meta = {
        "components": sorted(result.components),
        "lora_rank": adapter.rank if adapter else 0,
        "lora_alpha": adapter.alpha if adapter else 0.0,
    }
    arrays = {GRID_KEY: result.grid.values.data, "split.held_out": result.held_out_frames.astype(np.float64)}
    return save_checkpoint(path, KIND_ADAPTATION, result.renderer, seed, config_echo, meta=meta, arrays=arrays)


def load_adaptation(path: PathLike) -> tuple:
    """
    Returns:
        (renderer with adapters, grid, archive)
    """
    archive = load_archive(path, KIND_ADAPTATION)
    renderer = GenericRenderer(np.random.default_rng(0))
    if LORA in archive.meta.get("components", []):
        inject_lora(renderer.decoder, int(archive.meta["lora_rank"]), np.random.default_rng(0), float(archive.meta["lora_alpha"]))
    restore_module(archive, renderer).freeze()
    grid = FeatureGrid(archive.require(GRID_KEY))
    grid.freeze()
    return renderer, grid, archive
