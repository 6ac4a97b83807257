"""Component ablation and efficiency sweeps for SD-hybrid adaptation."""
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.adapt.hybrid import INVERSION, LORA, AdaptConfig, evaluate_frames, sd_hybrid_adapt
from app.adapt.renderer import GenericRenderer
from app.synth.identities import IdentityWorld
from app.utils.logging import setup_logger
from app.utils.metrics import rows_to_csv
from app.utils.workers import fan_out

logger = setup_logger("Ablation")

ABLATION_CONFIGS: Dict[str, frozenset] = {
    "full": frozenset({INVERSION, LORA}),
    "-inversion": frozenset({LORA}),
    "-lora": frozenset({INVERSION}),
}
ABLATION_COLUMNS = ["config", "seed", "psnr", "l1"]
EFFICIENCY_COLUMNS = ["iters", "fraction", "train_frames", "psnr", "l1"]


def ablation_eval(
    renderer: GenericRenderer,
    world: IdentityWorld,
    identity: int,
    seeds: Sequence[int],
    config: Optional[AdaptConfig] = None,
    workers: int = 1
) -> List[Dict]:
    """
    Adapt one identity under every component configuration and seed

    Each job adapts its own renderer copy, so jobs run in parallel safely.

    Returns:
        One row per (config, seed) with held-out PSNR and L1
    """
    config = config or AdaptConfig()
    frames, conditions = world.clip(identity)
    jobs = [(name, int(seed)) for name in ABLATION_CONFIGS for seed in seeds]

    def run(job):
        name, seed = job
        result = sd_hybrid_adapt(renderer, frames, conditions, config, seed=seed, components=ABLATION_CONFIGS[name])
        scores = evaluate_frames(result, frames, conditions, result.held_out_frames)
        return {"config": name, "seed": seed, **scores}

    rows = fan_out(run, jobs, workers)
    logger.info("Ablation finished", extra={"identity": identity, "rows": len(rows)})
    return rows


def mean_psnr(rows: Sequence[Dict]) -> Dict[str, float]:
    """Mean PSNR per ablation config"""
    out: Dict[str, float] = {}
    for name in ABLATION_CONFIGS:
        values = [r["psnr"] for r in rows if r["config"] == name]
        if values:
            out[name] = float(np.mean(values))
    return out


def adaptation_efficiency(
    renderer: GenericRenderer,
    frames: np.ndarray,
    conditions: np.ndarray,
    iteration_grid: Sequence[int],
    frame_fractions: Sequence[float],
    seed: int,
    config: Optional[AdaptConfig] = None,
    workers: int = 1
) -> List[Dict]:
    """
    Held-out PSNR of full adaptation over iteration budgets and training-data fractions

    The held-out split stays fixed; a fraction keeps that share of the leading
    training frames.
    """
    config = config or AdaptConfig()
    n_train = len(frames) - int(round(len(frames) * config.held_out_fraction))
    for fraction in frame_fractions:
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"frame fraction {fraction} outside (0, 1]")
    jobs = [(int(iters), float(fraction)) for iters in iteration_grid for fraction in frame_fractions]

    def run(job):
        iters, fraction = job
        limit = max(1, int(round(fraction * n_train)))
        cell = AdaptConfig(**{**vars(config), "iters": iters})
        result = sd_hybrid_adapt(renderer, frames, conditions, cell, seed=seed, train_limit=limit)
        scores = evaluate_frames(result, frames, conditions, result.held_out_frames)
        return {"iters": iters, "fraction": fraction, "train_frames": int(result.train_frames.size), **scores}

    return fan_out(run, jobs, workers)


def ablation_csv(rows: Sequence[Dict]) -> str:
    return rows_to_csv(rows, ABLATION_COLUMNS)


def efficiency_csv(rows: Sequence[Dict]) -> str:
    return rows_to_csv(rows, EFFICIENCY_COLUMNS)
