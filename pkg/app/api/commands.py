"""
Pipeline commands behind the command-line entry point.

Each command reads its prerequisites from the run directory, writes its
artifacts atomically and returns a small summary for stdout.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.a2m.evaluation import generated_sync_accuracy, masked_reconstruction_mse, style_recovery
from app.a2m.inference import infer_stylized, infer_unstylized, make_prompt
from app.a2m.sync import ranking_accuracy, train_sync_scorer
from app.a2m.training import LOSS_COMPONENTS, build_a2m_model, train_icsa2m
from app.adapt.ablation import ablation_eval, adaptation_efficiency, efficiency_csv
from app.adapt.hybrid import evaluate_frames, sd_hybrid_adapt
from app.adapt.renderer import GenericRenderer, pretrain_generic, reconstruction_l1
from app.api.dependencies import (
    find_sync_scorer, get_a2m_model, get_identity_world, get_renderer, get_speaker_dataset, get_sync_scorer
)
from app.autograd.gradcheck import GradcheckResult, format_report, run_suite
from app.autograd.optim import Adam
from app.models.errors import StageError
from app.models.schemas import D_MOTION, Manifest, Objective, SampleSummary, SolverMethod
from app.nn.gradchecks import NETWORK_CHECKS
from app.services.checkpoints import (
    KIND_RENDERER, KIND_SYNC, restore_optimizer, save_a2m_checkpoint, save_adaptation, save_checkpoint
)
from app.services.datasets import (
    load_audio, load_prompt, save_audio, save_identity_world, save_motion, save_prompt, save_speaker_dataset,
    write_manifest
)
from app.settings.config import RunConfig
from app.synth.identities import gen_identity_world
from app.synth.speakers import gen_audio, gen_speaker_dataset
from app.utils.files import atomic_write_text
from app.utils.logging import setup_logger
from app.utils.metrics import TrainingMonitor, rows_to_csv
from app.utils.workers import fan_out

logger = setup_logger("Commands")

METRIC_COLUMNS = ["metric", "config", "seed", "value"]
DRIVE_AUDIO = "drive_audio.mtlk"
PROMPT = "prompt.mtlk"


def cmd_gen_data(config: RunConfig) -> Manifest:
    """Speaker dataset, identity world, a sample drive audio and prompt, and the manifest"""
    data, seed, paths = config.data, config.seed, config.paths
    dataset = gen_speaker_dataset(data.n_speakers, data.clips_per, data.frames, np.random.default_rng([seed, 10]))
    dataset.seed = seed
    world = gen_identity_world(data.n_identities, data.frames_per_identity, np.random.default_rng([seed, 11]))

    echo = config.echo()
    save_speaker_dataset(paths.speakers, dataset, seed, echo)
    save_identity_world(paths.identities, world, seed, echo)
    data_dir = paths.speakers.parent
    drive = gen_audio(config.eval.drive_frames, np.random.default_rng([seed, 12]))
    save_audio(data_dir / DRIVE_AUDIO, drive, seed)
    reference = dataset.held_out_clips()[0] if dataset.held_out_clips() else dataset.clips[0]
    save_prompt(data_dir / PROMPT, make_prompt(reference.audio, reference.motion, config.eval.prompt_frames), seed)

    manifest = Manifest(
        seed=seed,
        n_speakers=data.n_speakers,
        clips_per=data.clips_per,
        frames=data.frames,
        n_identities=data.n_identities,
        frames_per_identity=data.frames_per_identity,
        clips=[{"index": k, "speaker_id": c.speaker_id, "held_out": c.held_out} for k, c in enumerate(dataset.clips)],
        files={
            "speakers": paths.speakers.name,
            "identities": paths.identities.name,
            "drive_audio": DRIVE_AUDIO,
            "prompt": PROMPT,
        },
    )
    write_manifest(paths.manifest, manifest)
    logger.info("Datasets written", extra={"dir": str(data_dir), "clips": len(dataset.clips)})
    return manifest


def cmd_train_sync(config: RunConfig) -> Dict[str, Any]:
    dataset = get_speaker_dataset(config)
    settings = config.sync
    monitor = TrainingMonitor(
        ["contrastive"], log_interval=max(settings.steps // 20, 1), record_wall_time=config.log.record_wall_time, name="sync"
    )
    pairs = [(c.audio, c.motion) for c in dataset.train_clips()]
    scorer, monitor = train_sync_scorer(pairs, settings.steps, config.seed, settings.batch, settings.lr, monitor)

    path = save_checkpoint(config.paths.sync, KIND_SYNC, scorer, config.seed, config.echo(), step=settings.steps)
    monitor.write_csv(path.parent / "loss.csv")
    held = [(c.audio, c.motion) for c in dataset.held_out_clips()] or pairs
    accuracy = ranking_accuracy(scorer, held, np.random.default_rng([config.seed, 30]), config.eval.sync_trials)
    return {"checkpoint": str(path), "held_out_accuracy": accuracy}


def cmd_train_a2m(config: RunConfig) -> Dict[str, Any]:
    """
    Train, or with a2m.resume continue, the audio-to-motion model

    Raises:
        StageError: If the sync loss is on and no scorer exists, or resume finds no checkpoint
    """
    dataset = get_speaker_dataset(config)
    train_config = config.a2m_train_config()
    scorer = get_sync_scorer(config) if train_config.lambda_sync > 0 else find_sync_scorer(config)

    if config.a2m.resume:
        model, archive = get_a2m_model(config)
        optimizer = restore_optimizer(archive, Adam(model.trainable_parameters(), lr=train_config.lr))
        start_step = int(archive.meta.get("step", 0))
    else:
        model = build_a2m_model(config.model.transformer, config.seed)
        optimizer = Adam(model.trainable_parameters(), lr=train_config.lr)
        start_step = 0

    monitor = TrainingMonitor(
        LOSS_COMPONENTS, log_interval=train_config.log_interval, record_wall_time=train_config.record_wall_time, name="a2m"
    )
    train_icsa2m(model, dataset.train_clips(), train_config, config.seed, scorer, optimizer, start_step, monitor)
    end_step = start_step + train_config.steps
    path = save_a2m_checkpoint(
        config.paths.a2m, model, config.seed, end_step, optimizer, config.echo(), train_config.objective.value
    )
    monitor.write_csv(path.parent / "loss.csv")
    return {"checkpoint": str(path), "step": end_step, "final_total": monitor.last("total")}


def _pretrained_renderer(config: RunConfig) -> GenericRenderer:
    if config.paths.renderer.exists():
        return get_renderer(config)
    world = get_identity_world(config)
    renderer, monitor = pretrain_generic(
        world,
        config.adapt.pretrain_steps,
        config.seed,
        identities=config.pretrain_identities,
        batch=config.adapt.pretrain_batch,
        lr=config.adapt.lr,
        monitor=TrainingMonitor(
            ["l1"], log_interval=config.adapt.log_interval, record_wall_time=config.log.record_wall_time, name="pretrain"
        ),
        min_identities=config.adapt.min_pretrain_identities,
    )
    path = save_checkpoint(config.paths.renderer, KIND_RENDERER, renderer, config.seed, config.echo(), step=config.adapt.pretrain_steps)
    monitor.write_csv(path.parent / "pretrain_loss.csv")
    return renderer.freeze()


def cmd_adapt(config: RunConfig) -> Dict[str, Any]:
    """Pretrain the generic renderer if needed, then adapt it to the chosen identity"""
    world = get_identity_world(config)
    renderer = _pretrained_renderer(config)
    identity = config.adapt_identity
    frames, conditions = world.clip(identity)
    result = sd_hybrid_adapt(renderer, frames, conditions, config.adapt_config(), seed=config.seed)

    path = save_adaptation(config.paths.adaptation, result, config.seed, config.echo())
    result.monitor.write_csv(path.parent / "loss.csv")
    return {
        "checkpoint": str(path),
        "identity": identity,
        **evaluate_frames(result, frames, conditions, result.held_out_frames),
        "generic_held_out_l1": reconstruction_l1(renderer, world, config.held_out_identities),
    }


def cmd_sample(
    config: RunConfig,
    cfg_w: Optional[float] = None,
    ode_method: Optional[SolverMethod] = None,
    ode_steps: Optional[int] = None
) -> SampleSummary:
    """
    Generate motion for an audio file, stylized when a prompt file is given

    Raises:
        StageError: If no model is trained or no audio is available
        DimensionError: If prompt audio and motion are misaligned
    """
    model, archive = get_a2m_model(config)
    objective = Objective(archive.meta.get("objective", Objective.FLOW.value))
    audio_path = config.paths.audio or config.paths.speakers.parent / DRIVE_AUDIO
    if not audio_path.exists():
        raise StageError("gen-data", f"no driving audio at {audio_path}")
    audio = load_audio(audio_path)
    solver = config.solver_config(ode_method, ode_steps)
    w = config.solver.cfg_w if cfg_w is None else cfg_w
    rng = np.random.default_rng([config.seed, 20])

    if config.paths.prompt is not None:
        prompt = load_prompt(config.paths.prompt)
        if prompt.frames + audio.shape[0] > config.a2m.window:
            logger.warning("Sample is longer than the training window", extra={
                "frames": prompt.frames + audio.shape[0], "window": config.a2m.window
            })
        motion = infer_stylized(model, audio, prompt, rng, w, solver, objective)
        summary = SampleSummary(mode="stylized", frames=motion.shape[0], seed=config.seed, cfg_w=w, solver=solver, prompt_frames=prompt.frames)
    else:
        motion = infer_unstylized(model, audio, rng, solver, objective)
        summary = SampleSummary(mode="unstylized", frames=motion.shape[0], seed=config.seed, cfg_w=0.0, solver=solver)

    out_dir = config.paths.out / "sample"
    save_motion(out_dir / "motion.mtlk", motion, config.seed, summary.model_dump(mode="json"))
    if config.emit_csv:
        columns = ["frame", *[f"m{d:02d}" for d in range(D_MOTION)]]
        rows = [{"frame": i, **{f"m{d:02d}": float(motion[i, d]) for d in range(D_MOTION)}} for i in range(motion.shape[0])]
        atomic_write_text(out_dir / "motion.csv", rows_to_csv(rows, columns))
    logger.info("Motion sampled", extra=summary.model_dump(mode="json"))
    return summary


def _a2m_rows(config: RunConfig, seed: int, models: List[Tuple[str, Any, Objective]], dataset, scorer) -> List[Dict[str, Any]]:
    solver = config.solver_config()
    evals = config.eval
    held = dataset.held_out_clips() or dataset.clips
    # generated motion stays within the positions seen in training
    window = config.a2m.window
    pairs = [(c.audio[:window], c.motion[:window]) for c in held]
    rows: List[Dict[str, Any]] = [{
        "metric": "sync_accuracy", "config": "real", "seed": seed,
        "value": ranking_accuracy(scorer, pairs, np.random.default_rng([seed, 30]), evals.sync_trials),
    }]
    for name, model, objective in models:
        audios = [c.audio[:window] for c in held]
        rows.append({
            "metric": "sync_accuracy", "config": name, "seed": seed,
            "value": generated_sync_accuracy(model, scorer, audios, seed, solver, objective, evals.sync_trials),
        })
        rows.append({
            "metric": "masked_mse", "config": name, "seed": seed,
            "value": masked_reconstruction_mse(model, held, seed, config.a2m.window, solver, objective),
        })
    name, model, objective = models[0]
    for w in evals.w_sweep:
        recovery = style_recovery(
            model, dataset, seed, evals.style_trials, w, solver, evals.prompt_frames, evals.drive_frames, objective
        )
        rows.append({"metric": "style_accuracy", "config": f"w={w:g}", "seed": seed, "value": recovery["accuracy"]})
        rows.append({"metric": "style_error", "config": f"w={w:g}", "seed": seed, "value": recovery["mean_error"]})
    return rows


def cmd_eval(config: RunConfig) -> Path:
    """
    Style recovery with its guidance sweep, sync ranking accuracy, masked
    reconstruction error and the adaptation ablation, as one metrics CSV

    Raises:
        StageError: If any trained artifact is missing
    """
    dataset = get_speaker_dataset(config)
    world = get_identity_world(config)
    scorer = get_sync_scorer(config)
    model, archive = get_a2m_model(config)
    renderer = get_renderer(config)
    objective = Objective(archive.meta.get("objective", Objective.FLOW.value))
    models = [(objective.value, model, objective)]
    if config.paths.baseline is not None:
        baseline, baseline_archive = get_a2m_model(config, config.paths.baseline)
        baseline_objective = Objective(baseline_archive.meta.get("objective", Objective.FLOW.value))
        models.append((f"baseline-{baseline_objective.value}", baseline, baseline_objective))

    seeds = config.eval.seeds
    per_seed = fan_out(lambda s: _a2m_rows(config, s, models, dataset, scorer), seeds, config.threads)
    rows = [row for chunk in per_seed for row in chunk]

    adapt_config = config.adapt_config()
    ablation = ablation_eval(renderer, world, config.adapt_identity, seeds, adapt_config, config.threads)
    for row in ablation:
        rows.append({"metric": "adapt_psnr", "config": row["config"], "seed": row["seed"], "value": row["psnr"]})
        rows.append({"metric": "adapt_l1", "config": row["config"], "seed": row["seed"], "value": row["l1"]})

    out_dir = config.paths.out / "eval"
    path = out_dir / "metrics.csv"
    atomic_write_text(path, rows_to_csv(rows, METRIC_COLUMNS))
    if config.eval.efficiency:
        frames, conditions = world.clip(config.adapt_identity)
        cells = adaptation_efficiency(
            renderer, frames, conditions, config.eval.efficiency_iters, config.eval.efficiency_fractions,
            config.seed, adapt_config, config.threads,
        )
        atomic_write_text(out_dir / "efficiency.csv", efficiency_csv(cells))
    logger.info("Evaluation written", extra={"path": str(path), "rows": len(rows)})
    return path


def cmd_gradcheck(seed: int = 0) -> Tuple[List[GradcheckResult], str]:
    """Every op check plus the end-to-end network checks, with the text report"""
    results = run_suite(seed=seed, extra=NETWORK_CHECKS)
    return results, format_report(results)
