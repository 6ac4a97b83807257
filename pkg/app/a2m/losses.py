from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.a2m.layout import PRESENCE, assemble_input
from app.a2m.masking import sample_mask
from app.a2m.sync import WINDOW, SyncScorer, window_starts
from app.autograd import functional as F
from app.autograd.tensor import Tensor
from app.flow.cfm import sample_times
from app.flow.paths import interpolate, ot_velocity
from app.models.errors import DimensionError, StageError
from app.models.schemas import Objective
from app.nn.transformer import VelocityModel
from app.synth.speakers import Clip

DEFAULT_LAMBDA_SYNC = 0.05
DEFAULT_PROMPT_DROPOUT = 0.2
DEFAULT_PROMPT_RATE = 0.3


@dataclass
class A2MBatch:
    """One training batch: windows of clips with their masks and flow draws"""
    audio: np.ndarray
    motion: np.ndarray
    mask: np.ndarray
    present: np.ndarray
    t: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        b, frames, _ = self.motion.shape
        if self.audio.shape[:2] != (b, frames) or self.mask.shape != (b, frames) or self.x0.shape != self.motion.shape:
            raise DimensionError("batch arrays are not aligned")
        if self.present.shape != (b,) or self.t.shape != (b,):
            raise DimensionError("batch flags must hold one value per sample")

    @property
    def size(self) -> int:
        return self.motion.shape[0]


def _crop(clip: Clip, rng: np.random.Generator, length: int) -> Tuple[np.ndarray, np.ndarray]:
    frames = clip.audio.shape[0]
    if frames < length:
        raise DimensionError(f"clip of {frames} frames is shorter than the training window {length}")
    start = int(rng.integers(frames - length + 1))
    return clip.audio[start:start + length], clip.motion[start:start + length]


def _prompted_sample(
    clips: Sequence[Clip],
    target: Clip,
    rng: np.random.Generator,
    window: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clean block from another clip of the same speaker followed by a fully masked target"""
    prompt_len = int(rng.integers(max(1, window // 4), max(1, window // 2) + 1))
    peers = [c for c in clips if c.speaker_id == target.speaker_id and c is not target] or [target]
    source = peers[int(rng.integers(len(peers)))]
    prompt_audio, prompt_motion = _crop(source, rng, prompt_len)
    drive_audio, drive_motion = _crop(target, rng, window - prompt_len)
    mask = np.concatenate([np.zeros(prompt_len), np.ones(window - prompt_len)])
    return np.concatenate([prompt_audio, drive_audio]), np.concatenate([prompt_motion, drive_motion]), mask


def make_batch(
    clips: Sequence[Clip],
    rng: np.random.Generator,
    batch_size: int,
    window: int,
    prompt_dropout: float = DEFAULT_PROMPT_DROPOUT,
    prompt_rate: float = DEFAULT_PROMPT_RATE
) -> A2MBatch:
    """
    Crop random windows, mask them and draw (t, x0) for each

    Each sample takes one of three layouts:
      - with probability `prompt_dropout` it loses all context: every frame
        is masked and the presence flag is 0 (the prompt-free branch)
      - with probability `prompt_rate` it mirrors stylized generation: a clean
        lead-in from another clip of the same speaker, then a masked tail
      - otherwise it is an infilling window with random masked segments

    Raises:
        ValueError: If there are no clips or the layout rates exceed 1
        DimensionError: If a clip is shorter than the window
    """
    if not clips:
        raise ValueError("no clips to train on")
    if prompt_dropout + prompt_rate > 1.0:
        raise ValueError(f"prompt_dropout {prompt_dropout} + prompt_rate {prompt_rate} exceeds 1")
    audio, motion, masks, present = [], [], [], []
    for _ in range(batch_size):
        clip = clips[int(rng.integers(len(clips)))]
        if clip.audio.shape[0] < window:
            raise DimensionError(f"clip of {clip.audio.shape[0]} frames is shorter than the training window {window}")
        layout = rng.uniform()
        if prompt_dropout <= layout < prompt_dropout + prompt_rate:
            sample_audio, sample_motion, mask = _prompted_sample(clips, clip, rng, window)
        else:
            sample_audio, sample_motion = _crop(clip, rng, window)
            mask = np.ones(window) if layout < prompt_dropout else sample_mask(window, rng).to_array()
        audio.append(sample_audio)
        motion.append(sample_motion)
        masks.append(mask)
        present.append(0.0 if layout < prompt_dropout else 1.0)
    motion_arr = np.stack(motion)
    return A2MBatch(
        audio=np.stack(audio),
        motion=motion_arr,
        mask=np.stack(masks),
        present=np.array(present),
        t=sample_times(rng, batch_size),
        x0=rng.standard_normal(motion_arr.shape),
    )


def estimate_x1(x_t: Union[np.ndarray, Tensor], t: Union[float, np.ndarray], v: Union[np.ndarray, Tensor]):
    """One-step clean estimate x_t + (1 - t) v; t is scalar or one value per sample"""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= 1.0):
        raise ValueError("clean-sample estimate needs t < 1")
    if t.ndim == 1:
        t = t.reshape(-1, *([1] * (np.ndim(getattr(x_t, "data", x_t)) - 1)))
    return v * (1.0 - t) + x_t


def batch_inputs(batch: A2MBatch, objective: Objective = Objective.FLOW) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Model inputs, the noisy state and the times for a batch"""
    if objective == Objective.DETERMINISTIC:
        x_t = np.zeros_like(batch.motion)
        t = np.zeros(batch.size)
    else:
        x_t = interpolate(batch.x0, batch.motion, batch.t)
        t = batch.t
    context = batch.motion * batch.present[:, None, None]
    inputs = assemble_input(batch.audio, context, x_t, batch.mask)
    inputs[..., PRESENCE] = batch.present[:, None]
    return inputs, x_t, t


def sync_penalty(scorer: SyncScorer, audio: np.ndarray, motion: Tensor, mask: np.ndarray) -> Tensor:
    """Negative mean score over windows, each weighted by its share of masked frames"""
    starts = window_starts(audio.shape[-2])
    index = starts[:, None] + np.arange(WINDOW)[None, :]
    weights = mask[:, index].mean(axis=-1)
    scores = scorer.score_sequence(audio, motion)
    return -F.masked_mean(scores, weights)


def icsa2m_loss(
    model: VelocityModel,
    batch: A2MBatch,
    scorer: Optional[SyncScorer],
    lambda_sync: float = DEFAULT_LAMBDA_SYNC,
    objective: Objective = Objective.FLOW
) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Masked flow matching loss plus the weighted sync penalty

    The sync term scores the composite motion that keeps clean context frames
    and replaces masked frames by the one-step estimate of x1.

    Args:
        model: Velocity model over the assembled input layout
        batch: Training batch
        scorer: Frozen sync scorer; required when lambda_sync > 0
        lambda_sync: Weight of the sync penalty
        objective: flow, or deterministic regression of x1 with x_t = 0, t = 0

    Returns:
        (total, cfm_part, sync_part)

    Raises:
        StageError: If lambda_sync > 0 and no scorer is given
    """
    if lambda_sync > 0 and scorer is None:
        raise StageError("train-sync", "the sync loss needs a trained scorer")
    if scorer is not None and not scorer.frozen:
        raise ValueError("the sync scorer must be frozen before audio-to-motion training")

    inputs, x_t, t = batch_inputs(batch, objective)
    v = model(inputs, t)
    weights = batch.mask[..., None]
    denom = float(batch.mask.sum()) * batch.motion.shape[-1]
    if objective == Objective.DETERMINISTIC:
        x1_hat = v
        diff = v - batch.motion
    else:
        x1_hat = estimate_x1(x_t, t, v)
        diff = v - ot_velocity(batch.motion, x_t, t)
    cfm_part = F.masked_mean(diff * diff, weights, denom=denom)

    if scorer is None:
        sync_part = Tensor(0.0)
        return cfm_part, cfm_part, sync_part
    composite = x1_hat * weights + batch.motion * (1.0 - weights)
    sync_part = sync_penalty(scorer, batch.audio, composite, batch.mask)
    total = cfm_part if lambda_sync == 0 else cfm_part + sync_part * lambda_sync
    return total, cfm_part, sync_part
