"""
Audio-lip alignment scorer.

Windows of 16 frames (stride 8) of audio and of the four lip dimensions
are centred per channel, embedded separately with tanh layers and scored
by a linear head on their elementwise product. The head starts at zero, so
an untrained scorer gives every pair the same score.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.autograd import functional as F
from app.autograd.optim import Adam
from app.autograd.tensor import ArrayLike, Tensor, as_tensor, parameter
from app.models.errors import DimensionError
from app.models.schemas import D_AUDIO, LIP_DIMS
from app.nn.layers import Linear
from app.nn.module import Module
from app.utils.logging import setup_logger
from app.utils.metrics import TrainingMonitor
from app.utils.workers import step_rng

logger = setup_logger("SyncScorer")

WINDOW = 16
STRIDE = 8
MIN_SHIFT = 10
EMBED = 32


def window_starts(frames: int, window: int = WINDOW, stride: int = STRIDE) -> np.ndarray:
    if frames < window:
        raise DimensionError(f"sync windows need at least {window} frames, got {frames}")
    return np.arange(0, frames - window + 1, stride)


def _centred_windows(x: Tensor, starts: np.ndarray) -> Tensor:
    index = starts[:, None] + np.arange(WINDOW)[None, :]
    windows = x[:, index] if x.ndim == 3 else x[index]
    return windows - windows.mean(axis=-2, keepdims=True)


class SyncScorer(Module):
    def __init__(self, rng: np.random.Generator, embed: int = EMBED):
        self.audio_encoder = Linear(WINDOW * D_AUDIO, embed, rng)
        self.motion_encoder = Linear(WINDOW * LIP_DIMS, embed, rng)
        self.head = parameter(np.zeros(embed))
        self.frozen = False

    def freeze(self) -> "SyncScorer":
        super().freeze()
        self.frozen = True
        return self

    def score(self, audio_windows: ArrayLike, lip_windows: ArrayLike) -> Tensor:
        """
        Scores of (audio, lip) window pairs

        Args:
            audio_windows: (..., 16, 8) centred audio windows
            lip_windows: (..., 16, 4) centred lip windows

        Returns:
            One score per pair
        """
        a, m = as_tensor(audio_windows), as_tensor(lip_windows)
        if a.shape[-2:] != (WINDOW, D_AUDIO) or m.shape[-2:] != (WINDOW, LIP_DIMS) or a.shape[:-2] != m.shape[:-2]:
            raise DimensionError(f"score expects (..., {WINDOW}, {D_AUDIO}) and (..., {WINDOW}, {LIP_DIMS}), got {a.shape} and {m.shape}")
        lead = a.shape[:-2]
        a_emb = F.tanh(self.audio_encoder(a.reshape(*lead, WINDOW * D_AUDIO)))
        m_emb = F.tanh(self.motion_encoder(m.reshape(*lead, WINDOW * LIP_DIMS)))
        return (a_emb * m_emb * self.head).sum(axis=-1)

    def score_sequence(self, audio: ArrayLike, motion: ArrayLike) -> Tensor:
        """
        Scores of every window of aligned sequences

        Args:
            audio: (T, 8) or (B, T, 8)
            motion: (T, 16) or (B, T, 16); only the lip dimensions are read

        Returns:
            (n_windows,) or (B, n_windows) scores
        """
        audio, motion = as_tensor(audio), as_tensor(motion)
        if audio.shape[:-1] != motion.shape[:-1]:
            raise DimensionError(f"audio {audio.shape} and motion {motion.shape} are not aligned")
        starts = window_starts(audio.shape[-2])
        lips = motion[:, :, :LIP_DIMS] if motion.ndim == 3 else motion[:, :LIP_DIMS]
        return self.score(_centred_windows(audio, starts), _centred_windows(lips, starts))


def _pair_batch(
    clips: Sequence[Tuple[np.ndarray, np.ndarray]],
    rng: np.random.Generator,
    batch: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aligned windows plus the same audio against lips shifted by >= MIN_SHIFT frames"""
    audio_w, pos_w, neg_w = [], [], []
    for _ in range(batch):
        audio, motion = clips[int(rng.integers(len(clips)))]
        frames = audio.shape[0]
        start = int(rng.integers(frames - WINDOW + 1))
        candidates = np.array([s for s in range(frames - WINDOW + 1) if abs(s - start) >= MIN_SHIFT])
        shifted = int(rng.choice(candidates))
        audio_w.append(audio[start:start + WINDOW])
        pos_w.append(motion[start:start + WINDOW, :LIP_DIMS])
        neg_w.append(motion[shifted:shifted + WINDOW, :LIP_DIMS])

    def centre(w: List[np.ndarray]) -> np.ndarray:
        arr = np.stack(w)
        return arr - arr.mean(axis=1, keepdims=True)

    return centre(audio_w), centre(pos_w), centre(neg_w)


def _check_clips(clips: Sequence[Tuple[np.ndarray, np.ndarray]]) -> None:
    if not clips:
        raise ValueError("sync scorer needs at least one clip")
    too_short = [i for i, (a, _) in enumerate(clips) if a.shape[0] < WINDOW + MIN_SHIFT]
    if too_short:
        raise ValueError(f"insufficient data: clips {too_short[:5]} are shorter than {WINDOW + MIN_SHIFT} frames")


def train_sync_scorer(
    clips: Sequence[Tuple[np.ndarray, np.ndarray]],
    steps: int,
    seed: int,
    batch: int = 64,
    lr: float = 1e-3,
    monitor: Optional[TrainingMonitor] = None
) -> Tuple[SyncScorer, TrainingMonitor]:
    """
    Train the scorer to rank aligned windows above shifted ones, then freeze it

    The loss is the logistic contrastive loss softplus(-s_pos) + softplus(s_neg).

    Args:
        clips: Aligned (audio, motion) pairs
        steps: Adam steps
        seed: Seeds initialisation and batches
        batch: Pairs per step
        lr: Adam learning rate
        monitor: Receives the loss per step

    Returns:
        The frozen scorer and its training monitor

    Raises:
        ValueError: If there are no clips long enough to draw shifted negatives
    """
    _check_clips(clips)
    scorer = SyncScorer(np.random.default_rng([seed, 1]))
    optimizer = Adam(scorer.parameters(), lr=lr)
    monitor = monitor or TrainingMonitor(["contrastive"], log_interval=max(steps // 20, 1), name="sync")

    for step in range(steps):
        audio_w, pos_w, neg_w = _pair_batch(clips, step_rng(seed, step), batch)
        optimizer.zero_grad()
        loss = (F.softplus(-scorer.score(audio_w, pos_w)) + F.softplus(scorer.score(audio_w, neg_w))).mean()
        loss.backward()
        optimizer.step()
        monitor.log_step(step, contrastive=loss.item())

    logger.info("Sync scorer trained", extra={"steps": steps, "final_loss": monitor.last("contrastive")})
    return scorer.freeze(), monitor


def ranking_accuracy(
    scorer: SyncScorer,
    clips: Sequence[Tuple[np.ndarray, np.ndarray]],
    rng: np.random.Generator,
    trials: int = 1000
) -> float:
    """Share of trials where the aligned pair outscores the shifted one; ties count one half"""
    _check_clips(clips)
    audio_w, pos_w, neg_w = _pair_batch(clips, rng, trials)
    pos = scorer.score(audio_w, pos_w).data
    neg = scorer.score(audio_w, neg_w).data
    return float(np.mean((pos > neg) + 0.5 * (pos == neg)))
