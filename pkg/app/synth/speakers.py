"""
Synthetic stylized audio-to-motion world.

Motion follows motion_d[t] = offset_d + gain_d * smooth(M_d . audio[t], tau),
with a shared articulation map M whose first rows drive the lips. Everything
a speaker does beyond lip sync lives in (gain, offset, tau), which
recover_style can read back from any aligned pair.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from app.models.errors import ConfigurationError, DimensionError
from app.models.schemas import D_AUDIO, D_MOTION, LIP_DIMS, StyleEstimate, SyntheticSpeaker
from app.utils.logging import setup_logger

logger = setup_logger("SpeakerWorld")

ARTICULATION_SEED = 20240
TAU_GRID = tuple(range(1, 9))
MIN_GAIN_DISTANCE = 0.1
AUDIO_WINDOW = 3


@dataclass
class Clip:
    speaker_id: int
    audio: np.ndarray
    motion: np.ndarray
    held_out: bool = False


@dataclass
class SpeakerDataset:
    speakers: List[SyntheticSpeaker]
    clips: List[Clip]
    seed: int = 0
    articulation: np.ndarray = field(default_factory=lambda: articulation_map())

    def train_clips(self) -> List[Clip]:
        return [c for c in self.clips if not c.held_out]

    def held_out_clips(self) -> List[Clip]:
        return [c for c in self.clips if c.held_out]

    def speaker(self, speaker_id: int) -> SyntheticSpeaker:
        return self.speakers[speaker_id]

    def clips_of(self, speaker_id: int) -> List[Clip]:
        return [c for c in self.clips if c.speaker_id == speaker_id]


def articulation_map(seed: int = ARTICULATION_SEED) -> np.ndarray:
    """
    Shared 16x8 map from audio channels to motion drive

    Lip rows are dense with unit norm; every other row has one or two
    entries of magnitude 0.3-0.6.
    """
    rng = np.random.default_rng(seed)
    m = np.zeros((D_MOTION, D_AUDIO))
    lips = rng.standard_normal((LIP_DIMS, D_AUDIO))
    m[:LIP_DIMS] = lips / np.linalg.norm(lips, axis=1, keepdims=True)
    for row in range(LIP_DIMS, D_MOTION):
        count = int(rng.integers(1, 3))
        cols = rng.choice(D_AUDIO, size=count, replace=False)
        m[row, cols] = rng.uniform(0.3, 0.6, size=count) * rng.choice([-1.0, 1.0], size=count)
    return m


def gen_audio(frames: int, rng: np.random.Generator) -> np.ndarray:
    """Band-limited noise: a 3-tap moving average of white noise, rescaled to unit variance"""
    if frames < 1:
        raise ValueError("audio needs at least one frame")
    white = rng.standard_normal((frames + AUDIO_WINDOW - 1, D_AUDIO))
    kernel = np.ones(AUDIO_WINDOW) / np.sqrt(AUDIO_WINDOW)
    return np.stack([np.convolve(white[:, c], kernel, mode="valid") for c in range(D_AUDIO)], axis=1)


def smooth(u: np.ndarray, tau: int) -> np.ndarray:
    """Causal EMA y[t] = y[t-1] + (u[t] - y[t-1]) / tau with y[-1] = 0, along axis 0"""
    if tau < 1:
        raise ValueError(f"smoothing constant must be >= 1, got {tau}")
    out = np.empty_like(u, dtype=np.float64)
    y = np.zeros(u.shape[1:])
    rate = 1.0 / tau
    for i in range(u.shape[0]):
        y = y + (u[i] - y) * rate
        out[i] = y
    return out


def gen_motion(audio: np.ndarray, speaker: SyntheticSpeaker) -> np.ndarray:
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 2 or audio.shape[1] != D_AUDIO:
        raise DimensionError(f"audio must be (frames, {D_AUDIO}), got {audio.shape}")
    drive = smooth(audio @ speaker.articulation.T, speaker.tau)
    return speaker.offset + speaker.gain * drive


def lip_signal(audio: np.ndarray, articulation: Optional[np.ndarray] = None) -> np.ndarray:
    """Style-free articulation drive of the lip dimensions"""
    articulation = articulation_map() if articulation is None else articulation
    return np.asarray(audio) @ articulation[:LIP_DIMS].T


def recover_style(audio: np.ndarray, motion: np.ndarray, articulation: Optional[np.ndarray] = None) -> StyleEstimate:
    """
    Least-squares read-out of (gain, offset) per dimension with a grid search over tau

    Args:
        audio: (frames, 8) driving audio
        motion: (frames, 16) motion to analyse
        articulation: Known articulation map; the shared map by default

    Returns:
        The estimate at the tau with the lowest residual. Dimensions whose drive
        has no variance, or whose gain is not positive, are flagged.

    Raises:
        ValueError: If fewer than 32 frames are given
    """
    audio, motion = np.asarray(audio, dtype=np.float64), np.asarray(motion, dtype=np.float64)
    if audio.shape[0] != motion.shape[0]:
        raise DimensionError(f"audio has {audio.shape[0]} frames but motion has {motion.shape[0]}")
    if audio.shape[0] < 4 * D_AUDIO:
        raise ValueError(f"style recovery needs at least {4 * D_AUDIO} frames, got {audio.shape[0]}")
    articulation = articulation_map() if articulation is None else articulation
    raw = audio @ articulation.T

    best: Optional[Tuple[float, int, np.ndarray, np.ndarray, np.ndarray]] = None
    for tau in TAU_GRID:
        s = smooth(raw, tau)
        s_mean, m_mean = s.mean(axis=0), motion.mean(axis=0)
        s_c, m_c = s - s_mean, motion - m_mean
        var = np.sum(s_c * s_c, axis=0)
        degenerate = var <= 1e-12 * motion.shape[0]
        gain = np.where(degenerate, 0.0, np.sum(s_c * m_c, axis=0) / np.where(degenerate, 1.0, var))
        offset = m_mean - gain * s_mean
        residual = float(np.sum((motion - offset - gain * s) ** 2))
        if best is None or residual < best[0]:
            best = (residual, tau, gain, offset, degenerate)

    residual, tau, gain, offset, degenerate = best
    flagged = degenerate | (gain <= 1e-8)
    if np.any(flagged):
        logger.debug("Style estimate flagged", extra={"dims": np.flatnonzero(flagged).tolist()})
    return StyleEstimate(gain=gain, offset=offset, tau=tau, residual=residual, flagged=flagged)


def draw_speaker(speaker_id: int, rng: np.random.Generator, articulation: Optional[np.ndarray] = None) -> SyntheticSpeaker:
    return SyntheticSpeaker(
        speaker_id=speaker_id,
        gain=rng.uniform(0.5, 2.0, D_MOTION),
        offset=rng.uniform(-0.5, 0.5, D_MOTION),
        tau=int(rng.integers(1, 9)),
        articulation=articulation_map() if articulation is None else articulation,
    )


def draw_speakers(n_speakers: int, rng: np.random.Generator, max_attempts: int = 1000) -> List[SyntheticSpeaker]:
    """Speakers whose gain vectors are pairwise further apart than 0.1 (rejection sampling)"""
    articulation = articulation_map()
    speakers: List[SyntheticSpeaker] = []
    attempts = 0
    while len(speakers) < n_speakers:
        attempts += 1
        if attempts > max_attempts:
            raise ConfigurationError(f"could not draw {n_speakers} distinguishable speakers")
        candidate = draw_speaker(len(speakers), rng, articulation)
        if all(np.linalg.norm(candidate.gain - s.gain) > MIN_GAIN_DISTANCE for s in speakers):
            speakers.append(candidate)
    return speakers


def gen_speaker_dataset(
    n_speakers: int,
    clips_per: int,
    frames: int,
    rng: np.random.Generator,
    held_out_per_speaker: Optional[int] = None
) -> SpeakerDataset:
    """
    Multi-speaker corpus of aligned (audio, motion) clips

    Args:
        n_speakers: Number of distinct styles, at least 2
        clips_per: Clips per speaker
        frames: Frames per clip
        rng: Generator for styles and audio
        held_out_per_speaker: Trailing clips of each speaker marked held out;
            a quarter of the clips (at least one when there are two or more) by default

    Returns:
        The dataset with its train/held-out split
    """
    if n_speakers < 2:
        raise ValueError("a speaker dataset needs at least two speakers")
    if clips_per < 1 or frames < 1:
        raise ValueError("clips_per and frames must be positive")
    if held_out_per_speaker is None:
        held_out_per_speaker = max(1, clips_per // 4) if clips_per >= 2 else 0
    speakers = draw_speakers(n_speakers, rng)
    clips: List[Clip] = []
    for speaker in speakers:
        for index in range(clips_per):
            audio = gen_audio(frames, rng)
            clips.append(Clip(
                speaker_id=speaker.speaker_id,
                audio=audio,
                motion=gen_motion(audio, speaker),
                held_out=index >= clips_per - held_out_per_speaker,
            ))
    logger.info("Generated speaker dataset", extra={"speakers": n_speakers, "clips": len(clips), "frames": frames})
    return SpeakerDataset(speakers=speakers, clips=clips, articulation=speakers[0].articulation)
