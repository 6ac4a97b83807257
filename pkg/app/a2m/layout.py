"""
Per-frame channel layout of the audio-to-motion model input.

    [ audio (8) | context motion (16) | mask flag (1) | x_t (16) | presence flag (1) ]

Masked frames have their context zeroed and mask flag 1. The presence flag
is 1 wherever style information (unmasked context or a prepended prompt) is
available and 0 for the prompt-free branch. Prompt frames are prepended
along time and carry clean prompt motion with mask flag 0. Flow time is not
a channel; the velocity model adds its embedding to every frame.
"""
from typing import Dict, Optional

import numpy as np

from app.models.errors import DimensionError
from app.models.schemas import D_AUDIO, D_MOTION, StylePrompt

AUDIO = slice(0, D_AUDIO)
CONTEXT = slice(D_AUDIO, D_AUDIO + D_MOTION)
MASK = D_AUDIO + D_MOTION
XT = slice(MASK + 1, MASK + 1 + D_MOTION)
PRESENCE = MASK + 1 + D_MOTION
INPUT_WIDTH = PRESENCE + 1


def _rows(audio: np.ndarray, context: np.ndarray, mask: np.ndarray, x_t: np.ndarray, presence: float) -> np.ndarray:
    lead = audio.shape[:-1]
    out = np.zeros(lead + (INPUT_WIDTH,))
    out[..., AUDIO] = audio
    out[..., CONTEXT] = context * (1.0 - mask[..., None])
    out[..., MASK] = mask
    out[..., XT] = x_t
    out[..., PRESENCE] = presence
    return out


def assemble_input(
    audio: np.ndarray,
    motion_context: np.ndarray,
    x_t: np.ndarray,
    mask: np.ndarray,
    style: Optional[StylePrompt] = None,
    prompt_x_t: Optional[np.ndarray] = None,
    present: bool = True
) -> np.ndarray:
    """
    Build the model input for one clip, or a batch when arrays carry a leading batch axis

    Args:
        audio: (..., T, 8) driving audio
        motion_context: (..., T, 16) known motion; masked frames are zeroed here
        x_t: (..., T, 16) noisy motion state
        mask: (..., T) 1 for frames to generate
        style: Prompt prepended along time when present (single clips only)
        prompt_x_t: Noisy state of the prompt frames; the clean prompt motion when omitted
        present: False builds the prompt-free branch (context zeroed, presence 0)

    Returns:
        (..., prompt_T + T, 42) input rows

    Raises:
        DimensionError: If frame counts or widths disagree
    """
    audio, motion_context, x_t = (np.asarray(a, dtype=np.float64) for a in (audio, motion_context, x_t))
    mask = np.asarray(mask, dtype=np.float64)
    if audio.shape[-1] != D_AUDIO or motion_context.shape[-1] != D_MOTION or x_t.shape[-1] != D_MOTION:
        raise DimensionError("audio must have 8 channels and motion 16")
    if motion_context.shape[:-1] != audio.shape[:-1] or x_t.shape[:-1] != audio.shape[:-1] or mask.shape != audio.shape[:-1]:
        raise DimensionError(
            f"misaligned frames: audio {audio.shape}, context {motion_context.shape}, x_t {x_t.shape}, mask {mask.shape}"
        )
    if not present:
        motion_context = np.zeros_like(motion_context)
    rows = _rows(audio, motion_context, mask, x_t, 1.0 if present else 0.0)

    if style is None or not style.present or not present:
        return rows
    if audio.ndim != 2:
        raise DimensionError("style prompts are prepended to single clips only")
    prompt_x_t = style.prompt_motion if prompt_x_t is None else np.asarray(prompt_x_t, dtype=np.float64)
    if prompt_x_t.shape != style.prompt_motion.shape:
        raise DimensionError(f"prompt state {prompt_x_t.shape} does not match prompt motion {style.prompt_motion.shape}")
    prompt_rows = _rows(style.prompt_audio, style.prompt_motion, np.zeros(style.frames), prompt_x_t, 1.0)
    return np.concatenate([prompt_rows, rows], axis=0)


def split_channels(inputs: np.ndarray, prompt_frames: int = 0) -> Dict[str, np.ndarray]:
    """Channels of the target region (frames after the prompt)"""
    target = np.asarray(inputs)[..., prompt_frames:, :]
    return {
        "audio": target[..., AUDIO],
        "context": target[..., CONTEXT],
        "mask": target[..., MASK],
        "x_t": target[..., XT],
        "presence": target[..., PRESENCE],
    }
