"""Style-prompted and prompt-free motion generation."""
from typing import Optional

import numpy as np

from app.a2m.layout import assemble_input
from app.autograd.tensor import no_grad
from app.flow.cfm import DEFAULT_CFG_W, sample
from app.flow.paths import interpolate
from app.models.errors import DimensionError
from app.models.schemas import D_AUDIO, D_MOTION, Objective, SolverConfig, StylePrompt
from app.nn.transformer import VelocityModel
from app.utils.logging import setup_logger

logger = setup_logger("A2MInference")

DEFAULT_PROMPT_FRAMES = 64


def _check_audio(audio: np.ndarray) -> np.ndarray:
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 2 or audio.shape[1] != D_AUDIO:
        raise DimensionError(f"driving audio must be (frames, {D_AUDIO}), got {audio.shape}")
    return audio


def _unconditional_fn(model: VelocityModel, audio: np.ndarray):
    frames = audio.shape[0]
    context = np.zeros((frames, D_MOTION))
    mask = np.ones(frames)

    def velocity(x: np.ndarray, t: float) -> np.ndarray:
        inputs = assemble_input(audio, context, x, mask, present=False)
        return model(inputs, t).data

    return velocity


def make_prompt(ref_audio: np.ndarray, ref_motion: np.ndarray, prompt_frames: int = DEFAULT_PROMPT_FRAMES) -> StylePrompt:
    """Style prompt from the leading frames of a reference pair"""
    ref_audio, ref_motion = np.asarray(ref_audio, dtype=np.float64), np.asarray(ref_motion, dtype=np.float64)
    if ref_audio.shape[0] != ref_motion.shape[0]:
        raise DimensionError(f"reference audio has {ref_audio.shape[0]} frames but motion has {ref_motion.shape[0]}")
    n = min(prompt_frames, ref_audio.shape[0])
    return StylePrompt(prompt_audio=ref_audio[:n], prompt_motion=ref_motion[:n])


def infer_stylized(
    model: VelocityModel,
    drv_audio: np.ndarray,
    prompt: StylePrompt,
    rng: np.random.Generator,
    w: float = DEFAULT_CFG_W,
    solver: Optional[SolverConfig] = None,
    objective: Objective = Objective.FLOW
) -> np.ndarray:
    """
    Generate motion for `drv_audio` in the talking style of a prompt

    The prompt frames are prepended; their noisy state follows the straight
    path from a fixed noise draw to the clean prompt motion, so they look like
    unmasked context at every flow time. Only the driven frames are returned.

    Args:
        model: Trained velocity model
        drv_audio: (frames, 8) driving audio
        prompt: Reference audio-motion pair
        rng: Noise source
        w: Guidance weight between the prompted and the prompt-free branch
        solver: ODE method and steps
        objective: Deterministic models predict motion in one pass

    Returns:
        (frames, 16) motion
    """
    audio = _check_audio(drv_audio)
    frames, prompt_frames = audio.shape[0], prompt.frames
    context = np.zeros((frames, D_MOTION))
    mask = np.ones(frames)

    if objective == Objective.DETERMINISTIC:
        with no_grad():
            inputs = assemble_input(audio, context, np.zeros((frames, D_MOTION)), mask, style=prompt,
                                    prompt_x_t=np.zeros((prompt_frames, D_MOTION)) if prompt.present else None)
            return model(inputs, 0.0).data[prompt_frames:]

    prompt_x0 = rng.standard_normal((prompt_frames, D_MOTION))

    def conditional(x: np.ndarray, t: float) -> np.ndarray:
        prompt_x_t = interpolate(prompt_x0, prompt.prompt_motion, t) if prompt.present else None
        inputs = assemble_input(audio, context, x, mask, style=prompt, prompt_x_t=prompt_x_t)
        return model(inputs, t).data[prompt_frames:]

    motion = sample(conditional, (frames, D_MOTION), rng, solver, w, _unconditional_fn(model, audio))
    logger.debug("Stylized sample", extra={"frames": frames, "prompt_frames": prompt_frames, "cfg_w": w})
    return motion


def infer_unstylized(
    model: VelocityModel,
    drv_audio: np.ndarray,
    rng: np.random.Generator,
    solver: Optional[SolverConfig] = None,
    objective: Objective = Objective.FLOW
) -> np.ndarray:
    """Motion from audio alone: the prompt-free branch, with a talking style drawn by the noise"""
    audio = _check_audio(drv_audio)
    frames = audio.shape[0]
    uncond = _unconditional_fn(model, audio)
    if objective == Objective.DETERMINISTIC:
        with no_grad():
            return uncond(np.zeros((frames, D_MOTION)), 0.0)
    return sample(uncond, (frames, D_MOTION), rng, solver, 0.0)


def infer_infill(
    model: VelocityModel,
    audio: np.ndarray,
    motion_context: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
    solver: Optional[SolverConfig] = None,
    objective: Objective = Objective.FLOW
) -> np.ndarray:
    """
    Fill the masked frames of a clip given the surrounding motion

    Returns:
        (frames, 16) motion with context frames copied through
    """
    audio = _check_audio(audio)
    context = np.asarray(motion_context, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if context.shape != (audio.shape[0], D_MOTION) or mask.shape != (audio.shape[0],):
        raise DimensionError("context motion and mask must align with the audio frames")

    def conditional(x: np.ndarray, t: float) -> np.ndarray:
        return model(assemble_input(audio, context, x, mask), t).data

    if objective == Objective.DETERMINISTIC:
        with no_grad():
            generated = conditional(np.zeros_like(context), 0.0)
    else:
        generated = sample(conditional, context.shape, rng, solver, 0.0)
    return np.where(mask[:, None] > 0, generated, context)
