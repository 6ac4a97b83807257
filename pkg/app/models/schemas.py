from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

D_AUDIO = 8
D_MOTION = 16
LIP_DIMS = 4
IMAGE_SIZE = 32
IDENTITY_DIM = 8


class SolverMethod(str, Enum):
    EULER = "euler"
    MIDPOINT = "midpoint"


class Objective(str, Enum):
    FLOW = "flow"
    DETERMINISTIC = "deterministic"


class BaseSchema(BaseModel):
    model_config = ConfigDict(from_attributes=True)


class ArraySchema(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


class SolverConfig(BaseSchema):
    method: SolverMethod = SolverMethod.MIDPOINT
    steps: int = Field(5, ge=1)


class MaskSpec(BaseSchema):
    """Disjoint [start, end) frame ranges hidden from the motion context"""
    length: int = Field(..., ge=8)
    segments: List[Tuple[int, int]]

    @model_validator(mode='after')
    def validate_segments(self) -> 'MaskSpec':
        if not 1 <= len(self.segments) <= 3:
            raise ValueError(f"a mask has 1-3 segments, got {len(self.segments)}")
        previous_end = 0
        for start, end in self.segments:
            if start < previous_end or end <= start or end > self.length:
                raise ValueError(f"segments must be sorted, disjoint and inside [0, {self.length}): {self.segments}")
            previous_end = end
        if not 0.3 <= self.fraction <= 0.7:
            raise ValueError(f"masked fraction {self.fraction:.3f} outside [0.3, 0.7]")
        return self

    @property
    def masked_frames(self) -> int:
        return sum(end - start for start, end in self.segments)

    @property
    def fraction(self) -> float:
        return self.masked_frames / self.length

    def to_array(self) -> np.ndarray:
        """Per-frame flag: 1 for masked frames, 0 for context frames"""
        mask = np.zeros(self.length)
        for start, end in self.segments:
            mask[start:end] = 1.0
        return mask


class StylePrompt(ArraySchema):
    """Reference audio-motion pair; an absent prompt contributes no frames"""
    prompt_audio: np.ndarray
    prompt_motion: np.ndarray
    present: bool = True

    @model_validator(mode='after')
    def validate_alignment(self) -> 'StylePrompt':
        audio, motion = self.prompt_audio, self.prompt_motion
        if audio.ndim != 2 or audio.shape[1] != D_AUDIO:
            raise ValueError(f"prompt audio must be (frames, {D_AUDIO}), got {audio.shape}")
        if motion.ndim != 2 or motion.shape[1] != D_MOTION:
            raise ValueError(f"prompt motion must be (frames, {D_MOTION}), got {motion.shape}")
        if audio.shape[0] != motion.shape[0]:
            raise ValueError(f"prompt audio has {audio.shape[0]} frames but motion has {motion.shape[0]}")
        return self

    @property
    def frames(self) -> int:
        return self.prompt_audio.shape[0] if self.present else 0

    @classmethod
    def absent(cls) -> "StylePrompt":
        return cls(prompt_audio=np.zeros((0, D_AUDIO)), prompt_motion=np.zeros((0, D_MOTION)), present=False)


class SyntheticSpeaker(ArraySchema):
    """Style parameters of the ground-truth audio-to-motion law"""
    speaker_id: int
    gain: np.ndarray
    offset: np.ndarray
    tau: int = Field(..., ge=1, le=8)
    articulation: np.ndarray

    @field_validator("gain")
    @classmethod
    def validate_gain(cls, value: np.ndarray) -> np.ndarray:
        if value.shape != (D_MOTION,) or np.any(value < 0.5) or np.any(value > 2.0):
            raise ValueError("gains must be 16 values in [0.5, 2]")
        return value

    @field_validator("offset")
    @classmethod
    def validate_offset(cls, value: np.ndarray) -> np.ndarray:
        if value.shape != (D_MOTION,) or np.any(np.abs(value) > 0.5):
            raise ValueError("offsets must be 16 values in [-0.5, 0.5]")
        return value

    @field_validator("articulation")
    @classmethod
    def validate_articulation(cls, value: np.ndarray) -> np.ndarray:
        if value.shape != (D_MOTION, D_AUDIO):
            raise ValueError(f"articulation map must be {D_MOTION}x{D_AUDIO}")
        return value


class StyleEstimate(ArraySchema):
    gain: np.ndarray
    offset: np.ndarray
    tau: int
    residual: float
    flagged: np.ndarray

    @property
    def any_flagged(self) -> bool:
        return bool(np.any(self.flagged))


class SyntheticIdentity(ArraySchema):
    """Appearance vector plus the hidden way its face reacts to motion"""
    identity_id: int
    vector: np.ndarray
    open_gain: float = Field(..., gt=0)
    skew: float
    jaw_drop: float = Field(..., ge=0)

    @field_validator("vector")
    @classmethod
    def validate_vector(cls, value: np.ndarray) -> np.ndarray:
        if value.shape != (IDENTITY_DIM,) or np.linalg.norm(value) > 1.0 + 1e-12:
            raise ValueError("identity vectors are 8 values inside the unit ball")
        return value


class Manifest(BaseSchema):
    """Index of a generated dataset directory"""
    seed: int
    n_speakers: int
    clips_per: int
    frames: int
    n_identities: int
    frames_per_identity: int
    clips: List[Dict[str, Any]] = Field(default_factory=list)
    files: Dict[str, str] = Field(default_factory=dict)


class SampleSummary(BaseSchema):
    mode: str
    frames: int
    seed: int
    cfg_w: float
    solver: SolverConfig
    prompt_frames: Optional[int] = None
