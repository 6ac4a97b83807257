"""
Synthetic identity-image world: 32x32 grayscale faces driven by one motion scalar.

The identity vector fixes the static appearance (background, face ellipse,
texture); a hidden per-identity response fixes how the mouth, jaw and brow
move with the motion scalar m in [0, 1].
"""
from dataclasses import dataclass
from typing import List

import numpy as np

from app.models.errors import ConfigurationError
from app.models.schemas import IDENTITY_DIM, IMAGE_SIZE, SyntheticIdentity
from app.utils.logging import setup_logger

logger = setup_logger("IdentityWorld")

MIN_IDENTITY_L1 = 0.05
EDGE = 0.05

_axis = np.linspace(-1.0, 1.0, IMAGE_SIZE)
_YY, _XX = np.meshgrid(_axis, _axis, indexing="ij")


@dataclass
class IdentityWorld:
    identities: List[SyntheticIdentity]
    frames: np.ndarray
    conditions: np.ndarray

    def clip(self, identity_id: int):
        return self.frames[identity_id], self.conditions[identity_id]

    @property
    def frames_per(self) -> int:
        return self.frames.shape[1]


def _soft_inside(distance: np.ndarray) -> np.ndarray:
    """1 inside (distance < 1), 0 outside, with a sigmoid edge"""
    return 0.5 * (1.0 + np.tanh(0.5 * (1.0 - distance) / EDGE))


def render_identity(identity: SyntheticIdentity, m: float) -> np.ndarray:
    """
    Render one frame of an identity at motion scalar m

    Raises:
        ValueError: If m lies outside [0, 1]
    """
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"motion condition must lie in [0, 1], got {m}")
    v = identity.vector
    background = 0.15 + 0.1 * v[0]
    cx, cy = 0.1 * v[1], 0.1 * v[2]
    rx, ry = 0.6 + 0.15 * v[3], 0.75 + 0.15 * v[4]
    face = _soft_inside(np.sqrt(((_XX - cx) / rx) ** 2 + ((_YY - cy) / ry) ** 2))

    theta = np.pi * v[6]
    texture = 0.08 * np.sin(6.0 * np.pi * (_XX * np.cos(theta) + _YY * np.sin(theta)))
    image = background + face * (0.6 + 0.2 * v[5] + texture - background)

    mouth_y = cy + 0.35 * ry + identity.jaw_drop * m + identity.skew * 0.2 * m * (_XX - cx)
    mouth_w = 0.5 * rx
    mouth_h = 0.02 + identity.open_gain * m
    mouth = _soft_inside(np.sqrt(((_XX - cx) / mouth_w) ** 2 + ((_YY - mouth_y) / mouth_h) ** 2))
    image = image * (1.0 - 0.8 * mouth * face)

    brow_y = cy - 0.35 * ry - 0.2 * m
    brow = _soft_inside(np.sqrt(((_XX - cx) / (0.4 * rx)) ** 2 + ((_YY - brow_y) / 0.12) ** 2))
    image = image * (1.0 - (0.4 + 0.1 * v[7]) * brow * face)
    return np.clip(image, 0.0, 1.0)


def draw_identity(identity_id: int, rng: np.random.Generator) -> SyntheticIdentity:
    direction = rng.standard_normal(IDENTITY_DIM)
    direction /= np.linalg.norm(direction)
    radius = rng.uniform() ** (1.0 / IDENTITY_DIM)
    return SyntheticIdentity(
        identity_id=identity_id,
        vector=direction * radius,
        open_gain=float(rng.uniform(0.2, 0.35)),
        skew=float(rng.uniform(-0.5, 0.5)),
        jaw_drop=float(rng.uniform(0.0, 0.1)),
    )


def gen_identity_world(n_identities: int, frames_per: int, rng: np.random.Generator, max_attempts: int = 10000) -> IdentityWorld:
    """
    Identities with visibly distinct canonical frames, each rendered over a
    seeded permutation of an even sweep of motion scalars in [0, 1]

    Args:
        n_identities: Number of identities, at least 2
        frames_per: Frames per identity
        rng: Generator for appearance, responses and sweep order

    Returns:
        Frames of shape (n, frames_per, 32, 32) and their conditions (n, frames_per)
    """
    if n_identities < 2:
        raise ValueError("an identity world needs at least two identities")
    if frames_per < 1:
        raise ValueError("frames_per must be positive")
    identities: List[SyntheticIdentity] = []
    canonical: List[np.ndarray] = []
    attempts = 0
    while len(identities) < n_identities:
        attempts += 1
        if attempts > max_attempts:
            raise ConfigurationError(f"could not draw {n_identities} distinguishable identities")
        candidate = draw_identity(len(identities), rng)
        frame = render_identity(candidate, 0.0)
        if all(np.mean(np.abs(frame - other)) > MIN_IDENTITY_L1 for other in canonical):
            identities.append(candidate)
            canonical.append(frame)

    sweep = np.linspace(0.0, 1.0, frames_per)
    conditions = np.stack([rng.permutation(sweep) for _ in identities])
    frames = np.stack([
        np.stack([render_identity(identity, float(m)) for m in conditions[i]])
        for i, identity in enumerate(identities)
    ])
    logger.info("Generated identity world", extra={"identities": n_identities, "frames_per": frames_per})
    return IdentityWorld(identities=identities, frames=frames, conditions=conditions)
