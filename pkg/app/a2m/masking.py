import math

import numpy as np

from app.models.schemas import MaskSpec

MIN_FRAMES = 8
MIN_FRACTION = 0.3
MAX_FRACTION = 0.7


def sample_mask(frames: int, rng: np.random.Generator) -> MaskSpec:
    """
    Draw 1-3 disjoint masked segments covering 30-70% of a clip

    The masked fraction is drawn uniformly and rounded to whole frames;
    consecutive segments are separated by at least one context frame.

    Raises:
        ValueError: If the clip has fewer than 8 frames
    """
    if frames < MIN_FRAMES:
        raise ValueError(f"masking needs at least {MIN_FRAMES} frames, got {frames}")
    lo, hi = math.ceil(MIN_FRACTION * frames), math.floor(MAX_FRACTION * frames)
    masked = int(np.clip(round(rng.uniform(MIN_FRACTION, MAX_FRACTION) * frames), lo, hi))
    segments_wanted = int(rng.integers(1, 4))
    unmasked = frames - masked
    count = min(segments_wanted, masked, unmasked + 1)

    cuts = np.sort(rng.choice(np.arange(1, masked), size=count - 1, replace=False)) if count > 1 else np.zeros(0, int)
    lengths = np.diff(np.concatenate([[0], cuts, [masked]])).astype(int)

    # count + 1 gaps; inner gaps hold at least one frame
    gaps = np.zeros(count + 1, dtype=int)
    gaps[1:-1] = 1
    gaps += rng.multinomial(unmasked - (count - 1), np.full(count + 1, 1.0 / (count + 1)))

    segments = []
    cursor = 0
    for i, length in enumerate(lengths):
        cursor += int(gaps[i])
        segments.append((cursor, cursor + int(length)))
        cursor += int(length)
    return MaskSpec(length=frames, segments=segments)
