import numpy as np

from app.models.errors import DimensionError


def _mean_pairwise_distance(a: np.ndarray, b: np.ndarray, exclude_diagonal: bool = False) -> float:
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    dist = np.sqrt(np.maximum(sq, 0.0))
    if not exclude_diagonal:
        return float(dist.mean())
    n = a.shape[0]
    return float((dist.sum() - np.trace(dist)) / (n * (n - 1)))


def energy_distance(x: np.ndarray, y: np.ndarray) -> float:
    """
    Two-sample energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'|

    Within-sample terms skip the diagonal, so the estimate is unbiased and
    can dip slightly below zero for matching distributions.

    Args:
        x: Samples of shape (n, d)
        y: Samples of shape (m, d)
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise DimensionError(f"energy distance needs (n, d) and (m, d) samples, got {x.shape} and {y.shape}")
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError("energy distance needs at least two samples per set")
    return (
        2.0 * _mean_pairwise_distance(x, y)
        - _mean_pairwise_distance(x, x, exclude_diagonal=True)
        - _mean_pairwise_distance(y, y, exclude_diagonal=True)
    )
