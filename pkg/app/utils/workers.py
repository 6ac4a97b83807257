"""Fan-out of independent jobs across a bounded thread pool."""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

from app.utils.logging import setup_logger

logger = setup_logger("Workers")

J = TypeVar("J")
R = TypeVar("R")


def fan_out(fn: Callable[[J], R], jobs: Sequence[J], workers: int = 1) -> List[R]:
    """
    Run `fn` over every job and return results in submission order

    Args:
        fn: Job function; must not share mutable state with other jobs
        jobs: Job descriptions
        workers: Maximum concurrent jobs; 1 runs serially in the calling thread

    Returns:
        One result per job, in the order of `jobs`
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]

    logger.debug(f"Fanning out {len(jobs)} jobs over {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def step_rng(seed: int, step: int, stream: int = 0) -> np.random.Generator:
    """Generator for one training step; resuming at `step` replays the same draws"""
    return np.random.default_rng([seed, stream, step])
