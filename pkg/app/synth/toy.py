"""Two-component Gaussian mixture in the plane, the oracle for toy flow training."""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GaussianMixture2D:
    means: np.ndarray = field(default_factory=lambda: np.array([[-2.0, 0.0], [2.0, 0.0]]))
    std: float = 0.5
    weights: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        components = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[components] + self.std * rng.standard_normal((n, 2))
