"""End-to-end gradient checks for the networks, run next to the op suite."""
from typing import Dict, List, Tuple

import numpy as np

from app.autograd import functional as F
from app.autograd.gradcheck import END_TO_END_TOLERANCE, CheckBuilder
from app.autograd.tensor import Tensor
from app.nn.layers import Linear, LoRALinear
from app.nn.transformer import TransformerConfig, VelocityModel

TINY_TRANSFORMER = TransformerConfig(
    input_dim=5, output_dim=3, hidden=8, layers=2, heads=2, head_size=4, time_dim=4, max_frames=8
)


def _velocity_model_check(rng: np.random.Generator):
    model = VelocityModel(TINY_TRANSFORMER, rng)
    inputs = rng.standard_normal((2, 4, TINY_TRANSFORMER.input_dim))
    target = rng.standard_normal((2, 4, TINY_TRANSFORMER.output_dim))
    t = np.array([0.25, 0.7])
    return (lambda: F.mse(model(inputs, t), target)), model.parameters()


def _lora_check(rng: np.random.Generator):
    adapter = LoRALinear(Linear(6, 5, rng), rank=2, rng=rng)
    adapter.lora_b.data = rng.standard_normal(adapter.lora_b.shape)
    x = rng.standard_normal((3, 6))
    weights = rng.standard_normal((3, 5))
    params: List[Tensor] = [adapter.lora_a, adapter.lora_b]
    return (lambda: (adapter(x) * weights).sum()), params


NETWORK_CHECKS: Dict[str, Tuple[float, CheckBuilder]] = {
    "velocity_model": (END_TO_END_TOLERANCE, _velocity_model_check),
    "lora_linear": (END_TO_END_TOLERANCE, _lora_check),
}
