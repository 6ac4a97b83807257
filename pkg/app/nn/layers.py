from typing import List, Optional, Sequence

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import ArrayLike, Tensor, as_tensor, parameter
from app.models.errors import ConfigurationError, DimensionError
from app.nn.module import Module
from app.utils.logging import setup_logger

logger = setup_logger("Layers")

LORA_INIT_STD = 0.02


class Linear(Module):
    """Affine map y = x W^T + b with weight of shape (out, in)"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        if in_features < 1 or out_features < 1:
            raise ConfigurationError(f"invalid linear shape {in_features}->{out_features}")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = parameter(rng.normal(0.0, 1.0 / np.sqrt(in_features), (out_features, in_features)))
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: ArrayLike) -> Tensor:
        x = as_tensor(x)
        if x.shape[-1] != self.in_features:
            raise DimensionError(f"linear expects width {self.in_features}, got {x.shape[-1]}")
        y = x @ self.weight.T
        return y + self.bias if self.bias is not None else y

    @property
    def trainable(self) -> bool:
        return self.weight.requires_grad


class LayerNorm(Module):
    def __init__(self, features: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(features))
        self.bias = parameter(np.zeros(features))
        self.eps = eps

    def forward(self, x: ArrayLike) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class MLP(Module):
    """Stack of Linear layers with GELU between them"""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ConfigurationError("an MLP needs at least an input and an output size")
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def forward(self, x: ArrayLike) -> Tensor:
        h = as_tensor(x)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = F.gelu(h)
        return h


class LoRALinear(Module):
    """
    Frozen Linear layer plus a trainable low-rank delta

    y = base(x) + (alpha / rank) * (x A^T) B^T, with A of shape (rank, in)
    drawn from N(0, 0.02^2) and B of shape (out, rank) starting at zero.
    """

    def __init__(self, base: Linear, rank: int, rng: np.random.Generator, alpha: Optional[float] = None):
        limit = min(base.in_features, base.out_features)
        if rank < 1 or rank > limit:
            raise ConfigurationError(f"LoRA rank {rank} must be in [1, {limit}] for a {base.in_features}->{base.out_features} layer")
        self.base = base.freeze()
        self.rank = rank
        self.alpha = float(rank if alpha is None else alpha)
        self.lora_a = parameter(rng.normal(0.0, LORA_INIT_STD, (rank, base.in_features)))
        self.lora_b = parameter(np.zeros((base.out_features, rank)))

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    @property
    def in_features(self) -> int:
        return self.base.in_features

    @property
    def out_features(self) -> int:
        return self.base.out_features

    def delta_weight(self) -> np.ndarray:
        return self.scale * (self.lora_b.data @ self.lora_a.data)

    def forward(self, x: ArrayLike) -> Tensor:
        x = as_tensor(x)
        delta = (x @ self.lora_a.T) @ self.lora_b.T
        return self.base(x) + delta * self.scale


def lora_forward(x: ArrayLike, adapter: LoRALinear) -> Tensor:
    return adapter(x)


def merge_lora(adapter: LoRALinear) -> Linear:
    """
    Fold an adapter into a dense layer

    The merged weight is W + (alpha / rank) B A; the merged layer keeps the
    base layer's trainable flag.
    """
    base = adapter.base
    merged = Linear.__new__(Linear)
    merged.in_features = base.in_features
    merged.out_features = base.out_features
    merged.weight = Tensor(base.weight.data + adapter.delta_weight(), requires_grad=base.trainable)
    merged.bias = Tensor(base.bias.data, requires_grad=base.trainable) if base.bias is not None else None
    return merged


def inject_lora(module: Module, rank: int, rng: np.random.Generator, alpha: Optional[float] = None) -> List[LoRALinear]:
    """
    Freeze a module and wrap every Linear it contains in a LoRA adapter

    Args:
        module: Module to adapt in place
        rank: Adapter rank
        rng: Source for the A matrices
        alpha: Scale numerator; defaults to rank

    Returns:
        The adapters, in parameter-walk order
    """
    module.freeze()
    adapters: List[LoRALinear] = []
    _inject(module, rank, rng, alpha, adapters)
    logger.debug(f"Injected {len(adapters)} LoRA adapters", extra={"rank": rank})
    return adapters


def _inject(module: Module, rank: int, rng: np.random.Generator, alpha: Optional[float], out: List[LoRALinear]) -> None:
    for name, value in list(vars(module).items()):
        if isinstance(value, LoRALinear):
            out.append(value)
        elif isinstance(value, Linear):
            adapter = LoRALinear(value, rank, rng, alpha)
            setattr(module, name, adapter)
            out.append(adapter)
        elif isinstance(value, Module):
            _inject(value, rank, rng, alpha, out)
        elif isinstance(value, list):
            for i, item in enumerate(value):
                if isinstance(item, LoRALinear):
                    out.append(item)
                elif isinstance(item, Linear):
                    value[i] = LoRALinear(item, rank, rng, alpha)
                    out.append(value[i])
                elif isinstance(item, Module):
                    _inject(item, rank, rng, alpha, out)


def lora_parameters(adapters: Sequence[LoRALinear]) -> List[Tensor]:
    params: List[Tensor] = []
    for adapter in adapters:
        params.extend([adapter.lora_a, adapter.lora_b])
    return params
