from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.autograd import functional as F
from app.autograd.tensor import ArrayLike, Tensor, as_tensor, parameter
from app.models.errors import DimensionError
from app.nn.layers import LayerNorm, Linear, MLP
from app.nn.module import Module

TIME_SCALE = 1000.0
MAX_PERIOD = 10000.0


class TransformerConfig(BaseModel):
    """Shape of the velocity transformer"""
    model_config = ConfigDict(extra="forbid")

    input_dim: int = Field(42, gt=0)
    output_dim: int = Field(16, gt=0)
    hidden: int = Field(64, gt=0)
    layers: int = Field(4, gt=0)
    heads: int = Field(4, gt=0)
    head_size: int = Field(16, gt=0)
    mlp_layers: int = Field(2, ge=1)
    mlp_ratio: int = Field(4, ge=1)
    norm: str = Field("layernorm", pattern="^layernorm$")
    time_dim: int = Field(32, ge=2)
    max_frames: int = Field(512, gt=0)
    use_positional: bool = True

    @model_validator(mode='after')
    def validate_heads(self) -> 'TransformerConfig':
        if self.hidden != self.heads * self.head_size:
            raise ValueError(f"hidden size {self.hidden} != heads {self.heads} x head size {self.head_size}")
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")
        return self


def time_embed(t: Union[float, np.ndarray], dim: int) -> np.ndarray:
    """
    Sinusoidal embedding of flow time

    Args:
        t: Scalar or 1-D array of times in [0, 1]
        dim: Even embedding width; the first half holds sines, the second cosines

    Returns:
        Array of shape (dim,) for scalar t, else (len(t), dim)

    Raises:
        ValueError: If any t lies outside [0, 1]
    """
    if dim < 2 or dim % 2:
        raise ValueError(f"time embedding width must be even and >= 2, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0) or not np.all(np.isfinite(t_arr)):
        raise ValueError(f"flow time must lie in [0, 1], got {t}")
    half = dim // 2
    freqs = np.exp(-np.log(MAX_PERIOD) * np.arange(half) / half)
    args = TIME_SCALE * t_arr[..., None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


class SelfAttention(Module):
    """Bidirectional multi-head self-attention over (batch, frames, hidden)"""

    def __init__(self, config: TransformerConfig, rng: np.random.Generator):
        self.heads = config.heads
        self.head_size = config.head_size
        self.query = Linear(config.hidden, config.hidden, rng)
        self.key = Linear(config.hidden, config.hidden, rng)
        self.value = Linear(config.hidden, config.hidden, rng)
        self.proj = Linear(config.hidden, config.hidden, rng)

    def _split(self, x: Tensor) -> Tensor:
        batch, frames, _ = x.shape
        return x.reshape(batch, frames, self.heads, self.head_size).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> Tensor:
        batch, frames, hidden = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.head_size))
        weights = F.softmax(scores, axis=-1)
        out = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, frames, hidden)
        return self.proj(out)


class Block(Module):
    """Pre-norm attention block followed by a GELU MLP"""

    def __init__(self, config: TransformerConfig, rng: np.random.Generator):
        inner = config.hidden * config.mlp_ratio
        sizes = [config.hidden] + [inner] * (config.mlp_layers - 1) + [config.hidden]
        self.norm1 = LayerNorm(config.hidden)
        self.attn = SelfAttention(config, rng)
        self.norm2 = LayerNorm(config.hidden)
        self.mlp = MLP(sizes, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class VelocityModel(Module):
    """
    Transformer mapping per-frame conditioning channels and flow time to a
    per-frame velocity.

    Time enters as a projected sinusoidal embedding added to every frame;
    positions enter as a learned per-frame table.
    """

    def __init__(self, config: TransformerConfig, rng: np.random.Generator):
        self.config = config
        self.input_proj = Linear(config.input_dim, config.hidden, rng)
        self.time_proj = Linear(config.time_dim, config.hidden, rng)
        self.positional = parameter(rng.normal(0.0, 0.02, (config.max_frames, config.hidden))) if config.use_positional else None
        self.blocks = [Block(config, rng) for _ in range(config.layers)]
        self.final_norm = LayerNorm(config.hidden)
        self.output_proj = Linear(config.hidden, config.output_dim, rng)

    def encode(self, inputs: ArrayLike, t: Union[float, np.ndarray]) -> Tensor:
        """
        Run the transformer stack

        Args:
            inputs: (batch, frames, input_dim) or (frames, input_dim)
            t: Scalar time or one time per batch entry

        Returns:
            Hidden states with the same leading shape as `inputs`
        """
        x = as_tensor(inputs)
        squeeze = x.ndim == 2
        if squeeze:
            x = x.reshape(1, *x.shape)
        if x.ndim != 3 or x.shape[-1] != self.config.input_dim:
            raise DimensionError(f"velocity model expects (..., frames, {self.config.input_dim}), got {x.shape}")
        batch, frames, _ = x.shape
        if frames > self.config.max_frames:
            raise DimensionError(f"{frames} frames exceed the positional table ({self.config.max_frames})")

        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
        temb = self.time_proj(time_embed(t_arr, self.config.time_dim)).reshape(batch, 1, self.config.hidden)
        h = self.input_proj(x) + temb
        if self.positional is not None:
            h = h + self.positional[:frames]
        for block in self.blocks:
            h = block(h)
        h = self.final_norm(h)
        return h.reshape(frames, self.config.hidden) if squeeze else h

    def forward(self, inputs: ArrayLike, t: Union[float, np.ndarray]) -> Tensor:
        h = self.encode(inputs, t)
        return self.output_proj(h)


def transformer_forward(model: VelocityModel, seq: ArrayLike, t: Optional[Union[float, np.ndarray]] = 0.0) -> Tensor:
    """Hidden states (frames x hidden) of one sequence"""
    return model.encode(seq, 0.0 if t is None else t)
