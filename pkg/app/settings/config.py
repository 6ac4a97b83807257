import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.a2m.training import A2MTrainConfig
from app.adapt.hybrid import AdaptConfig
from app.models.errors import ConfigurationError
from app.models.schemas import Objective, SolverConfig, SolverMethod
from app.nn.transformer import TransformerConfig

# Load environment variables
load_dotenv()

ENV_PREFIX = "MTLK_"


class DataSettings(BaseModel):
    """Synthetic world sizes"""
    n_speakers: int = Field(32, ge=2)
    clips_per: int = Field(8, ge=1)
    frames: int = Field(256, ge=32)
    n_identities: int = Field(60, ge=2)
    frames_per_identity: int = Field(50, ge=2)


class ModelSettings(BaseModel):
    transformer: TransformerConfig = TransformerConfig()
    lora_rank: int = Field(4, ge=1)
    lora_alpha: Optional[float] = Field(None, gt=0)


class SyncSettings(BaseModel):
    steps: int = Field(1500, ge=0)
    batch: int = Field(64, ge=1)
    lr: float = Field(1e-3, gt=0)


class A2MSettings(BaseModel):
    steps: int = Field(2000, ge=0)
    batch_size: int = Field(8, ge=1)
    window: int = Field(192, ge=16)
    lr: float = Field(1e-3, gt=0)
    lambda_sync: float = Field(0.05, ge=0)
    prompt_dropout: float = Field(0.2, ge=0, le=1)
    prompt_rate: float = Field(0.3, ge=0, le=1)
    objective: Objective = Objective.FLOW
    log_interval: int = Field(10, ge=1)
    resume: bool = False

    @model_validator(mode='after')
    def validate_layout_rates(self) -> 'A2MSettings':
        if self.prompt_dropout + self.prompt_rate > 1.0:
            raise ValueError("prompt_dropout + prompt_rate must not exceed 1")
        return self


class SolverSettings(BaseModel):
    method: SolverMethod = SolverMethod.MIDPOINT
    steps: int = Field(5, ge=1)
    cfg_w: float = 2.0


class AdaptSettings(BaseModel):
    """Generic renderer pretraining and per-identity adaptation"""
    iters: int = Field(2000, ge=0)
    lr: float = Field(1e-3, gt=0)
    lambda_lpips: float = Field(0.2, ge=0)
    lambda_id: float = Field(0.1, ge=0)
    held_out_fraction: float = Field(0.2, gt=0, lt=1)
    log_interval: int = Field(100, ge=1)
    pretrain_steps: int = Field(3000, ge=0)
    pretrain_batch: int = Field(16, ge=1)
    held_out_identities: int = Field(10, ge=1)
    min_pretrain_identities: int = Field(50, ge=1)
    identity: Optional[int] = Field(None, ge=0)


class EvalSettings(BaseModel):
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    style_trials: int = Field(100, ge=1)
    sync_trials: int = Field(500, ge=1)
    prompt_frames: int = Field(64, ge=1)
    drive_frames: int = Field(128, ge=32)
    w_sweep: List[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0, 4.0])
    efficiency: bool = False
    efficiency_iters: List[int] = Field(default_factory=lambda: [250, 500, 1000, 2000])
    efficiency_fractions: List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0])

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("at least one evaluation seed is required")
        return value


class PathSettings(BaseModel):
    out: Path = Path("runs")
    audio: Optional[Path] = None
    prompt: Optional[Path] = None
    baseline: Optional[Path] = None

    @field_validator("audio", "prompt", "baseline")
    @classmethod
    def validate_exists(cls, value: Optional[Path]) -> Optional[Path]:
        if value is not None and not value.exists():
            raise ValueError(f"path does not exist: {value}")
        return value

    @property
    def speakers(self) -> Path:
        return self.out / "data" / "speakers.mtlk"

    @property
    def identities(self) -> Path:
        return self.out / "data" / "identities.mtlk"

    @property
    def manifest(self) -> Path:
        return self.out / "data" / "manifest.json"

    @property
    def sync(self) -> Path:
        return self.out / "sync" / "scorer.mtlk"

    @property
    def a2m(self) -> Path:
        return self.out / "a2m" / "model.mtlk"

    @property
    def renderer(self) -> Path:
        return self.out / "adapt" / "renderer.mtlk"

    @property
    def adaptation(self) -> Path:
        return self.out / "adapt" / "adaptation.mtlk"


class LogSettings(BaseModel):
    level: str = Field("INFO", pattern="^(DEBUG|INFO|WARNING|ERROR|CRITICAL)$")
    record_wall_time: bool = True


class RunConfig(BaseSettings):
    """Settings of one pipeline run"""
    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="forbid",
    )

    seed: int = Field(..., ge=0)
    debug: bool = False
    threads: int = Field(1, ge=1)
    emit_csv: bool = False

    # Sub-configurations
    data: DataSettings = DataSettings()
    model: ModelSettings = ModelSettings()
    sync: SyncSettings = SyncSettings()
    a2m: A2MSettings = A2MSettings()
    solver: SolverSettings = SolverSettings()
    adapt: AdaptSettings = AdaptSettings()
    eval: EvalSettings = EvalSettings()
    paths: PathSettings = PathSettings()
    log: LogSettings = LogSettings()

    @model_validator(mode='after')
    def validate_settings(self) -> 'RunConfig':
        """Validate and transform settings"""
        if self.debug:
            self.log.level = "DEBUG"
        if self.a2m.window > self.data.frames:
            raise ValueError(f"training window {self.a2m.window} exceeds clip length {self.data.frames}")
        generated = self.eval.prompt_frames + self.eval.drive_frames
        if self.a2m.window < generated:
            raise ValueError(
                f"training window {self.a2m.window} is shorter than prompt + drive frames ({generated}) used at generation"
            )
        if generated > self.model.transformer.max_frames:
            raise ValueError(f"prompt + drive frames ({generated}) exceed max_frames {self.model.transformer.max_frames}")
        if self.adapt.held_out_identities >= self.data.n_identities:
            raise ValueError("pretraining needs identities beyond the held-out ones")
        if len(self.pretrain_identities) < self.adapt.min_pretrain_identities:
            raise ValueError(
                f"{len(self.pretrain_identities)} pretraining identities, need {self.adapt.min_pretrain_identities}"
            )
        if self.adapt.identity is not None and self.adapt.identity >= self.data.n_identities:
            raise ValueError(f"identity {self.adapt.identity} outside the identity world")
        return self

    def solver_config(self, method: Optional[SolverMethod] = None, steps: Optional[int] = None) -> SolverConfig:
        return SolverConfig(method=method or self.solver.method, steps=steps or self.solver.steps)

    def a2m_train_config(self) -> A2MTrainConfig:
        a2m = self.a2m
        return A2MTrainConfig(
            steps=a2m.steps,
            batch_size=a2m.batch_size,
            window=a2m.window,
            lr=a2m.lr,
            lambda_sync=a2m.lambda_sync,
            prompt_dropout=a2m.prompt_dropout,
            prompt_rate=a2m.prompt_rate,
            objective=a2m.objective,
            log_interval=a2m.log_interval,
            record_wall_time=self.log.record_wall_time,
        )

    def adapt_config(self) -> AdaptConfig:
        adapt = self.adapt
        return AdaptConfig(
            iters=adapt.iters,
            lr=adapt.lr,
            lora_rank=self.model.lora_rank,
            lora_alpha=self.model.lora_alpha,
            lambda_lpips=adapt.lambda_lpips,
            lambda_id=adapt.lambda_id,
            held_out_fraction=adapt.held_out_fraction,
            log_interval=adapt.log_interval,
            record_wall_time=self.log.record_wall_time,
        )

    @property
    def adapt_identity(self) -> int:
        return self.data.n_identities - 1 if self.adapt.identity is None else self.adapt.identity

    @property
    def pretrain_identities(self) -> List[int]:
        return list(range(self.data.n_identities - self.adapt.held_out_identities))

    @property
    def held_out_identities(self) -> List[int]:
        return list(range(self.data.n_identities - self.adapt.held_out_identities, self.data.n_identities))

    def echo(self) -> str:
        """Canonical JSON rendering stored with every artifact"""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def deep_merge(base: Dict[str, Any], updates: Mapping[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(dict(merged[key]), value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Path) -> Dict[str, Any]:
    """
    Parse a TOML config file

    Raises:
        ConfigurationError: If the file is missing or not valid TOML
    """
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"invalid config file {path}: {e}") from e


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Build the run config: defaults < environment < config file < overrides

    Args:
        path: Optional TOML file
        overrides: Nested values from command-line flags

    Returns:
        Validated configuration

    Raises:
        ConfigurationError: If the file cannot be read
        pydantic.ValidationError: If a value is invalid or the seed is missing
    """
    values = read_config_file(path) if path is not None else {}
    return RunConfig(**deep_merge(values, overrides or {}))
