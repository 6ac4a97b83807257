import os
from pathlib import Path
from typing import Any, Callable, Dict

import numpy as np
import pytest

from app.a2m.training import build_a2m_model
from app.adapt.renderer import GenericRenderer, pretrain_generic
from app.nn.transformer import TransformerConfig, VelocityModel
from app.settings.config import RunConfig, deep_merge
from app.synth.identities import IdentityWorld, gen_identity_world
from app.synth.speakers import SpeakerDataset, gen_speaker_dataset

# Sizes small enough for a full pipeline run inside a unit test
SMALL_RUN: Dict[str, Any] = {
    "data": {"n_speakers": 3, "clips_per": 2, "frames": 48, "n_identities": 4, "frames_per_identity": 10},
    "model": {
        "transformer": {"hidden": 8, "layers": 1, "heads": 2, "head_size": 4, "time_dim": 4, "max_frames": 128},
        "lora_rank": 2,
    },
    "sync": {"steps": 2, "batch": 4},
    "a2m": {"steps": 2, "batch_size": 2, "window": 40, "log_interval": 1},
    "solver": {"steps": 2},
    "adapt": {
        "iters": 2, "log_interval": 1, "pretrain_steps": 1, "pretrain_batch": 2, "held_out_identities": 1,
        "min_pretrain_identities": 1,
    },
    "eval": {
        "seeds": [0], "style_trials": 2, "sync_trials": 8, "prompt_frames": 8, "drive_frames": 32,
        "w_sweep": [0.0, 2.0],
    },
    "log": {"record_wall_time": False},
}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep MTLK_ variables from the developer's shell out of the tests."""
    for key in list(os.environ):
        if key.upper().startswith("MTLK_"):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def tiny_transformer() -> TransformerConfig:
    return TransformerConfig(hidden=8, layers=1, heads=2, head_size=4, time_dim=4, max_frames=128)


@pytest.fixture(scope="session")
def speaker_dataset() -> SpeakerDataset:
    return gen_speaker_dataset(3, 2, 48, np.random.default_rng(1))


@pytest.fixture(scope="session")
def identity_world() -> IdentityWorld:
    return gen_identity_world(4, 10, np.random.default_rng(2))


@pytest.fixture
def make_config(tmp_path: Path) -> Callable[..., RunConfig]:
    """Factory for small run configs writing under tmp_path."""

    def factory(**overrides: Any) -> RunConfig:
        values = deep_merge(SMALL_RUN, {"seed": 7, "paths": {"out": tmp_path / "run"}})
        return RunConfig(**deep_merge(values, overrides))

    return factory


@pytest.fixture
def a2m_model(tiny_transformer) -> VelocityModel:
    return build_a2m_model(tiny_transformer, seed=0)


@pytest.fixture(scope="session")
def adaptation_world() -> IdentityWorld:
    return gen_identity_world(60, 50, np.random.default_rng(3))


@pytest.fixture(scope="session")
def pretrained_renderer(adaptation_world) -> GenericRenderer:
    """Generic renderer pretrained at full scale; only integration runs request it."""
    renderer, _ = pretrain_generic(adaptation_world, steps=3000, seed=0, identities=range(50))
    return renderer.freeze()
