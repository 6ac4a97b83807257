"""Tests for model checkpoints."""
import numpy as np
import pytest

from app.a2m.sync import SyncScorer
from app.adapt.hybrid import AdaptConfig, render, sd_hybrid_adapt
from app.adapt.renderer import GenericRenderer
from app.autograd.optim import Adam
from app.models.errors import ArchiveError
from app.services.archive import load_archive
from app.services.checkpoints import (
    load_a2m_checkpoint, load_adaptation, load_renderer, load_sync_scorer, restore_optimizer, save_a2m_checkpoint,
    save_adaptation, save_checkpoint
)


def test_a2m_checkpoint_round_trip(tmp_path, a2m_model):
    optimizer = Adam(a2m_model.trainable_parameters(), lr=1e-3)
    loss = (a2m_model(np.ones((4, 42)), 0.5) ** 2).mean()
    loss.backward()
    optimizer.step()
    path = save_a2m_checkpoint(tmp_path / "a2m.mtlk", a2m_model, seed=3, step=1, optimizer=optimizer)

    model, archive = load_a2m_checkpoint(path)
    assert archive.meta["step"] == 1
    for key, value in a2m_model.state_dict().items():
        np.testing.assert_array_equal(model.state_dict()[key], value)
    restored = restore_optimizer(archive, Adam(model.trainable_parameters(), lr=1e-3))
    assert restored.state.step == optimizer.state.step
    np.testing.assert_array_equal(restored.state.first_moments[0], optimizer.state.first_moments[0])


def test_missing_optimizer_state(tmp_path, a2m_model):
    path = save_a2m_checkpoint(tmp_path / "a2m.mtlk", a2m_model, seed=3, step=0)
    _, archive = load_a2m_checkpoint(path)
    with pytest.raises(ArchiveError):
        restore_optimizer(archive, Adam(a2m_model.trainable_parameters(), lr=1e-3))


def test_kind_is_checked(tmp_path, a2m_model):
    path = save_a2m_checkpoint(tmp_path / "a2m.mtlk", a2m_model, seed=3, step=0)
    with pytest.raises(ArchiveError):
        load_sync_scorer(path)


def test_sync_scorer_reloads_frozen(tmp_path):
    scorer = SyncScorer(np.random.default_rng(5)).freeze()
    loaded = load_sync_scorer(save_checkpoint(tmp_path / "sync.mtlk", "sync", scorer, seed=0))
    assert loaded.frozen
    np.testing.assert_array_equal(loaded.audio_encoder.weight.data, scorer.audio_encoder.weight.data)


def test_config_echo_is_stored(tmp_path):
    renderer = GenericRenderer(np.random.default_rng(0))
    path = save_checkpoint(tmp_path / "r.mtlk", "renderer", renderer, seed=0, config_echo="seed = 0\n")
    assert load_archive(path).meta["config"] == "seed = 0\n"
    assert load_renderer(path).trainable_parameters() == []


def test_adaptation_reload_renders_identically(tmp_path, identity_world):
    renderer = GenericRenderer(np.random.default_rng(0))
    frames, conditions = identity_world.clip(0)
    result = sd_hybrid_adapt(renderer, frames, conditions, AdaptConfig(iters=2, lora_rank=2, record_wall_time=False))
    path = save_adaptation(tmp_path / "adaptation.mtlk", result, seed=0)

    reloaded, grid, archive = load_adaptation(path)
    assert archive.meta["lora_rank"] == 2
    expected = render(result, 0.6)
    np.testing.assert_array_equal(reloaded.decode(grid.values, 0.6).data, expected)
