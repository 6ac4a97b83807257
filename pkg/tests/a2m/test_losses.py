"""Tests for the masked flow matching and sync losses."""
import numpy as np
import pytest

from app.a2m.losses import A2MBatch, estimate_x1, icsa2m_loss, make_batch
from app.a2m.sync import SyncScorer
from app.autograd.tensor import Tensor
from app.flow.paths import interpolate
from app.models.errors import DimensionError, StageError
from app.models.schemas import Objective


@pytest.fixture
def batch(speaker_dataset, rng) -> A2MBatch:
    return make_batch(speaker_dataset.train_clips(), rng, batch_size=3, window=32)


@pytest.fixture
def frozen_scorer() -> SyncScorer:
    return SyncScorer(np.random.default_rng(3)).freeze()


def _oracle(batch: A2MBatch, unmasked_error: float = 0.0):
    """Velocity model that returns the exact path velocity on masked frames"""
    velocity = batch.motion - batch.x0 + unmasked_error * (1.0 - batch.mask[..., None])
    return lambda inputs, t: Tensor(velocity)


def test_estimate_x1_recovers_clean_sample(rng):
    x0, x1 = rng.standard_normal((4, 6, 2)), rng.standard_normal((4, 6, 2))
    t = np.array([0.0, 0.25, 0.5, 0.9])
    np.testing.assert_allclose(estimate_x1(interpolate(x0, x1, t), t, x1 - x0), x1, atol=1e-12)


def test_estimate_x1_needs_t_below_one(rng):
    with pytest.raises(ValueError):
        estimate_x1(np.zeros(3), 1.0, np.zeros(3))


def test_batch_layout(batch):
    assert batch.motion.shape == (3, 32, 16)
    assert batch.audio.shape == (3, 32, 8)
    assert np.all(batch.t < 1.0)
    dropped = batch.present == 0.0
    assert np.all(batch.mask[dropped] == 1.0)


def _speaker_of(clips, motion: np.ndarray) -> int:
    for clip in clips:
        for start in range(clip.motion.shape[0] - motion.shape[0] + 1):
            if np.array_equal(clip.motion[start:start + motion.shape[0]], motion):
                return clip.speaker_id
    raise AssertionError("block not found in any clip")


def test_prompted_batch_mirrors_stylized_generation(speaker_dataset, rng):
    clips = speaker_dataset.train_clips()
    batch = make_batch(clips, rng, batch_size=6, window=40, prompt_dropout=0.0, prompt_rate=1.0)
    assert np.all(batch.present == 1.0)
    for mask, motion in zip(batch.mask, batch.motion):
        prompt_len = int(np.argmax(mask))
        assert 10 <= prompt_len <= 20
        assert np.all(mask[:prompt_len] == 0.0)
        assert np.all(mask[prompt_len:] == 1.0)
        assert _speaker_of(clips, motion[:prompt_len]) == _speaker_of(clips, motion[prompt_len:])


def test_layout_rates_cannot_exceed_one(speaker_dataset, rng):
    with pytest.raises(ValueError, match="exceeds 1"):
        make_batch(speaker_dataset.train_clips(), rng, batch_size=2, window=32, prompt_dropout=0.8, prompt_rate=0.3)


def test_batch_rejects_short_clips(speaker_dataset, rng):
    with pytest.raises(DimensionError):
        make_batch(speaker_dataset.train_clips(), rng, batch_size=2, window=64)


def test_oracle_has_zero_flow_loss(batch):
    total, cfm_part, sync_part = icsa2m_loss(_oracle(batch), batch, scorer=None, lambda_sync=0.0)
    assert cfm_part.item() == pytest.approx(0.0, abs=1e-20)
    assert sync_part.item() == 0.0
    assert total is cfm_part


def test_loss_only_counts_masked_frames(batch):
    _, cfm_part, _ = icsa2m_loss(_oracle(batch, unmasked_error=10.0), batch, scorer=None, lambda_sync=0.0)
    assert cfm_part.item() == pytest.approx(0.0, abs=1e-20)


def test_zero_lambda_total_equals_flow_loss(a2m_model, batch, frozen_scorer):
    total, cfm_part, _ = icsa2m_loss(a2m_model, batch, frozen_scorer, lambda_sync=0.0)
    assert total.item() == cfm_part.item()


def test_sync_term_needs_a_scorer(a2m_model, batch):
    with pytest.raises(StageError):
        icsa2m_loss(a2m_model, batch, scorer=None, lambda_sync=0.1)


def test_scorer_must_be_frozen(a2m_model, batch):
    with pytest.raises(ValueError):
        icsa2m_loss(a2m_model, batch, SyncScorer(np.random.default_rng(3)), lambda_sync=0.1)


def test_sync_gradient_reaches_the_model(a2m_model, batch):
    scorer = SyncScorer(np.random.default_rng(3))
    scorer.head.data = np.ones_like(scorer.head.data)
    scorer.freeze()
    total, _, sync_part = icsa2m_loss(a2m_model, batch, scorer, lambda_sync=1.0)
    assert sync_part.item() != 0.0
    total.backward()
    assert any(p.grad is not None and np.any(p.grad != 0) for p in a2m_model.trainable_parameters())
    assert all(p.grad is None for p in scorer.parameters())


def test_deterministic_objective(a2m_model, batch):
    total, cfm_part, _ = icsa2m_loss(a2m_model, batch, None, lambda_sync=0.0, objective=Objective.DETERMINISTIC)
    assert np.isfinite(total.item())
    assert cfm_part.item() > 0.0
