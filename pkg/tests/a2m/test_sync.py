"""Tests for the audio-lip sync scorer."""
import numpy as np
import pytest

from app.a2m.sync import SyncScorer, ranking_accuracy, train_sync_scorer, window_starts
from app.models.errors import DimensionError
from app.synth.speakers import gen_speaker_dataset


def _pairs(dataset, held_out=False):
    clips = dataset.held_out_clips() if held_out else dataset.train_clips()
    return [(c.audio, c.motion) for c in clips]


def test_untrained_scorer_cannot_rank(speaker_dataset):
    scorer = SyncScorer(np.random.default_rng(0))
    assert ranking_accuracy(scorer, _pairs(speaker_dataset), np.random.default_rng(1), trials=50) == 0.5


def test_window_starts():
    np.testing.assert_array_equal(window_starts(48), [0, 8, 16, 24, 32])
    with pytest.raises(DimensionError):
        window_starts(15)


def test_score_sequence_shapes(speaker_dataset, rng):
    scorer = SyncScorer(rng)
    clip = speaker_dataset.clips[0]
    assert scorer.score_sequence(clip.audio, clip.motion).shape == (5,)
    batched = scorer.score_sequence(np.stack([clip.audio] * 2), np.stack([clip.motion] * 2))
    assert batched.shape == (2, 5)


def test_training_freezes_the_scorer(speaker_dataset):
    scorer, monitor = train_sync_scorer(_pairs(speaker_dataset), steps=2, seed=0, batch=4)
    assert scorer.frozen
    assert scorer.trainable_parameters() == []
    assert len(monitor.metrics["contrastive"].values) == 2


def test_training_is_deterministic(speaker_dataset):
    first, _ = train_sync_scorer(_pairs(speaker_dataset), steps=2, seed=4, batch=4)
    second, _ = train_sync_scorer(_pairs(speaker_dataset), steps=2, seed=4, batch=4)
    for key, value in first.state_dict().items():
        np.testing.assert_array_equal(value, second.state_dict()[key])


def test_short_clips_are_rejected(rng):
    with pytest.raises(ValueError):
        train_sync_scorer([(np.zeros((20, 8)), np.zeros((20, 16)))], steps=1, seed=0)


@pytest.mark.integration
def test_trained_scorer_ranks_held_out_pairs():
    dataset = gen_speaker_dataset(8, 8, 256, np.random.default_rng(0))
    scorer, _ = train_sync_scorer(_pairs(dataset), steps=400, seed=0)
    assert ranking_accuracy(scorer, _pairs(dataset, held_out=True), np.random.default_rng(1)) > 0.9
