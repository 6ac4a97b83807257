"""Tests for stylized, prompt-free and infilling generation."""
import numpy as np
import pytest

from app.a2m.evaluation import articulation_correlation, masked_reconstruction_mse, style_recovery
from app.a2m.inference import infer_infill, infer_stylized, infer_unstylized, make_prompt
from app.a2m.masking import sample_mask
from app.a2m.training import A2MTrainConfig, build_a2m_model, train_icsa2m
from app.models.errors import DimensionError
from app.models.schemas import Objective, SolverConfig
from app.nn.transformer import TransformerConfig
from app.synth.speakers import gen_audio, gen_speaker_dataset, recover_style

SOLVER = SolverConfig(steps=2)


@pytest.fixture
def prompt(speaker_dataset):
    clip = speaker_dataset.clips[0]
    return make_prompt(clip.audio, clip.motion, prompt_frames=8)


def test_make_prompt_takes_leading_frames(speaker_dataset):
    clip = speaker_dataset.clips[0]
    prompt = make_prompt(clip.audio, clip.motion, prompt_frames=8)
    assert prompt.frames == 8
    np.testing.assert_array_equal(prompt.prompt_motion, clip.motion[:8])
    assert make_prompt(clip.audio, clip.motion, prompt_frames=500).frames == 48


def test_stylized_output_covers_only_driven_frames(a2m_model, prompt, rng):
    motion = infer_stylized(a2m_model, gen_audio(20, rng), prompt, rng, solver=SOLVER)
    assert motion.shape == (20, 16)
    assert np.all(np.isfinite(motion))


def test_stylized_is_seed_deterministic(a2m_model, prompt):
    audio = gen_audio(20, np.random.default_rng(0))
    first = infer_stylized(a2m_model, audio, prompt, np.random.default_rng(1), solver=SOLVER)
    same = infer_stylized(a2m_model, audio, prompt, np.random.default_rng(1), solver=SOLVER)
    other = infer_stylized(a2m_model, audio, prompt, np.random.default_rng(2), solver=SOLVER)
    np.testing.assert_array_equal(first, same)
    assert not np.array_equal(first, other)


def test_unstylized_shape(a2m_model, rng):
    assert infer_unstylized(a2m_model, gen_audio(20, rng), rng, solver=SOLVER).shape == (20, 16)


def test_deterministic_objective_ignores_noise(a2m_model, prompt):
    audio = gen_audio(20, np.random.default_rng(0))
    first = infer_stylized(a2m_model, audio, prompt, np.random.default_rng(1), objective=Objective.DETERMINISTIC)
    second = infer_stylized(a2m_model, audio, prompt, np.random.default_rng(2), objective=Objective.DETERMINISTIC)
    np.testing.assert_array_equal(first, second)


def test_infill_copies_context(a2m_model, speaker_dataset, rng):
    clip = speaker_dataset.clips[0]
    audio, motion = clip.audio[:32], clip.motion[:32]
    mask = sample_mask(32, rng).to_array()
    filled = infer_infill(a2m_model, audio, motion, mask, rng, solver=SOLVER)
    np.testing.assert_array_equal(filled[mask == 0], motion[mask == 0])


def test_infill_rejects_misaligned_mask(a2m_model, speaker_dataset, rng):
    clip = speaker_dataset.clips[0]
    with pytest.raises(DimensionError):
        infer_infill(a2m_model, clip.audio[:32], clip.motion[:32], np.ones(30), rng)


def test_audio_width_is_checked(a2m_model, prompt, rng):
    with pytest.raises(DimensionError):
        infer_stylized(a2m_model, np.zeros((20, 3)), prompt, rng)


def test_articulation_correlation_of_ground_truth(speaker_dataset):
    clip = speaker_dataset.clips[0]
    assert articulation_correlation(clip.audio, clip.motion, speaker_dataset.articulation) == pytest.approx(1.0)


def test_evaluation_helpers_run(a2m_model, speaker_dataset):
    result = style_recovery(a2m_model, speaker_dataset, seed=0, trials=2, solver=SOLVER, prompt_frames=8, drive_frames=32)
    assert set(result) == {"accuracy", "mean_error"}
    assert 0.0 <= result["accuracy"] <= 1.0
    mse = masked_reconstruction_mse(a2m_model, speaker_dataset.held_out_clips(), seed=0, window=32, solver=SOLVER)
    assert mse > 0.0


@pytest.fixture(scope="module")
def trained_speakers():
    """Speaker world at full scale with a model trained on it; only integration runs request it."""
    dataset = gen_speaker_dataset(32, 8, 256, np.random.default_rng(0))
    model = build_a2m_model(TransformerConfig(), seed=0)
    config = A2MTrainConfig(steps=2000, lambda_sync=0.0, record_wall_time=False)
    train_icsa2m(model, dataset.train_clips(), config, seed=0)
    return dataset, model


@pytest.mark.integration
def test_trained_model_follows_the_prompt_style(trained_speakers):
    dataset, model = trained_speakers
    result = style_recovery(model, dataset, seed=1, trials=100, w=2.0)
    assert result["accuracy"] >= 0.9


@pytest.mark.integration
def test_guidance_does_not_worsen_style_recovery(trained_speakers):
    dataset, model = trained_speakers
    guided = style_recovery(model, dataset, seed=2, trials=100, w=2.0)
    unguided = style_recovery(model, dataset, seed=2, trials=100, w=0.0)
    assert guided["mean_error"] <= unguided["mean_error"]


@pytest.mark.integration
def test_unstylized_motion_follows_the_audio(trained_speakers):
    dataset, model = trained_speakers
    correlations = []
    for i in range(10):
        audio = gen_audio(128, np.random.default_rng([3, i]))
        motion = infer_unstylized(model, audio, np.random.default_rng([4, i]))
        correlations.append(articulation_correlation(audio, motion, dataset.articulation))
    assert np.mean(correlations) > 0.5


@pytest.mark.integration
def test_unstylized_style_varies_with_the_seed(trained_speakers):
    dataset, model = trained_speakers
    audio = gen_audio(128, np.random.default_rng(5))
    first = infer_unstylized(model, audio, np.random.default_rng(6))
    second = infer_unstylized(model, audio, np.random.default_rng(7))
    assert not np.allclose(first, second)
    gains = [recover_style(audio, m, dataset.articulation).gain for m in (first, second)]
    assert np.linalg.norm(gains[0] - gains[1]) > 0.0
