"""Tests for static-dynamic hybrid adaptation."""
import numpy as np
import pytest

from app.adapt.hybrid import (
    INVERSION, LORA, AdaptConfig, FeatureGrid, evaluate_frames, id_hook, init_inversion, lpips_hook, psnr, render,
    frame_order, render_batch, sd_hybrid_adapt, split_frames
)
from app.adapt.renderer import GenericRenderer
from app.autograd import functional as F
from app.autograd.tensor import Tensor
from app.models.errors import ConfigurationError, DimensionError


@pytest.fixture(scope="module")
def renderer() -> GenericRenderer:
    return GenericRenderer(np.random.default_rng(0))


@pytest.fixture
def clip(identity_world):
    return identity_world.clip(1)


@pytest.fixture
def config() -> AdaptConfig:
    return AdaptConfig(iters=2, lora_rank=2, log_interval=1, record_wall_time=False)


def test_split_frames():
    train, held = split_frames(10, 0.2)
    np.testing.assert_array_equal(train, np.arange(8))
    np.testing.assert_array_equal(held, [8, 9])
    assert split_frames(1)[1].size == 0


def test_init_inversion_matches_encoder(renderer, clip):
    frames, _ = clip
    grid = init_inversion(renderer, frames[0])
    np.testing.assert_array_equal(grid.values.data, renderer.encode(frames[0]).data[0])
    assert grid.trainable


def test_init_inversion_rejects_wrong_shape(renderer):
    with pytest.raises(DimensionError):
        init_inversion(renderer, np.zeros((16, 16)))


def test_feature_grid_shape():
    with pytest.raises(DimensionError):
        FeatureGrid(np.zeros((4, 4, 8)))


def test_zero_iterations_match_generic_renderer(renderer, clip):
    frames, _ = clip
    result = sd_hybrid_adapt(renderer, frames, clip[1], AdaptConfig(iters=0, lora_rank=2))
    expected = renderer.decode(renderer.encode(frames[0]).data[0], 0.3).data
    np.testing.assert_array_equal(render(result, 0.3), expected)


def test_base_weights_stay_bit_identical(renderer, clip, config):
    before = renderer.state_dict()
    result = sd_hybrid_adapt(renderer, *clip, config=config, seed=1)
    for key, value in before.items():
        np.testing.assert_array_equal(renderer.state_dict()[key], value)
    adapted = result.renderer.state_dict()
    for key in ("encoder.inner.weight", "decoder.grid_proj.base.weight", "decoder.out.base.weight"):
        np.testing.assert_array_equal(adapted[key], before[key.replace("base.", "")])


def test_adaptation_moves_grid_and_adapters(renderer, clip, config):
    frames, _ = clip
    result = sd_hybrid_adapt(renderer, *clip, config=config, seed=1)
    assert not np.array_equal(result.grid.values.data, init_inversion(renderer, frames[0]).values.data)
    assert len(result.adapters) == 4
    assert any(np.any(a.lora_b.data != 0.0) for a in result.adapters)
    assert len(result.monitor.rows) == 2


def test_inversion_only_leaves_decoder_alone(renderer, clip, config):
    result = sd_hybrid_adapt(renderer, *clip, config=config, components={INVERSION})
    assert result.adapters == []
    assert result.grid.trainable


def test_lora_only_keeps_the_encoder_grid(renderer, clip, config):
    frames, _ = clip
    result = sd_hybrid_adapt(renderer, *clip, config=config, components={LORA})
    np.testing.assert_array_equal(result.grid.values.data, init_inversion(renderer, frames[0]).values.data)


def test_render_is_deterministic_and_bounded(renderer, clip, config):
    result = sd_hybrid_adapt(renderer, *clip, config=config)
    frame = render(result, 0.7)
    np.testing.assert_array_equal(frame, render(result, 0.7))
    assert frame.shape == (32, 32)
    assert np.all((frame >= 0.0) & (frame <= 1.0))
    np.testing.assert_allclose(render_batch(result, np.array([0.7]))[0], frame, atol=1e-12)


def test_render_rejects_out_of_range_condition(renderer, clip, config):
    result = sd_hybrid_adapt(renderer, *clip, config=config)
    with pytest.raises(ValueError):
        render(result, 1.5)


def test_adaptation_is_seed_deterministic(renderer, clip, config):
    first = sd_hybrid_adapt(renderer, *clip, config=config, seed=2)
    second = sd_hybrid_adapt(renderer, *clip, config=config, seed=2)
    np.testing.assert_array_equal(render(first, 0.4), render(second, 0.4))


def test_no_trainable_component_raises(renderer, clip, config):
    with pytest.raises(ConfigurationError):
        sd_hybrid_adapt(renderer, *clip, config=config, components=set())


def test_unknown_component_or_hook_raises(renderer, clip, config):
    with pytest.raises(ConfigurationError):
        sd_hybrid_adapt(renderer, *clip, config=config, components={"texture"})
    with pytest.raises(ConfigurationError):
        sd_hybrid_adapt(renderer, *clip, config=config, hooks={"style": lpips_hook})


def test_conditions_out_of_range(renderer, clip, config):
    frames, conditions = clip
    with pytest.raises(ValueError):
        sd_hybrid_adapt(renderer, frames, conditions + 2.0, config=config)


def test_unavailable_hooks_raise(renderer, clip, config):
    with pytest.raises(NotImplementedError):
        lpips_hook(Tensor(np.zeros(2)), Tensor(np.zeros(2)))
    with pytest.raises(NotImplementedError):
        id_hook(Tensor(np.zeros(2)), Tensor(np.zeros(2)))


def test_custom_hook_joins_the_loss(renderer, clip, config, mocker):
    hook = mocker.Mock(side_effect=F.mse)
    result = sd_hybrid_adapt(renderer, *clip, config=config, hooks={"lpips": hook})
    assert hook.call_count == config.iters
    rows = result.monitor.rows
    assert all(row["total"] > row["l1"] for row in rows)


def test_every_epoch_visits_each_training_frame_once():
    order = frame_order(np.arange(8), seed=3, iters=20)
    assert order.shape == (20,)
    assert sorted(order[:8]) == list(range(8))
    assert sorted(order[8:16]) == list(range(8))
    assert set(order[16:]) <= set(range(8))
    np.testing.assert_array_equal(order, frame_order(np.arange(8), seed=3, iters=20))
    np.testing.assert_array_equal(order[:8], frame_order(np.arange(8), seed=3, iters=8))
    assert frame_order(np.arange(8), seed=3, iters=0).size == 0


def test_frame_order_needs_training_frames():
    with pytest.raises(ValueError):
        frame_order(np.zeros(0, dtype=int), seed=0, iters=4)


def test_train_limit(renderer, clip, config):
    result = sd_hybrid_adapt(renderer, *clip, config=config, train_limit=3)
    np.testing.assert_array_equal(result.train_frames, [0, 1, 2])
    np.testing.assert_array_equal(result.held_out_frames, [8, 9])


def test_psnr_and_evaluation(renderer, clip, config):
    frames, conditions = clip
    assert psnr(frames, frames) == float("inf")
    assert psnr(np.zeros(4), np.full(4, 0.1)) == pytest.approx(20.0)
    result = sd_hybrid_adapt(renderer, frames, conditions, config=config)
    scores = evaluate_frames(result, frames, conditions, result.held_out_frames)
    assert set(scores) == {"psnr", "l1"}
    assert scores["l1"] > 0.0


@pytest.mark.integration
def test_adaptation_loss_trend_is_non_increasing(pretrained_renderer, adaptation_world):
    frames, conditions = adaptation_world.clip(59)
    config = AdaptConfig(iters=2000, record_wall_time=False)
    result = sd_hybrid_adapt(pretrained_renderer, frames, conditions, config=config, seed=0)
    trend = result.monitor.metrics["total"].moving_average(100)
    assert trend.size == 1901
    # never more than 5% above the lowest average seen so far
    assert np.all(trend <= np.minimum.accumulate(trend) * 1.05)
