"""Tests for parameter discovery, freezing and state dicts."""
import numpy as np
import pytest

from app.models.errors import ArchiveError, DimensionError
from app.nn.layers import MLP


def test_named_parameters_follow_structure(rng):
    names = [name for name, _ in MLP([3, 4, 2], rng).named_parameters()]
    assert names == ["layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"]


def test_num_parameters(rng):
    assert MLP([3, 4, 2], rng).num_parameters() == 3 * 4 + 4 + 4 * 2 + 2


def test_freeze_clears_trainable(rng):
    mlp = MLP([3, 4, 2], rng).freeze()
    assert mlp.trainable_parameters() == []
    assert len(mlp.state_dict()) == 4


def test_load_missing_key(rng):
    mlp = MLP([3, 4, 2], rng)
    state = mlp.state_dict()
    del state["layers.1.bias"]
    with pytest.raises(ArchiveError):
        mlp.load_state_dict(state)


def test_load_wrong_shape(rng):
    mlp = MLP([3, 4, 2], rng)
    state = mlp.state_dict()
    state["layers.0.weight"] = np.zeros((2, 2))
    with pytest.raises(DimensionError):
        mlp.load_state_dict(state)
