"""Tests for application configuration."""
import pytest
from pydantic import ValidationError

from app.models.errors import ConfigurationError
from app.models.schemas import SolverMethod
from app.settings.config import RunConfig, deep_merge, load_config


def test_seed_is_required():
    with pytest.raises(ValidationError):
        RunConfig()


def test_defaults():
    config = RunConfig(seed=0)
    assert config.solver.method == SolverMethod.MIDPOINT
    assert config.solver.steps == 5
    assert config.model.lora_rank == 4
    assert config.log.level == "INFO"
    assert config.adapt_identity == config.data.n_identities - 1
    assert len(config.held_out_identities) == 10
    assert config.pretrain_identities[-1] == config.held_out_identities[0] - 1


def test_environment_variables(monkeypatch):
    monkeypatch.setenv("MTLK_THREADS", "4")
    monkeypatch.setenv("MTLK_A2M__STEPS", "12")
    config = RunConfig(seed=1)
    assert config.threads == 4
    assert config.a2m.steps == 12


def test_file_and_overrides_take_priority(tmp_path, monkeypatch):
    monkeypatch.setenv("MTLK_THREADS", "4")
    path = tmp_path / "run.toml"
    path.write_text("seed = 3\nthreads = 2\n\n[solver]\nmethod = \"euler\"\nsteps = 9\n")
    config = load_config(path, {"solver": {"steps": 11}})
    assert config.seed == 3
    assert config.threads == 2
    assert config.solver.method == SolverMethod.EULER
    assert config.solver.steps == 11


def test_debug_forces_debug_logging():
    assert RunConfig(seed=0, debug=True, log={"level": "ERROR"}).log.level == "DEBUG"


def test_window_longer_than_clips():
    with pytest.raises(ValidationError, match="window"):
        RunConfig(seed=0, data={"frames": 32}, a2m={"window": 64})


def test_window_must_cover_prompt_and_drive():
    assert RunConfig(seed=0).a2m.window == 192
    with pytest.raises(ValidationError, match="prompt \\+ drive"):
        RunConfig(seed=0, a2m={"window": 128})


def test_layout_rates_are_bounded():
    with pytest.raises(ValidationError, match="must not exceed 1"):
        RunConfig(seed=0, a2m={"prompt_dropout": 0.8, "prompt_rate": 0.3})


def test_pretraining_pool_floor():
    with pytest.raises(ValidationError, match="pretraining identities"):
        RunConfig(seed=0, data={"n_identities": 40})
    assert len(RunConfig(seed=0, data={"n_identities": 40}, adapt={"min_pretrain_identities": 30}).pretrain_identities) == 30


def test_held_out_identities_need_a_pretraining_pool():
    with pytest.raises(ValidationError):
        RunConfig(seed=0, data={"n_identities": 4}, adapt={"held_out_identities": 4})


def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError):
        RunConfig(seed=0, learning_rate=0.1)


def test_bad_config_file(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("seed = = 3")
    with pytest.raises(ConfigurationError):
        load_config(path)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.toml")


def test_missing_input_path(tmp_path):
    with pytest.raises(ValidationError):
        RunConfig(seed=0, paths={"audio": tmp_path / "nope.mtlk"})


def test_echo_is_canonical(make_config):
    first, second = make_config(), make_config()
    assert first.echo() == second.echo()
    assert '"seed":7' in first.echo()


def test_derived_loop_configs(make_config):
    config = make_config(log={"record_wall_time": True})
    assert config.a2m_train_config().window == 40
    assert config.a2m_train_config().record_wall_time
    assert config.adapt_config().lora_rank == 2
    assert config.solver_config(steps=7).steps == 7


def test_deep_merge_keeps_siblings():
    merged = deep_merge({"a": {"x": 1, "y": 2}, "b": 1}, {"a": {"y": 3}})
    assert merged == {"a": {"x": 1, "y": 3}, "b": 1}
