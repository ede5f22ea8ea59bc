import json
from pathlib import Path

import pytest

from laneid.config import ConfigManager, RunConfig, load_run_config, run_config_from_dict
from laneid.errors import ConfigError

REPO_CONFIG = Path(__file__).resolve().parents[1] / "data" / "config.json"


def test_shipped_config_matches_defaults():
    config = load_run_config(REPO_CONFIG)
    defaults = RunConfig()
    assert config.model == defaults.model
    assert config.optimizer == defaults.optimizer
    assert (config.batch_size, config.sequence_length, config.iterations) == (2, 4, 2000)
    assert config.decision.criterion == "max-m"
    assert config.paths == defaults.paths


def test_partial_override():
    config = run_config_from_dict({"iterations": 10, "model": {"variant": "basic"}, "brightness": {"enabled": True}})
    assert config.iterations == 10
    assert config.model.variant == "basic"
    assert config.model.channels == [16, 32, 64]
    assert config.brightness.enabled and config.brightness.threshold is None
    assert config.optimizer.lr == 1e-4


@pytest.mark.parametrize("data", [
    {"epochs": 3},
    {"model": {"depth": 3}},
    {"optimizer": []},
    {"batch_size": 0},
    {"sequence_length": 0},
    {"optimizer": {"beta1": 1.0}},
    {"decision": {"criterion": "vote"}},
    {"model": {"variant": "gru"}},
])
def test_invalid(data):
    with pytest.raises(ConfigError):
        run_config_from_dict(data)


def test_save_and_reload(tmp_path):
    path = tmp_path / "run.json"
    manager = ConfigManager(path)
    assert manager.config == RunConfig()
    manager.config.iterations = 12
    manager.config.decision.criterion = "z-score"
    manager.save()
    reloaded = ConfigManager(path).config
    assert reloaded.iterations == 12
    assert reloaded.decision.criterion == "z-score"
    assert json.loads(path.read_text())["sequence_length"] == 4


def test_reset_to_defaults(tmp_path):
    manager = ConfigManager(tmp_path / "run.json")
    manager.config.seed = 9
    manager.reset_to_defaults()
    assert ConfigManager(tmp_path / "run.json").config.seed == 0


def test_missing_explicit_path(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "absent.json")


def test_malformed_file_names_path(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{")
    with pytest.raises(ConfigError, match="bad.json"):
        ConfigManager(path)
