# type: ignore  # noqa: PGH003

import json

import pytest

from conformalkit.classification.predictors import PredictorKindEnum
from conformalkit.classification.scores import ScoreKindEnum
from conformalkit.core.errors import ConfigurationError
from conformalkit.core.settings import load_settings, read_settings_file
from conformalkit.utils.validations import deep_merge, is_sub_struct
from conformalkit.utils.xdg.config import UserConfig, resolve_platform_dir
from conformalkit.utils.xdg.data import UserData


@pytest.fixture
def default_settings(empty_user_config):
    return load_settings(user_config=empty_user_config)


def test_defaults(default_settings):
    assert default_settings.run.alpha == 0.1
    assert default_settings.score.kind is ScoreKindEnum.THR
    assert default_settings.predictor.kind is PredictorKindEnum.SPLIT
    assert default_settings.bench_classification.alphas[-1] == 0.9
    assert default_settings.inputs.path("logits") is None


def test_loading_does_not_create_the_user_config_dir(tmp_path):
    config = UserConfig(tmp_path / "config")
    load_settings(user_config=config)
    assert not config.user_config_dir.exists()


def test_layers_apply_in_order(tmp_path):
    user = UserConfig(tmp_path / "user")
    user.save_user_config_file({"run": {"alpha": 0.2, "seed": 4}})
    settings_file = tmp_path / "settings.toml"
    settings_file.write_text("[run]\nalpha = 0.3\n")
    settings = load_settings(
        settings_file, overrides={"run": {"trials": 2}}, user_config=user
    )
    assert settings.run.alpha == 0.3, "The settings file must override the user file"
    assert settings.run.seed == 4, "Untouched user values must survive"
    assert settings.run.trials == 2

    overridden = load_settings(
        settings_file, overrides={"run": {"alpha": 0.05}}, user_config=user
    )
    assert overridden.run.alpha == 0.05, "Flags must override every file"


def test_json_settings_file(tmp_path, empty_user_config):
    settings_file = tmp_path / "settings.json"
    settings_file.write_text(json.dumps({"score": {"kind": "aps"}}))
    settings = load_settings(settings_file, user_config=empty_user_config)
    assert settings.score.kind is ScoreKindEnum.APS


def test_unknown_keys_are_rejected(tmp_path, empty_user_config):
    settings_file = tmp_path / "settings.toml"
    settings_file.write_text("[run]\nalpah = 0.3\n")
    with pytest.raises(ConfigurationError, match="structurally different"):
        load_settings(settings_file, user_config=empty_user_config)


def test_wrong_types_are_rejected(empty_user_config):
    with pytest.raises(ConfigurationError):
        load_settings(
            overrides={"run": {"seed": "zero"}}, user_config=empty_user_config
        )


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
def test_invalid_values_are_rejected(alpha, empty_user_config):
    with pytest.raises(ConfigurationError, match="invalid settings"):
        load_settings(
            overrides={"run": {"alpha": alpha}}, user_config=empty_user_config
        )


def test_benchmark_rejects_weighted_predictor(empty_user_config):
    with pytest.raises(ConfigurationError):
        load_settings(
            overrides={"bench_classification": {"predictors": ["weighted"]}},
            user_config=empty_user_config,
        )


def test_settings_file_errors(tmp_path):
    with pytest.raises(ConfigurationError, match="existing settings file"):
        read_settings_file(tmp_path / "missing.toml")
    yaml_file = tmp_path / "settings.yaml"
    yaml_file.write_text("run: {}")
    with pytest.raises(ConfigurationError, match=".toml or .json"):
        read_settings_file(yaml_file)
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigurationError):
        read_settings_file(broken)
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigurationError, match="top level"):
        read_settings_file(listing)


def test_corrupt_user_file_is_a_configuration_error(tmp_path):
    config = UserConfig(tmp_path / "user")
    config.user_config_dir.mkdir()
    config.user_config_file.write_text("[run\n")
    with pytest.raises(ConfigurationError):
        load_settings(user_config=config)


def test_is_sub_struct():
    reference = {"a": 1, "b": {"c": "x", "d": [0.5]}}
    assert is_sub_struct(reference, {"b": {"c": "y"}})
    assert is_sub_struct(reference, {"a": 2.5})
    assert not is_sub_struct(reference, {"b": 3})
    assert not is_sub_struct(reference, {"a": {"nested": 1}})
    assert not is_sub_struct(reference, {"a": False})


def test_deep_merge_leaves_inputs_untouched():
    base = {"a": {"b": 1}, "c": 2}
    merged = deep_merge(base, {"a": {"d": 3}})
    assert merged == {"a": {"b": 1, "d": 3}, "c": 2}
    assert base == {"a": {"b": 1}, "c": 2}


def test_user_config_round_trip(tmp_path):
    config = UserConfig(tmp_path / "user")
    assert config.read_user_config_file() == {}
    config.save_user_config_file({"score": {"kind": "raps"}})
    assert config.read_user_config_file() == {"score": {"kind": "raps"}}


def test_platform_dirs_follow_the_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path / "data"))
    table = {"Linux": ("XDG_DATA_HOME", "~/.local/share")}
    assert resolve_platform_dir(table, "Linux") == tmp_path / "data"
    with pytest.raises(ConfigurationError):
        resolve_platform_dir(table, "Plan9")


def test_user_data_creates_its_directory(tmp_path):
    data = UserData(tmp_path / "data")
    assert data.user_data_dir.is_dir()
    assert data.runs_dir.parent == data.user_data_dir
    assert data.log_file.name == "conformalkit.log"
