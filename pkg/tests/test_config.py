"""
Tests for configuration resolution: flag > file > environment > default.
"""

import json
from pathlib import Path

import pytest

from detblind.common.errors import ConfigError
from detblind.config import (
    ENV_LOG_LEVEL,
    ENV_SEED,
    AttackConfig,
    PerturbSettings,
    environment_settings,
    load_config,
    read_config_file,
)
from detblind.segmentation import DEFAULT_PALETTE_SIZE, default_palette


def write_config(directory: Path, payload) -> Path:
    path = directory / "config.json"
    path.write_text(json.dumps(payload))
    return path


@pytest.mark.unit
class TestDefaults:
    """Defaults of every section."""

    def test_defaults(self):
        config = load_config(environ={})
        assert config.seed == 0
        assert config.log_level == "INFO"
        assert config.replace.step == 4
        assert config.replace.epsilon == 0.25
        assert config.perturb.n == 1 and config.perturb.m == 10
        assert config.perturb.eta == 5.0
        assert config.inversion.lambda1 == 0.5
        assert config.inversion.alpha == 0.1
        assert config.inversion.beta == 0.01
        assert config.inversion.max_iters == 500
        assert config.evaluation.threshold == 0.3

    def test_effective_dump_is_complete(self):
        dump = load_config(environ={}).effective_dump()
        assert set(dump) >= {"replace", "inversion", "perturb", "segmentation", "classifier", "evaluation", "seed"}
        assert dump["perturb"]["offset"] == [0, 0]
        json.dumps(dump)


@pytest.mark.unit
class TestPrecedence:
    """Each layer overrides the one below it."""

    def test_environment_over_default(self):
        config = load_config(environ={ENV_SEED: "7", ENV_LOG_LEVEL: "debug"})
        assert config.seed == 7
        assert config.log_level == "DEBUG"

    def test_file_over_environment(self, temp_directory):
        path = write_config(temp_directory, {"seed": 3, "replace": {"step": 2}})
        config = load_config(path, environ={ENV_SEED: "7"})
        assert config.seed == 3
        assert config.replace.step == 2
        assert config.replace.epsilon == 0.25

    def test_flag_over_file(self, temp_directory):
        path = write_config(temp_directory, {"seed": 3, "perturb": {"eta": 1.0, "m": 4}})
        config = load_config(path, overrides={"seed": 11, "perturb": {"eta": 2.5}}, environ={ENV_SEED: "7"})
        assert config.seed == 11
        assert config.perturb.eta == 2.5
        assert config.perturb.m == 4

    def test_bad_environment_seed(self):
        with pytest.raises(ConfigError, match=ENV_SEED):
            environment_settings({ENV_SEED: "many"})

    def test_empty_environment_values_are_ignored(self):
        assert environment_settings({ENV_SEED: "", ENV_LOG_LEVEL: ""}) == {}


@pytest.mark.unit
class TestValidation:
    """Invalid values fail before any work starts."""

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="replace.stepp"):
            load_config(overrides={"replace": {"stepp": 3}}, environ={})

    @pytest.mark.parametrize(
        "overrides",
        [
            {"replace": {"epsilon": 0.0}},
            {"replace": {"epsilon": 1.5}},
            {"replace": {"step": 0}},
            {"perturb": {"m": 10, "stride": 5}},
            {"perturb": {"eta": -1.0}},
            {"inversion": {"lambda1": 0.9, "lambda2": 0.9}},
            {"inversion": {"alpha": 1.0}},
            {"target_labels": [0]},
            {"log_level": "LOUD"},
            {"segmentation": {"palette_size": 0}},
            {"segmentation": {"palette": {"44": [0, 0, 0]}}},
            {"segmentation": {"palette": {"44": [128, 0, 0]}}},
        ],
    )
    def test_out_of_range(self, overrides):
        with pytest.raises(ConfigError, match="Invalid configuration"):
            load_config(overrides=overrides, environ={})

    def test_annotations_and_mask_are_exclusive(self):
        with pytest.raises(ConfigError, match="mutually exclusive"):
            load_config(overrides={"annotations": "a.json", "mask": "m.png"}, environ={})

    def test_required_attack_inputs(self):
        config = load_config(overrides={"images": ["x.png"]}, environ={})
        with pytest.raises(ConfigError) as exc:
            config.require_attack_inputs()
        message = str(exc.value)
        assert "annotations or mask" in message
        assert "target_labels" in message
        assert "reconstruction_label" in message
        assert "images" not in message.split(":", 1)[1]

    def test_complete_attack_inputs(self):
        config = AttackConfig(
            images=[Path("x.png")], mask=Path("m.png"), target_labels=[1], reconstruction_label=0
        )
        config.require_attack_inputs()

    def test_perturb_settings_strides(self):
        assert PerturbSettings(m=3, stride=3).stride == 3

    def test_palette_from_file(self, temp_directory):
        path = write_config(temp_directory, {"segmentation": {"palette_size": 50, "palette": {"44": [10, 20, 30]}}})
        palette = load_config(path, environ={}).segmentation.resolved_palette()
        assert len(palette) == 50
        assert palette[44] == (10, 20, 30)
        assert palette[1] == (128, 0, 0)

    def test_default_palette_covers_coco_ids(self):
        palette = load_config(environ={}).segmentation.resolved_palette()
        assert palette == default_palette(DEFAULT_PALETTE_SIZE)
        assert 90 in palette


@pytest.mark.unit
class TestConfigFile:
    """Config file reading."""

    def test_missing_file(self, temp_directory):
        with pytest.raises(ConfigError, match="not found"):
            read_config_file(temp_directory / "absent.json")

    def test_malformed_file(self, temp_directory):
        path = temp_directory / "broken.json"
        path.write_text("{ seed: 1 }")
        with pytest.raises(ConfigError, match="Malformed"):
            read_config_file(path)

    def test_not_an_object(self, temp_directory):
        with pytest.raises(ConfigError):
            read_config_file(write_config(temp_directory, [1, 2]))

    def test_schema_version(self, temp_directory):
        with pytest.raises(ConfigError, match="schema_version"):
            read_config_file(write_config(temp_directory, {"schema_version": 2}))
