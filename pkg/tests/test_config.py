"""
Tests for retention/core/config.py
"""
import pytest

from retention.cli.context import parse_overrides
from retention.core.config import (
    ModelDims,
    RunConfig,
    ScheduleConfig,
    Settings,
    dump_run_config,
    load_run_config,
)
from retention.core.errors import ConfigError


class TestDefaults:
    def test_schedule_scaling(self):
        schedule = ScheduleConfig()
        phases = schedule.scaled_phases()
        assert [(p.lr, p.iterations) for p in phases] == [(0.001, 320), (0.0001, 100)]
        assert schedule.total_iterations == 420

    def test_model_defaults(self):
        dims = ModelDims()
        assert (dims.hidden_note, dims.head_width, dims.dropout_rate) == (32, 32, 0.2)
        assert not dims.mask_rule_3

    def test_modalities_are_ordered_and_unique(self):
        assert ModelDims(modalities=["notes", "temporal", "notes"]).modalities == ["temporal", "notes"]

    def test_no_modalities(self):
        with pytest.raises(ValueError):
            ModelDims(modalities=[])

    def test_settings_from_environment(self, monkeypatch):
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("ENVIRONMENT", "production")
        settings = Settings()
        assert settings.LOG_LEVEL == "DEBUG"
        assert settings.ENVIRONMENT == "production"


class TestLoading:
    def test_yaml_and_overrides(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("seed: 4\ncohort:\n  n_students: 30\nsplit:\n  mode: kfold\n  k: 3\n", encoding="utf-8")
        config = load_run_config(path, {"cohort.signal_strength": "6.5", "model.modalities": "[static]"})
        assert config.seed == 4
        assert config.cohort.n_students == 30
        assert config.cohort.signal_strength == 6.5
        assert config.model.modalities == ["static"]
        assert config.split.k == 3

    def test_no_file_gives_defaults(self):
        assert load_run_config() == RunConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("seed: [1, 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_run_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            load_run_config(path)

    def test_all_problems_listed(self):
        with pytest.raises(ConfigError) as exc:
            load_run_config(overrides={"cohort.n_students": "-1", "model.dropout_rate": "1.5"})
        errors = exc.value.detail["errors"]
        assert len(errors) == 2
        assert any(e.startswith("cohort.n_students") for e in errors)

    def test_startup_checks(self, tmp_path):
        overrides = {
            "split.mode": "kfold",
            "split.k": "1",
            "embedder.source": f"precomputed:{tmp_path / 'absent.txt'}",
        }
        with pytest.raises(ConfigError) as exc:
            load_run_config(overrides=overrides)
        assert len(exc.value.detail["errors"]) == 2
        assert exc.value.exit_code == 2

    def test_unknown_embedder_source(self):
        with pytest.raises(ConfigError):
            load_run_config(overrides={"embedder.source": "word2vec"})

    def test_dump_then_load(self, tmp_path):
        config = load_run_config(overrides={"seed": "9", "fairness.mitigation": "reweigh"})
        path = tmp_path / "dumped.yaml"
        dump_run_config(config, path)
        assert load_run_config(path) == config


class TestOverrides:
    def test_parse(self):
        overrides = parse_overrides(("seed=3", "model.activation =tanh", "cohort.seed=a=b"))
        assert overrides == {"seed": "3", "model.activation": "tanh", "cohort.seed": "a=b"}

    @pytest.mark.parametrize("pair", ["seed", "=3"])
    def test_malformed(self, pair):
        with pytest.raises(ConfigError):
            parse_overrides((pair,))
