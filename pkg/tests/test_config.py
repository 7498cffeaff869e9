"""Config parsing, validation, and echo round-trips."""

import pytest
import yaml

from progtransfer.config import (
    ExperimentConfig,
    HyperparamsSpec,
    SynthSpec,
    echo_config,
    load_config,
    parse_config,
)
from progtransfer.errors import ConfigError


def minimal_raw() -> dict:
    return {"synth": {}}


class TestParsing:
    def test_minimal_config_fills_every_default(self):
        cfg = parse_config(minimal_raw())
        assert cfg.kind == "paralinguistic_transfer"
        assert cfg.seed == 0
        assert cfg.iterations == 10
        assert cfg.k == 10
        assert cfg.strategies == ["baseline", "ptft", "prognet"]
        assert cfg.task == "emotion"
        assert cfg.train_fold_subset is None
        assert cfg.hyperparams.hidden_width == 256
        assert cfg.hyperparams.max_epochs == 600
        assert cfg.ttest.df == 10
        assert cfg.ttest.train_test_ratio is None
        assert cfg.synth.tau == 1.0

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("seed: 5\nsynth: {tau: 0.5}\n")
        cfg = load_config(path)
        assert cfg.seed == 5
        assert cfg.synth.tau == 0.5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("seed: [unclosed\n")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)

    def test_non_mapping_top_level(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    def test_empty_file_is_all_defaults_but_needs_target(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        with pytest.raises(ConfigError, match="target"):
            load_config(path)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="extra_key"):
            parse_config({**minimal_raw(), "extra_key": 1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="hyperparams"):
            parse_config({**minimal_raw(), "hyperparams": {"widht": 4}})


class TestValidation:
    @pytest.mark.parametrize("bad", [0, 3, 5, 7, 9, -1])
    def test_train_fold_subset_values(self, bad):
        with pytest.raises(ConfigError, match="train_fold_subset"):
            parse_config({**minimal_raw(), "train_fold_subset": bad})

    @pytest.mark.parametrize("good", [1, 2, 4, 8, None])
    def test_train_fold_subset_accepts(self, good):
        cfg = parse_config({**minimal_raw(), "train_fold_subset": good})
        assert cfg.train_fold_subset == good

    def test_empty_strategies(self):
        with pytest.raises(ConfigError, match="nonempty"):
            parse_config({**minimal_raw(), "strategies": []})

    def test_duplicate_strategies(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config({**minimal_raw(), "strategies": ["baseline", "baseline"]})

    def test_unknown_strategy(self):
        with pytest.raises(ConfigError, match="strategies"):
            parse_config({**minimal_raw(), "strategies": ["svm"]})

    def test_schema_version_gate(self):
        with pytest.raises(ConfigError, match="schema_version"):
            parse_config({**minimal_raw(), "schema_version": 99})

    def test_target_required_without_synth(self):
        with pytest.raises(ConfigError, match="target"):
            parse_config({"strategies": ["baseline"]})

    def test_synth_excludes_paths(self):
        with pytest.raises(ConfigError, match="synth"):
            parse_config({**minimal_raw(), "target": {"path": "x.csv"}})

    def test_transfer_strategies_need_source(self):
        with pytest.raises(ConfigError, match="source"):
            parse_config({"target": {"path": "t.csv"}, "strategies": ["prognet"]})

    def test_baseline_only_needs_no_source(self):
        cfg = parse_config({"target": {"path": "t.csv"}, "strategies": ["baseline"]})
        assert cfg.source is None

    def test_synth_generate_requires_synth_section(self):
        with pytest.raises(ConfigError, match="synth"):
            parse_config({"kind": "synth_generate"})

    def test_bad_synth_priors(self):
        with pytest.raises(ConfigError, match="priors"):
            parse_config({"synth": {"class_priors": [0.5, 0.5, 0.5, 0.5]}})

    def test_bad_hyperparams(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            parse_config({**minimal_raw(),
                          "hyperparams": {"learning_rate": -1.0}})


class TestEcho:
    def test_echo_materializes_all_fields(self):
        echo = echo_config(parse_config(minimal_raw()))
        data = yaml.safe_load(echo)
        assert set(data) == set(ExperimentConfig.model_fields)
        assert set(data["hyperparams"]) == set(HyperparamsSpec.model_fields)
        assert set(data["synth"]) == set(SynthSpec.model_fields)

    def test_echo_round_trip_is_identical(self):
        cfg = parse_config({**minimal_raw(), "seed": 9, "iterations": 2,
                            "strategies": ["baseline", "prognet"]})
        again = parse_config(yaml.safe_load(echo_config(cfg)))
        assert again == cfg
        assert echo_config(again) == echo_config(cfg)

    def test_echo_is_sorted_and_stable(self):
        echo = echo_config(parse_config(minimal_raw()))
        keys = [line.split(":")[0] for line in echo.splitlines()
                if line and not line.startswith((" ", "-"))]
        assert keys == sorted(keys)
