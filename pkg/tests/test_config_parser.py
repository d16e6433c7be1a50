"""
Tests for run configuration parsing.

Core claims:
    - Shipped configurations load, and canonical JSON is a fixed point
    - Range violations are reported against their dotted field before any run
    - Unknown keys and keys foreign to the model kind are rejected
    - JSON syntax errors carry line and column; TOML is accepted
    - Dotted overrides replace or create nested values
    - Command-line flags map onto the same overrides
"""

import json
from pathlib import Path

import pytest

from core.coag_measures import PointMassMeasure
from core.population_models import BottleneckModel, ExplicitModel, PDPowerModel
from core.special_fn import PDParams
from main import build_parser, config_overrides
from services.config_parser import (
    ConfigError,
    build_config,
    load_config,
    parse_config,
    to_limit,
    to_model_spec,
    to_rho,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _pd_doc(**model):
    block = {"kind": "pd_power", "alpha": 0.5, "theta": 0.0, "gamma": 0.5}
    block.update(model)
    return {"command": "constants", "model": block}


class TestShippedConfigs:
    @pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.*")), ids=lambda p: p.name)
    def test_loads(self, path):
        config = load_config(path)
        if config.model is not None:
            to_model_spec(config.model)

    def test_canonical_json_is_a_fixed_point(self):
        config = load_config(CONFIGS / "kingman_demo.json")
        text = config.canonical_json()
        assert parse_config(text).canonical_json() == text
        assert list(json.loads(text)) == sorted(json.loads(text))

    def test_negative_control_content(self):
        config = load_config(CONFIGS / "lambda_negative_control.json")
        assert config.check == "lambda-criterion"
        assert to_model_spec(config.model) == ExplicitModel(weights=(0.4, 0.4, 0.2))
        assert to_limit(config) == PointMassMeasure(((0.5, 1.0),))
        assert config.run.population_sizes() == [3, 10]

    def test_toml_config(self):
        config = load_config(CONFIGS / "pd_power_case_i.toml")
        assert to_model_spec(config.model) == PDPowerModel(PDParams(0.8, 0.0, 0.5))


class TestValidation:
    def test_gamma_outside_theorem_range(self):
        with pytest.raises(ConfigError, match="alpha/2 < gamma <= alpha") as info:
            build_config(_pd_doc(gamma=0.2))
        assert info.value.field == "model.gamma"

    def test_alpha_range(self):
        with pytest.raises(ConfigError) as info:
            build_config(_pd_doc(alpha=1.5))
        assert info.value.field == "model.alpha"

    def test_stochastic_command_needs_seed(self):
        with pytest.raises(ConfigError, match="run.seed"):
            build_config({"command": "simulate", "model": {"kind": "wright_fisher"}, "run": {"N": 10}})

    def test_check_needs_name(self):
        with pytest.raises(ConfigError, match="check name"):
            build_config({"command": "check", "run": {"seed": 1}})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError) as info:
            build_config({"command": "rates", "bogus": 1})
        assert info.value.field == "bogus"

    def test_key_foreign_to_kind(self):
        with pytest.raises(ConfigError) as info:
            build_config({"command": "rates", "model": {"kind": "wright_fisher", "alpha": 0.5}})
        assert info.value.field == "model.alpha"

    def test_bad_limit(self):
        with pytest.raises(ConfigError) as info:
            build_config({"command": "rates", "limit": "beta:1"})
        assert info.value.field == "limit"

    def test_seed_range(self):
        with pytest.raises(ConfigError) as info:
            build_config({"command": "pd", "run": {"seed": -1}})
        assert info.value.field == "run.seed"

    def test_population_sizes_increase(self):
        with pytest.raises(ConfigError, match="increasing"):
            build_config({"command": "rates", "run": {"N_list": [100, 10]}})

    def test_explicit_needs_one_vector(self):
        with pytest.raises(ConfigError) as info:
            build_config({"command": "rates", "model": {"kind": "explicit"}})
        assert info.value.field == "model.weights"

    def test_eldon_wakeley_epsilon(self):
        doc = {"command": "rates", "model": {"kind": "eldon_wakeley", "base": "beta:2,2", "epsilon": 1.0}}
        with pytest.raises(ConfigError) as info:
            build_config(doc)
        assert info.value.field == "model.epsilon"

    def test_bottleneck_block(self):
        doc = {
            "command": "rates",
            "model": {"kind": "bottleneck", "F": [[2, 1.0]], "a_exp": 0.5, "b_exp": 0.5, "eta_hat": "wright_fisher"},
        }
        model = to_model_spec(build_config(doc).model)
        assert model == BottleneckModel(a_exp=0.5, b_exp=0.5, f_pairs=((2, 1.0),))

    def test_power_law_f(self):
        doc = {"command": "rates", "model": {"kind": "bottleneck", "F": {"power": 2.0}, "a_exp": 0.5, "b_exp": 0.5}}
        assert to_model_spec(build_config(doc).model).f_power == (2.0, 1.0)

    def test_rho_infty(self):
        config = build_config({"command": "rates", "run": {"rho_infty": [0.2, 0.5]}})
        assert to_rho(config).weights == (0.5, 0.2)
        with pytest.raises(ConfigError):
            build_config({"command": "rates", "run": {"rho_infty": [0.7, 0.5]}})

    def test_missing_population_size(self):
        config = build_config({"command": "rates"})
        with pytest.raises(ConfigError, match="run.N"):
            config.run.population_sizes()


class TestDecoding:
    def test_json_error_position(self):
        with pytest.raises(ConfigError, match="line 2 column"):
            parse_config('{\n  "command": ,\n}')

    def test_toml_text(self):
        config = parse_config('command = "rates"\nlimit = "kingman"\n[run]\nn = 3\n', fmt="toml")
        assert config.run.n == 3

    def test_unsupported_format(self):
        with pytest.raises(ConfigError, match="unsupported"):
            parse_config("command: rates", fmt="yaml")

    def test_top_level_must_be_object(self):
        with pytest.raises(ConfigError):
            parse_config("[1, 2]")


class TestOverrides:
    def test_dotted_overrides(self):
        doc = {"command": "simulate", "model": {"kind": "wright_fisher"}, "run": {"N": 10}}
        config = build_config(doc, {"run.seed": 3, "run.n": 4, "output.path": "x.csv"})
        assert config.run.seed == 3
        assert config.run.n == 4
        assert config.output.path == "x.csv"
        assert "seed" not in doc["run"]

    def test_none_overrides_are_ignored(self):
        config = build_config({"command": "rates", "run": {"n": 5}}, {"run.n": None})
        assert config.run.n == 5

    def test_cli_flags(self):
        args = build_parser().parse_args(["check", "lambda-criterion", "--N", "10", "100", "--reps", "50", "--seed", "9"])
        overrides = config_overrides(args, has_model_kind=True)
        assert overrides["check"] == "lambda-criterion"
        assert overrides["run.N_list"] == [10, 100]
        assert overrides["run.N"] == 100
        assert overrides["run.replicates"] == 50
        assert overrides["run.seed"] == 9
        assert "model.kind" not in overrides

    def test_pd_flags_imply_kind(self):
        args = build_parser().parse_args(["constants", "--alpha", "0.5", "--theta", "0", "--gamma", "0.5"])
        config = build_config({}, config_overrides(args, has_model_kind=False))
        assert config.model.kind == "pd_power"
        assert config.run.seed is None
