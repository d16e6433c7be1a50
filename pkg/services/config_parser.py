"""
Run configuration parsing and validation.

Configurations are JSON or TOML documents with ``command``, ``check``,
``model``, ``limit``, ``run`` and ``output`` blocks. Unknown keys are rejected,
and the range checks owned by the core types run eagerly, so a bad value is
reported against its dotted field (``model.gamma``) before any sampling starts.
"""

from __future__ import annotations

import copy
import json
import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.coag_measures import BetaMeasure, CoagulationMeasure, PointMassMeasure, parse_measure
from core.partitions import MassPartition
from core.population_models import (
    BottleneckModel,
    EldonWakeleyModel,
    ExplicitModel,
    ExponentialModel,
    ModelSpec,
    PDPowerModel,
)
from core.special_fn import THEOREM_RANGE_RULE, PDParams

Command = Literal["rates", "constants", "simulate", "estimate-cn", "transition", "pd", "check", "plotdata"]
CheckName = Literal[
    "semigroup",
    "lambda-criterion",
    "kingman-criterion",
    "xi-functionals",
    "replacement",
    "bottleneck",
    "pd-theorem",
    "em-theorem",
    "em-equivalence",
    "discrete-limit",
]
ModelKind = Literal["wright_fisher", "explicit", "eldon_wakeley", "bottleneck", "pd_power", "exponential"]

STOCHASTIC_COMMANDS = {"simulate", "estimate-cn", "transition", "pd", "check", "plotdata"}
CHECK_COMMANDS = {"check", "plotdata"}

KIND_KEYS: dict[str, set[str]] = {
    "wright_fisher": set(),
    "explicit": {"weights", "offspring"},
    "eldon_wakeley": {"base", "epsilon"},
    "bottleneck": {"F", "a_exp", "b_exp", "nu_bar", "dirichlet_shape", "eta_hat"},
    "pd_power": {"alpha", "theta", "gamma"},
    "exponential": {"beta", "kappa", "M", "direct"},
}


class ConfigError(ValueError):
    """A configuration problem attached to its dotted field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class PowerLawF(BaseModel):
    model_config = ConfigDict(extra="forbid")

    power: float
    scale: float = 1.0


class ModelBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: ModelKind
    alpha: float | None = None
    theta: float | None = None
    gamma: float | None = None
    beta: float | None = None
    kappa: float | None = None
    epsilon: float | None = None
    base: str | None = None
    F: list[tuple[int, float]] | PowerLawF | None = None
    a_exp: float | None = None
    b_exp: float | None = None
    nu_bar: Literal["uniform", "dirichlet"] | None = None
    dirichlet_shape: float | None = None
    eta_hat: Literal["wright_fisher"] | list[float] | None = None
    weights: list[float] | None = None
    offspring: list[int] | None = None
    M: int | None = None
    direct: bool | None = None


class RunBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N: int | None = Field(default=None, ge=1)
    N_list: list[int] | None = None
    n: int = Field(default=2, ge=1)
    replicates: int = Field(default=1000, ge=1)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    horizon: int | None = Field(default=None, ge=0)
    t_max: float | None = Field(default=None, gt=0.0)
    times: list[float] = Field(default_factory=lambda: [1.0])
    b_max: int = Field(default=4, ge=2, le=8)
    b_list: list[int] = Field(default_factory=lambda: [2, 3, 4])
    beta_exponent: float = Field(default=3.0, gt=2.0)
    shapes: list[list[int]] = Field(default_factory=lambda: [[2], [3], [2, 2]])
    regime: Literal["i", "ii", "iii"] | None = None
    rho_infty: list[float] | None = None
    tolerance: float | None = Field(default=None, gt=0.0)
    atol: float | None = Field(default=None, ge=0.0)
    shift: float = 0.0
    raw: bool = False

    def population_sizes(self) -> list[int]:
        if self.N_list:
            return list(self.N_list)
        if self.N is not None:
            return [self.N]
        raise ConfigError("run.N", "a population size N (or N_list) is required")

    def population_size(self) -> int:
        if self.N is not None:
            return self.N
        return self.population_sizes()[-1]


class OutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str | None = None


class RunConfig(BaseModel):
    """A complete, validated experiment record."""

    model_config = ConfigDict(extra="forbid")

    command: Command
    check: CheckName | None = None
    model: ModelBlock | None = None
    limit: str | None = None
    run: RunBlock = Field(default_factory=RunBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def _command_requirements(self) -> RunConfig:
        if self.command in CHECK_COMMANDS and self.check is None:
            raise ValueError(f"command {self.command!r} needs a check name")
        if self.command in STOCHASTIC_COMMANDS and self.run.seed is None:
            raise ValueError(f"command {self.command!r} needs run.seed")
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json", exclude_none=True), sort_keys=True, indent=2) + "\n"


def _set_dotted(data: dict[str, Any], dotted: str, value: Any) -> None:
    node = data
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, f"cannot override inside non-table value {key!r}")
    node[leaf] = value


def _from_validation_error(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "config"
    return ConfigError(field, first["msg"])


def _decode(text: str, fmt: str) -> dict[str, Any]:
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    elif fmt == "toml":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError("config", f"invalid TOML: {e}") from e
    else:
        raise ConfigError("config", f"unsupported format {fmt!r} (use json or toml)")
    if not isinstance(data, dict):
        raise ConfigError("config", "the top level must be a table/object")
    return data


def build_config(data: dict[str, Any], overrides: dict[str, Any] | None = None) -> RunConfig:
    """Validate a decoded document after applying dotted-key overrides."""
    data = copy.deepcopy(data)
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, dotted, value)
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise _from_validation_error(e) from e
    validate_ranges(config)
    return config


def parse_config(text: str, fmt: str = "json", overrides: dict[str, Any] | None = None) -> RunConfig:
    return build_config(_decode(text, fmt), overrides)


def read_config(path: str | Path) -> dict[str, Any]:
    """Decoded, not yet validated, content of a .json or .toml file."""
    path = Path(path)
    fmt = "toml" if path.suffix.lower() == ".toml" else "json"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e.strerror or e}") from e
    return _decode(text, fmt)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    return build_config(read_config(path), overrides)


def _required(block: ModelBlock, key: str) -> Any:
    value = getattr(block, key)
    if value is None:
        raise ConfigError(f"model.{key}", f"required for kind {block.kind}")
    return value


def _guard(field: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(field, str(e)) from e


def _pd_params(block: ModelBlock) -> PDParams:
    alpha, theta, gamma = (_required(block, k) for k in ("alpha", "theta", "gamma"))
    if not 0.0 < alpha < 1.0:
        raise ConfigError("model.alpha", f"alpha must lie in (0, 1), got {alpha}")
    if not theta > -alpha:
        raise ConfigError("model.theta", f"theta must satisfy theta > -alpha, got {theta}")
    params = PDParams(alpha, theta, gamma)
    if not params.in_theorem_range:
        raise ConfigError("model.gamma", f"gamma={gamma} with alpha={alpha} violates {THEOREM_RANGE_RULE}")
    return params


def to_model_spec(block: ModelBlock) -> ModelSpec:
    """Core ModelSpec of a model block; every range rule reported against its field."""
    allowed = KIND_KEYS[block.kind]
    for key, value in block.model_dump(exclude={"kind"}).items():
        if value is not None and key not in allowed:
            raise ConfigError(f"model.{key}", f"not used by kind {block.kind}")

    if block.kind == "wright_fisher":
        return ExplicitModel(uniform=True)
    if block.kind == "explicit":
        if (block.weights is None) == (block.offspring is None):
            raise ConfigError("model.weights", "explicit models need exactly one of weights or offspring")
        if block.weights is not None:
            return _guard("model.weights", lambda: ExplicitModel(weights=tuple(block.weights)))
        return _guard("model.offspring", lambda: ExplicitModel(offspring=tuple(block.offspring)))
    if block.kind == "eldon_wakeley":
        base = _guard("model.base", lambda: parse_measure(_required(block, "base")))
        if not isinstance(base, (PointMassMeasure, BetaMeasure)):
            raise ConfigError("model.base", "Eldon-Wakeley base must be point masses or a Beta measure")
        epsilon = _required(block, "epsilon")
        if not 0.0 < epsilon < 1.0:
            raise ConfigError("model.epsilon", f"epsilon must lie in (0, 1), got {epsilon}")
        return EldonWakeleyModel(base=base, epsilon=epsilon)
    if block.kind == "bottleneck":
        F = _required(block, "F")
        pairs = tuple((int(k), float(w)) for k, w in F) if isinstance(F, list) else None
        power = (F.power, F.scale) if isinstance(F, PowerLawF) else None
        eta_hat = tuple(block.eta_hat) if isinstance(block.eta_hat, list) else None
        a_exp, b_exp = _required(block, "a_exp"), _required(block, "b_exp")
        if not a_exp > 0.0:
            raise ConfigError("model.a_exp", f"a_exp must be positive, got {a_exp}")
        if not 0.0 <= b_exp < 1.0:
            raise ConfigError("model.b_exp", f"b_exp must lie in [0, 1), got {b_exp}")
        return _guard(
            "model.F",
            lambda: BottleneckModel(
                a_exp=a_exp,
                b_exp=b_exp,
                f_pairs=pairs,
                f_power=power,
                nu_bar=block.nu_bar or "uniform",
                dirichlet_shape=block.dirichlet_shape if block.dirichlet_shape is not None else 1.0,
                eta_hat=eta_hat,
            ),
        )
    if block.kind == "pd_power":
        return PDPowerModel(_pd_params(block))
    beta, kappa = _required(block, "beta"), _required(block, "kappa")
    if not beta > 1.0:
        raise ConfigError("model.beta", f"beta must satisfy beta > 1, got {beta}")
    if not 0.5 < kappa <= 1.0:
        raise ConfigError("model.kappa", f"kappa must lie in (1/2, 1], got {kappa}")
    return _guard("model.M", lambda: ExponentialModel(beta, kappa, M=block.M, direct=bool(block.direct)))


def to_limit(config: RunConfig) -> CoagulationMeasure | None:
    if config.limit is None:
        return None
    return _guard("limit", lambda: parse_measure(config.limit))


def to_rho(config: RunConfig) -> MassPartition:
    if config.run.rho_infty is None:
        raise ConfigError("run.rho_infty", "the limiting mass partition is required")
    return _guard("run.rho_infty", lambda: MassPartition.from_unsorted(config.run.rho_infty))


def validate_ranges(config: RunConfig) -> None:
    """Eager range checks across blocks."""
    if config.model is not None:
        to_model_spec(config.model)
    to_limit(config)
    run = config.run
    if run.N_list is not None:
        if not run.N_list or any(N < 1 for N in run.N_list):
            raise ConfigError("run.N_list", "population sizes must be positive")
        if list(run.N_list) != sorted(set(run.N_list)):
            raise ConfigError("run.N_list", "population sizes must be strictly increasing")
    if run.N is not None and run.n > run.N and config.command == "simulate":
        raise ConfigError("run.n", f"sample size n={run.n} exceeds N={run.N}")
    if run.horizon is not None and run.t_max is not None:
        raise ConfigError("run.t_max", "give either run.horizon or run.t_max, not both")
    if any(t < 0.0 for t in run.times):
        raise ConfigError("run.times", "times must be non-negative")
    if run.rho_infty is not None:
        to_rho(config)
    if not all(2 <= b <= 8 for b in run.b_list):
        raise ConfigError("run.b_list", "moment exponents must lie in 2..8")
