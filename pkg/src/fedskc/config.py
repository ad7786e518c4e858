"""Experiment configuration: nested dataclasses, JSON I/O, dotted overrides.

Defaults reproduce the reference federated setting (20 clients, 200 rounds,
40% participation, 10 local epochs, batch 64, SGD at 0.01, temperature 0.08,
review momentum 0.95, one merge neighbour, Dirichlet 0.2).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, get_type_hints

from .losses import METHODS


class ConfigValidationError(ValueError):
    pass


@dataclass
class DataConfig:
    num_classes: int = 10
    input_dim: int = 32
    n_max: int = 500
    rho: float = 1.0
    alpha: float = 0.2
    sep: float = 3.0
    noise: float = 1.0
    test_per_class: int = 100


@dataclass
class FedConfig:
    num_clients: int = 20
    rounds: int = 200
    epsilon: float = 0.4
    workers: int = 1


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    eta: float = 0.01
    hidden: int = 64
    mu_prox: float = 0.01


@dataclass
class SKCConfig:
    tau: float = 0.08
    beta: float = 0.95
    neighbors: int = 1
    lambda_lcl: float = 1.0
    # None means "on for fedskc"; must stay None/False for the baselines
    gda: Optional[bool] = None
    gda_mode: str = "normalized"
    absent_discrepancy: str = "skip"
    gpr: Optional[bool] = None
    gpr_affine: bool = False
    u_floor: float = 1e-8


@dataclass
class TheoryConfig:
    L1: float = 1.0
    L2: float = 0.0
    B: float = 1.0
    sigma2: float = 1.0
    xi: float = 1.0
    loss0: float = 2.302585092994046
    loss_star: float = 0.0


@dataclass
class OutputConfig:
    out_dir: str = "runs"
    record_wall_ms: bool = True


@dataclass
class ExperimentConfig:
    method: str = "fedskc"
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    fed: FedConfig = field(default_factory=FedConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    skc: SKCConfig = field(default_factory=SKCConfig)
    theory: TheoryConfig = field(default_factory=TheoryConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @property
    def use_lcl(self) -> bool:
        return self.method == "fedskc" and self.skc.lambda_lcl != 0.0

    @property
    def use_gda(self) -> bool:
        return self.method == "fedskc" and self.skc.gda is not False

    @property
    def use_gpr(self) -> bool:
        return self.method == "fedskc" and self.skc.gpr is not False

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``{"train.eta": 0.05}``."""
        d = to_dict(self)
        for key, value in overrides.items():
            _set_dotted(d, key, value)
        return from_dict(d)


SECTIONS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_SECTION_TYPES = {name: tp for name, tp in get_type_hints(ExperimentConfig).items()
                  if dataclasses.is_dataclass(tp)}

# (section, key) -> (predicate, description)
_RANGES = {
    ("data", "num_classes"): (lambda v: v >= 2, ">= 2"),
    ("data", "input_dim"): (lambda v: v >= 2, ">= 2"),
    ("data", "n_max"): (lambda v: v >= 1, ">= 1"),
    ("data", "rho"): (lambda v: v >= 1, ">= 1"),
    ("data", "alpha"): (lambda v: v > 0, "> 0"),
    ("data", "sep"): (lambda v: v > 0, "> 0"),
    ("data", "noise"): (lambda v: v > 0, "> 0"),
    ("data", "test_per_class"): (lambda v: v >= 1, ">= 1"),
    ("fed", "num_clients"): (lambda v: v >= 1, ">= 1"),
    ("fed", "rounds"): (lambda v: v >= 1, ">= 1"),
    ("fed", "epsilon"): (lambda v: 0 < v <= 1, "in (0, 1]"),
    ("fed", "workers"): (lambda v: v >= 1, ">= 1"),
    ("train", "epochs"): (lambda v: v >= 1, ">= 1"),
    ("train", "batch_size"): (lambda v: v >= 1, ">= 1"),
    ("train", "eta"): (lambda v: v >= 0, ">= 0"),
    ("train", "hidden"): (lambda v: v >= 1, ">= 1"),
    ("train", "mu_prox"): (lambda v: v >= 0, ">= 0"),
    ("skc", "tau"): (lambda v: v > 0, "> 0"),
    ("skc", "beta"): (lambda v: 0 <= v <= 1, "in [0, 1]"),
    ("skc", "neighbors"): (lambda v: v >= 0, ">= 0"),
    ("skc", "lambda_lcl"): (lambda v: v >= 0, ">= 0"),
    ("skc", "gda_mode"): (lambda v: v in ("normalized", "raw"), "one of normalized, raw"),
    ("skc", "absent_discrepancy"): (lambda v: v in ("skip", "zero"), "one of skip, zero"),
    ("skc", "u_floor"): (lambda v: v > 0, "> 0"),
    ("theory", "L1"): (lambda v: v >= 0, ">= 0"),
    ("theory", "L2"): (lambda v: v >= 0, ">= 0"),
    ("theory", "B"): (lambda v: v >= 0, ">= 0"),
    ("theory", "sigma2"): (lambda v: v >= 0, ">= 0"),
    ("theory", "xi"): (lambda v: v > 0, "> 0"),
}


def _coerce(path: str, tp, value):
    if tp == Optional[bool]:
        if value is None or isinstance(value, bool):
            return value
        raise ConfigValidationError(f"{path}: expected true, false or null, got {value!r}")
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigValidationError(f"{path}: expected a boolean, got {value!r}")
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigValidationError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigValidationError(f"{path}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigValidationError(f"{path}: must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigValidationError(f"{path}: expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported field type {tp!r}")


def _build(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigValidationError(f"{prefix or 'config'}: expected an object")
    hints = get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigValidationError(
            f"unknown key {prefix}{unknown[0]!s}; allowed keys: {', '.join(sorted(known))}")
    kwargs = {}
    for name, value in data.items():
        tp = hints[name]
        path = prefix + name
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, path + ".")
        else:
            kwargs[name] = _coerce(path, tp, value)
    return cls(**kwargs)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.method not in METHODS:
        raise ConfigValidationError(f"method: must be one of {', '.join(METHODS)}, got {cfg.method!r}")
    for (section, key), (ok, desc) in _RANGES.items():
        value = getattr(getattr(cfg, section), key)
        if not ok(value):
            raise ConfigValidationError(f"{section}.{key}: must be {desc}, got {value!r}")
    if cfg.method != "fedskc":
        for flag in ("gda", "gpr", "gpr_affine"):
            if getattr(cfg.skc, flag):
                raise ConfigValidationError(f"skc.{flag}: requires method fedskc")
    if cfg.skc.gpr_affine and cfg.skc.gpr is False:
        raise ConfigValidationError("skc.gpr_affine: requires skc.gpr enabled")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, data, ""))


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def dumps(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True)


def _resolve_key(key: str) -> list[str]:
    parts = key.split(".")
    if len(parts) == 1 and parts[0] not in SECTIONS:
        # bare leaf names are accepted when they are unambiguous
        owners = [s for s, tp in _SECTION_TYPES.items()
                  if parts[0] in {f.name for f in dataclasses.fields(tp)}]
        if len(owners) == 1:
            return [owners[0], parts[0]]
    return parts


def _set_dotted(d: dict, key: str, value: Any) -> None:
    parts = _resolve_key(key)
    node = d
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigValidationError(f"unknown key {key}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigValidationError(f"unknown key {key}")
    node[parts[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    """``"train.eta=0.05"`` -> ``("train.eta", 0.05)``; non-JSON values stay strings."""
    if "=" not in item:
        raise ConfigValidationError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    """Load a JSON config (or defaults when ``path`` is None) and apply overrides."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigValidationError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigValidationError(f"{p}: not valid UTF-8 JSON ({exc})") from exc
    # normalise nested defaults so overrides can address any key
    merged = to_dict(_build(ExperimentConfig, data, ""))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _set_dotted(merged, key, value)
    return from_dict(merged)
