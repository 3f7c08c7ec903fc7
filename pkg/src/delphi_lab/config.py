"""Experiment configuration: TOML files with one table per concern.

Example::

    seed = 3
    rounds = 30

    [partition]
    scheme = "imbalanced"
    clients = 6
    attackers = 2

    [attack]
    method = "bo"
    num_neurons = 5

Every key is optional; unknown keys are rejected.
"""
from __future__ import annotations

import copy
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .attack.config import AttackConfig


class ConfigError(Exception):
    """Base class; ``exit_code`` is what the CLI returns."""

    exit_code = 2


class ConfigFileError(ConfigError):
    """Missing or unreadable config file; reported as a file-system failure."""

    exit_code = 4


class ConfigSyntaxError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


ATTACK_ALIASES = {"delphi_bo": "bo", "delphi_lstr": "lstr"}


@dataclass
class DatasetConfig:
    num_classes: int = 10
    dim: int = 20
    n_per_class: int = 120
    n_test_per_class: int = 60
    spread: float = 1.0
    center_scale: float = 1.0


@dataclass
class PartitionConfig:
    scheme: str = "iid"
    clients: int = 6
    attackers: int = 2


@dataclass
class AggregationConfig:
    method: str = "fedavg"
    # Krum's assumed number of Byzantine clients; defaults to the attacker count
    f: int | None = None
    # number of models averaged by multi-Krum; defaults to K - f
    multi_m: int | None = None


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [32])


@dataclass
class TrainingConfig:
    lr: float = 0.05
    local_epochs: int = 2
    batch_size: int = 32


@dataclass
class AttackSettings(AttackConfig):
    method: str = "none"
    # fixed expected perturbation for the bound; measured per round when unset
    epsilon: float | None = None


@dataclass
class ExperimentConfig:
    seed: int = 0
    rounds: int = 50
    out_dir: str = "results"
    workers: int = 1
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    attack: AttackSettings = field(default_factory=AttackSettings)

    @property
    def krum_f(self) -> int:
        return self.partition.attackers if self.aggregation.f is None else self.aggregation.f


SECTIONS = {
    "dataset": DatasetConfig,
    "partition": PartitionConfig,
    "aggregation": AggregationConfig,
    "model": ModelConfig,
    "training": TrainingConfig,
    "attack": AttackSettings,
}


OPTIONAL_TYPES = {"f": int, "multi_m": int, "epsilon": float}


def _coerce(name, value, default):
    """Check ``value`` against the type of the field's default."""
    if default is None:
        default = OPTIONAL_TYPES[name.rsplit(".", 1)[-1]]()
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value)
    else:
        ok = True
    if not ok:
        kind = type(default).__name__
        raise ConfigValidationError(name, f"expected {kind}, got {value!r}")
    return value


def _build_section(cls, data: dict, prefix: str):
    obj = cls.__new__(cls)
    defaults = {f.name: (f.default if f.default is not dataclasses.MISSING else f.default_factory())
                for f in dataclasses.fields(cls)}
    unknown = set(data) - set(defaults)
    if unknown:
        raise ConfigValidationError(f"{prefix}{sorted(unknown)[0]}", "unknown key")
    for name, default in defaults.items():
        value = data.get(name, default)
        if name in data:
            value = _coerce(prefix + name, value, default)
        object.__setattr__(obj, name, value)
    return obj


def from_dict(data: dict) -> ExperimentConfig:
    data = copy.deepcopy(data)
    sections = {}
    for name, cls in SECTIONS.items():
        raw = data.pop(name, {})
        if not isinstance(raw, dict):
            raise ConfigValidationError(name, "expected a table")
        sections[name] = _build_section(cls, raw, f"{name}.")
    top = _build_section(_TopLevel, data, "")
    cfg = ExperimentConfig(top.seed, top.rounds, top.out_dir, top.workers, **sections)
    if cfg.attack.method in ATTACK_ALIASES:
        cfg.attack.method = ATTACK_ALIASES[cfg.attack.method]
    validate(cfg)
    return cfg


@dataclass
class _TopLevel:
    seed: int = 0
    rounds: int = 50
    out_dir: str = "results"
    workers: int = 1


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    p, d, t, a = cfg.partition, cfg.dataset, cfg.training, cfg.attack
    checks = [
        ("rounds", cfg.rounds >= 1, "must be >= 1"),
        ("workers", cfg.workers >= 1, "must be >= 1"),
        ("partition.clients", p.clients >= 2, "must be >= 2"),
        ("partition.attackers", 1 <= p.attackers < p.clients,
         f"must satisfy 1 <= attackers < clients ({p.clients})"),
        ("partition.scheme", p.scheme in ("iid", "imbalanced"), "must be 'iid' or 'imbalanced'"),
        ("dataset.num_classes", d.num_classes >= 2, "must be >= 2"),
        ("dataset.dim", d.dim >= 2, "must be >= 2"),
        ("dataset.n_per_class", d.n_per_class >= 1, "must be >= 1"),
        ("dataset.n_test_per_class", d.n_test_per_class >= 1, "must be >= 1"),
        ("dataset.spread", d.spread > 0, "must be > 0"),
        ("dataset.center_scale", d.center_scale > 0, "must be > 0"),
        ("model.hidden", len(cfg.model.hidden) >= 1 and min(cfg.model.hidden) >= 1,
         "need at least one hidden layer of width >= 1"),
        ("training.lr", t.lr > 0, "must be > 0"),
        ("training.local_epochs", t.local_epochs >= 1, "must be >= 1"),
        ("training.batch_size", t.batch_size >= 1, "must be >= 1"),
        ("aggregation.method", cfg.aggregation.method in ("fedavg", "krum"),
         "must be 'fedavg' or 'krum'"),
        ("attack.method", a.method in ("none", "bo", "lstr"), "must be 'none', 'bo' or 'lstr'"),
        ("attack.num_neurons", 1 <= a.num_neurons <= cfg.model.hidden[0],
         f"must be between 1 and the first hidden width ({cfg.model.hidden[0]})"),
        ("attack.epsilon", a.epsilon is None or a.epsilon >= 0, "must be >= 0"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise ConfigValidationError(name, msg)
    if cfg.aggregation.method == "krum":
        f = cfg.krum_f
        if p.clients < f + 3:
            raise ConfigValidationError("aggregation.f", f"Krum needs clients >= f + 3 (f={f})")
        m = cfg.aggregation.multi_m
        if m is not None and not 1 <= m <= p.clients:
            raise ConfigValidationError("aggregation.multi_m", "must be in [1, clients]")
    try:
        AttackConfig.validate(a)
    except ValueError as exc:
        raise ConfigValidationError("attack", str(exc)) from None
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigFileError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigFileError(f"cannot read {path}: {exc}") from None
    return parse_string(text, source=str(path))


def parse_string(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)"
        raise ConfigSyntaxError(f"{source}: {exc}") from None
    return from_dict(data)


def to_dict(cfg: ExperimentConfig) -> dict:
    def strip(d):
        return {k: (strip(v) if isinstance(v, dict) else v) for k, v in d.items() if v is not None}

    return strip(dataclasses.asdict(cfg))


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def save_config(cfg: ExperimentConfig, path: str | Path):
    Path(path).write_text(dumps(cfg), encoding="utf-8")


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply dotted-key overrides (``{"attack.method": "bo"}``) and re-validate.

    A value of ``None`` removes the key so the field takes its default.
    """
    data = to_dict(cfg)
    for key, value in overrides.items():
        node = data
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        if value is None:
            # None means "unset": fall back to the default
            node.pop(leaf, None)
        else:
            node[leaf] = value
    return from_dict(data)
