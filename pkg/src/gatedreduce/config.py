"""Sectioned ``key = value`` run configuration.

Example::

    [data]
    path = data/breast.csv
    label_column = class
    drop_columns = id

    [train]
    seed = 75
    phase2_epochs = 0

    [reward]
    variant = 2
    eta = 0.1

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .policy import RewardConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    path: str = ""
    kind: str = "auto"  # auto | structured | sequence
    label_column: str = "-1"
    drop_columns: list = field(default_factory=list)
    missing_policy: str = "impute"
    labels_path: str = ""
    test_path: str = ""
    test_labels_path: str = ""
    expected_length: int = 0
    test_fraction: float = 1.0 / 3.0

    def resolved_kind(self, path=None):
        if self.kind != "auto":
            return self.kind
        p = Path(path or self.path)
        if p.suffix.lower() in (".csv", ".tsv"):
            return "structured"
        return "sequence"


@dataclass
class EvalConfig:
    folds: int = 10
    runs: int = 10
    jobs: int = 1


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self):
        return asdict(self)


_MODEL_KEYS = ("embed_dim", "hidden_dim", "policy_hidden")


def _convert(raw, proto, where):
    try:
        if isinstance(proto, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
        if isinstance(proto, list):
            return [p.strip() for p in raw.split(",") if p.strip()]
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(proto).__name__}") from None


def _section_targets():
    """section -> {key: (holder_name, attr_name, prototype)}."""
    train_defaults = TrainConfig()
    reward_defaults = RewardConfig()
    targets = {
        "data": {f.name: ("data", f.name, getattr(DataConfig(), f.name)) for f in fields(DataConfig)},
        "eval": {f.name: ("eval", f.name, getattr(EvalConfig(), f.name)) for f in fields(EvalConfig)},
        "model": {k: ("train", k, getattr(train_defaults, k)) for k in _MODEL_KEYS},
        "train": {
            f.name: ("train", f.name, getattr(train_defaults, f.name))
            for f in fields(TrainConfig)
            if f.name not in _MODEL_KEYS and f.name != "reward"
        },
        "reward": {f.name: ("reward", f.name, getattr(reward_defaults, f.name)) for f in fields(RewardConfig)},
    }
    return targets


def build_config(pairs):
    """``pairs`` maps ``"section.key"`` to raw strings; later keys override earlier ones."""
    targets = _section_targets()
    values = {"data": {}, "eval": {}, "train": {}, "reward": {}}
    for dotted, raw in pairs.items():
        section, _, key = dotted.partition(".")
        if section not in targets:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in targets[section]:
            raise ConfigError(f"unknown config key {key!r} in [{section}]")
        holder, attr, proto = targets[section][key]
        values[holder][attr] = _convert(raw, proto, dotted)
    try:
        reward = RewardConfig(**values["reward"])
        train = TrainConfig(reward=reward, **values["train"])
        data = DataConfig(**values["data"])
        ev = EvalConfig(**values["eval"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if data.kind not in ("auto", "structured", "sequence"):
        raise ConfigError(f"data.kind must be auto, structured or sequence, got {data.kind!r}")
    return RunConfig(data, train, ev)


def read_config_file(path):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    pairs = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            pairs[f"{section}.{key}"] = raw
    base = Path(path).parent
    for key in ("data.path", "data.labels_path", "data.test_path", "data.test_labels_path"):
        if pairs.get(key) and not Path(pairs[key]).is_absolute():
            pairs[key] = os.path.normpath(base / pairs[key])
    return pairs


def load_config(path=None, overrides=None):
    pairs = read_config_file(path) if path else {}
    pairs.update(overrides or {})
    return build_config(pairs)
