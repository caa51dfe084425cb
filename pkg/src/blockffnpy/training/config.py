# Copyright 2026 Jonas Claes
# SPDX-License-Identifier: Apache-2.0
"""
Training configuration: a tree of frozen dataclasses loaded from TOML.

Tables mirror the dataclass fields (``[model]``, ``[model.ffn]``,
``[objective]``, ``[optim]``, ``[data]``, top-level ``seed``). Unknown keys
are errors, missing keys keep their defaults.
"""
import json
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Type, TypeVar

from blockffnpy.common import ConfigError
from blockffnpy.ffn import FfnConfig
from blockffnpy.objectives import ObjectiveConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ConfigT = TypeVar("ConfigT")


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the toy language model; ``ffn.d_h`` is its hidden width."""
    ffn: FfnConfig = field(default_factory=FfnConfig)
    n_layers: int = 2
    vocab_size: int = 257
    context_length: int = 64
    n_heads: int = 4

    def __post_init__(self) -> None:
        if min(self.n_layers, self.vocab_size, self.context_length, self.n_heads) <= 0:
            raise ConfigError("n_layers, vocab_size, context_length and n_heads must be positive")
        if self.ffn.d_h % self.n_heads:
            raise ConfigError(f"d_h {self.ffn.d_h} is not divisible by {self.n_heads} heads")

    @property
    def d_h(self) -> int:
        """Hidden width."""
        return self.ffn.d_h


@dataclass(frozen=True)
class OptimConfig:
    """AdamW and the warmup-stable-decay learning rate schedule."""
    lr: float = 3e-3
    warmup_steps: int = 50
    stable_steps: int = 800
    decay_steps: int = 150
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    grad_clip: float = 1.0
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.eps <= 0:
            raise ConfigError("lr and eps must be positive")
        if min(self.warmup_steps, self.stable_steps, self.decay_steps) < 0:
            raise ConfigError("schedule step counts must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.weight_decay < 0 or self.grad_clip <= 0:
            raise ConfigError("weight_decay must be non-negative and grad_clip positive")


@dataclass(frozen=True)
class DataConfig:
    """Corpus files and the length of the run. An empty heldout path reuses the corpus."""
    corpus: str = "corpus.txt"
    heldout: str = ""
    batch_size: int = 8
    steps: int = 1000
    log_interval: int = 10
    checkpoint_interval: int = 500
    out_dir: str = "runs/default"

    def __post_init__(self) -> None:
        if min(self.batch_size, self.steps, self.log_interval, self.checkpoint_interval) <= 0:
            raise ConfigError("batch_size, steps and the intervals must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training run needs."""
    model: ModelConfig = field(default_factory=ModelConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model.context_length < self.objective.chunk_len:
            raise ConfigError(
                f"context_length {self.model.context_length} is shorter than "
                f"chunk_len {self.objective.chunk_len}")


def _coerce(expected: Any, value: Any, where: str) -> Any:
    if isinstance(expected, type) and issubclass(expected, Enum):
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean, got {value!r}")
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if expected is str and not isinstance(value, str):
        raise ConfigError(f"{where} must be a string, got {value!r}")
    return value


def _from_table(cls: Type[ConfigT], table: Mapping[str, Any], where: str) -> ConfigT:
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{where or 'top level'}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(table) - set(known))
    if unknown:
        raise ConfigError(f"Unknown keys in [{where or 'top level'}]: {', '.join(unknown)}")
    kwargs = {}
    for name, value in table.items():
        key = f"{where}.{name}" if where else name
        if is_dataclass(known[name].type):
            kwargs[name] = _from_table(known[name].type, value, key)
        else:
            kwargs[name] = _coerce(known[name].type, value, key)
    try:
        return cls(**kwargs)
    except TypeError as error:
        raise ConfigError(f"Invalid [{where or 'top level'}]: {error}") from error


def config_from_dict(data: Mapping[str, Any]) -> TrainConfig:
    """Build a TrainConfig from nested mappings (parsed TOML or a checkpoint echo)."""
    return _from_table(TrainConfig, data, "")


def load_config(path: Path) -> TrainConfig:
    """Read a TOML training configuration."""
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as error:
        raise ConfigError(f"Cannot read config {path}: {error}") from error
    except tomllib.TOMLDecodeError as error:
        raise ConfigError(f"Invalid TOML in {path}: {error}") from error
    return config_from_dict(data)


def config_to_dict(config: TrainConfig) -> dict:
    """Nested plain mapping; enum members become their lower-case names."""
    def _plain(value):
        if isinstance(value, Enum):
            return value.name.lower()
        if isinstance(value, dict):
            return {key: _plain(item) for key, item in value.items()}
        return value

    return _plain(asdict(config))


def config_to_json(config: TrainConfig) -> str:
    """Canonical JSON: sorted keys, no whitespace."""
    return json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
