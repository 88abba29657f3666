"""Run configuration: hyperparameters, reward settings, data options, seeds.

Config files are YAML with four flat sections::

    hyperparameters:      # names follow the DQN hyperparameter table
      replay_buffer_size: 10000000
      minibatch_size: 1000000
      hidden_layers: [128, 128]
      learning_rate: 0.01
      gamma: 0.01
      epsilon_decay: 0.01
      episodes: 300
    reward: {k: 5, l1_weight_agent_class: 2.0, l1_weight_other: 1.0, decider_beta: 0.5}
    data: {benign_label: BENIGN, benign_target: 700000, train_fraction: 0.8}
    run: {seed: 0, threads: 1}

Unknown keys are rejected so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .rewards import RewardConfig

CONFIG_ENV = "MARLIDS_CONFIG"

_SECTIONS = {
    "hyperparameters": ("replay_buffer_size", "minibatch_size", "hidden_layers", "learning_rate",
                        "gamma", "epsilon_decay", "episodes", "adam_beta1", "adam_beta2",
                        "adam_epsilon"),
    "reward": ("k", "l1_weight_agent_class", "l1_weight_other", "decider_beta",
               "decider_weight_cap", "decider_class_weights"),
    "data": ("benign_label", "benign_target", "train_fraction", "label_column", "grouping",
             "exclude_labels"),
    "run": ("seed", "threads", "shuffle", "softmax_decider_inputs", "dtype", "adapt_episodes",
            "adapt_new_fraction"),
}


@dataclass(frozen=True)
class RunConfig:
    # DQN hyperparameter table
    replay_buffer_size: int = 10_000_000
    minibatch_size: int = 1_000_000
    hidden_layers: tuple[int, ...] = (128, 128)
    learning_rate: float = 0.01
    gamma: float = 0.01
    epsilon_decay: float = 0.01
    episodes: int = 300
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    # cost-sensitive rewards and weights
    k: float = 5.0
    l1_weight_agent_class: float = 2.0
    l1_weight_other: float = 1.0
    decider_beta: float = 0.5
    decider_weight_cap: float = 100.0
    decider_class_weights: Mapping[str, float] = field(default_factory=dict)
    # preprocessing
    benign_label: str = "BENIGN"
    benign_target: int | None = 700_000
    train_fraction: float = 0.8
    label_column: str = "Label"
    grouping: Mapping[str, str] | None = None
    exclude_labels: tuple[str, ...] = ()
    # execution
    seed: int = 0
    threads: int = 1
    shuffle: bool = False
    softmax_decider_inputs: bool = False
    dtype: str = "float32"
    adapt_episodes: int = 20
    adapt_new_fraction: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        object.__setattr__(self, "exclude_labels", tuple(self.exclude_labels))
        object.__setattr__(self, "decider_class_weights", dict(self.decider_class_weights))
        if self.grouping is not None:
            object.__setattr__(self, "grouping", dict(self.grouping))
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not self.epsilon_decay > 0:
            raise ConfigError(f"epsilon_decay must be > 0, got {self.epsilon_decay}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("replay_buffer_size", "minibatch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.episodes < 0 or self.adapt_episodes < 0:
            raise ConfigError("episode counts must be >= 0")
        if any(h < 1 for h in self.hidden_layers):
            raise ConfigError("hidden layer widths must be >= 1")
        if not 0 < self.train_fraction < 1 or not 0 < self.adapt_new_fraction <= 1:
            raise ConfigError("fractions must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")
        self.reward  # validates k and weights

    @property
    def reward(self) -> RewardConfig:
        return RewardConfig(k=self.k, l1_weight_agent_class=self.l1_weight_agent_class,
                            l1_weight_other=self.l1_weight_other,
                            decider_beta=self.decider_beta,
                            decider_weight_cap=self.decider_weight_cap,
                            decider_class_weights=self.decider_class_weights)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        """Sectioned plain-data form; the inverse of :func:`from_dict`."""
        out = {}
        for section, names in _SECTIONS.items():
            out[section] = {}
            for name in names:
                value = getattr(self, name)
                if isinstance(value, tuple):
                    value = list(value)
                elif isinstance(value, Mapping):
                    value = dict(value)
                out[section][name] = value
        return out


def from_dict(data: Mapping[str, Any] | None, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    changes = {}
    for section, values in (data or {}).items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        for key, value in (values or {}).items():
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section {section!r}")
            changes[key] = value
    known = {f.name for f in fields(RunConfig)}
    assert set(changes) <= known
    try:
        return dataclasses.replace(base, **changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> RunConfig:
    """Load a YAML config; falls back to $MARLIDS_CONFIG, then to defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, allow_unicode=True)
