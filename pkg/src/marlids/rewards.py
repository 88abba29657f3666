"""Reward policies and cost-sensitive sample weights for both agent levels."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping

from .errors import ConfigError, ValidationError


class L1Category(IntEnum):
    """A label as seen by one first-level agent; values double as action indices."""

    AGENT_ATTACK = 0
    OTHER_ATTACK = 1
    NORMAL = 2


@dataclass(frozen=True)
class RewardConfig:
    k: float = 5.0
    l1_weight_agent_class: float = 2.0
    l1_weight_other: float = 1.0
    decider_beta: float = 0.5
    decider_weight_cap: float = 100.0
    # explicit per-label decider weights; overrides the frequency rule when set
    decider_class_weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.k > 1:
            raise ConfigError(f"reward emphasis k must be > 1, got {self.k}")
        if not (self.l1_weight_agent_class > 0 and self.l1_weight_other > 0):
            raise ConfigError("L1 sample weights must be strictly positive")
        if not self.l1_weight_agent_class > self.l1_weight_other:
            raise ConfigError(
                "the agent-class sample weight must exceed the other-class weight "
                f"({self.l1_weight_agent_class} <= {self.l1_weight_other})")
        if self.decider_beta < 0:
            raise ConfigError(f"decider_beta must be >= 0, got {self.decider_beta}")
        if not self.decider_weight_cap >= 1:
            raise ConfigError(f"decider_weight_cap must be >= 1, got {self.decider_weight_cap}")
        if any(not w > 0 for w in self.decider_class_weights.values()):
            raise ConfigError("decider class weights must be strictly positive")


def _require_known(label, registry):
    if registry is not None and label not in registry:
        raise ValidationError(f"unknown label {label!r}")


def project_label(label: str, agent_class: str, benign_label: str = "BENIGN",
                  registry: Iterable[str] | None = None) -> L1Category:
    if registry is not None:
        registry = set(registry)
        _require_known(label, registry)
    if label == agent_class:
        return L1Category.AGENT_ATTACK
    if label == benign_label:
        return L1Category.NORMAL
    return L1Category.OTHER_ATTACK


def l1_reward(true_category, action, k: float) -> float:
    """Reward for a first-level agent choosing ``action`` on a record of ``true_category``.

    Correct calls on the agent's own class earn ``k``; any miss on that class,
    and any false alarm into it, costs ``k``.  Everything else is +1/-1.
    """
    if not k > 1:
        raise ConfigError(f"reward emphasis k must be > 1, got {k}")
    true_category = L1Category(true_category)
    action = L1Category(action)
    if true_category is L1Category.AGENT_ATTACK:
        return float(k) if action is L1Category.AGENT_ATTACK else -float(k)
    if action is true_category:
        return 1.0
    if action is L1Category.AGENT_ATTACK:
        return -float(k)
    return -1.0


def l1_reward_table(k: float):
    """3x3 table ``[true][action]`` of first-level rewards."""
    return [[l1_reward(t, a, k) for a in L1Category] for t in L1Category]


def decider_reward(action_label, true_label, registry: Iterable[str] | None = None) -> float:
    if registry is not None:
        registry = set(registry)
        _require_known(action_label, registry)
        _require_known(true_label, registry)
    return 1.0 if action_label == true_label else -1.0


def l1_sample_weight(label: str, agent_class: str, cfg: RewardConfig = RewardConfig()) -> float:
    return cfg.l1_weight_agent_class if label == agent_class else cfg.l1_weight_other


def decider_sample_weights(class_counts: Mapping[str, int], beta: float = 0.5,
                           cap: float = 100.0) -> dict[str, float]:
    """Inverse-frequency weights ``(max_count / count) ** beta``, capped at ``cap``.

    The most frequent class always gets weight 1.
    """
    if not class_counts:
        raise ValidationError("class_counts is empty")
    for label, count in class_counts.items():
        if count < 1:
            raise ValidationError(f"class {label!r} has count {count}; all counts must be >= 1")
    top = max(class_counts.values())
    return {label: min(cap, (top / count) ** beta) for label, count in class_counts.items()}
