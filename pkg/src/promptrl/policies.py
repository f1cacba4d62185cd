"""Refinement policies: the trained PPO agent and the non-learning baselines.

Direct, GA-only, and Rewrite-only replay the corresponding single strategy
inside the same environment and step cap; Random-Hybrid samples the three
actions uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionMismatch
from .ppo import PolicyParams, policy_forward, sample_action
from .transforms import ActionId


class PolicyKind(Enum):
    PPO = "ppo"
    DIRECT = "direct"
    GA_ONLY = "ga"
    REWRITE_ONLY = "rewrite"
    RANDOM_HYBRID = "random"


_CONSTANT_ACTION = {
    PolicyKind.DIRECT: ActionId.DIRECT_GENERATION,
    PolicyKind.GA_ONLY: ActionId.GENETIC_MUTATION,
    PolicyKind.REWRITE_ONLY: ActionId.SEMANTIC_REWRITE,
}


@dataclass(frozen=True)
class RefinementPolicy:
    kind: PolicyKind
    params: PolicyParams | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind == PolicyKind.PPO and self.params is None:
            raise ValueError("a PPO policy needs parameters")


def choose_action(
    policy: RefinementPolicy, state: np.ndarray, rng: np.random.Generator
) -> tuple[ActionId, float | None]:
    """Pick the next transformation; log-probability only for the PPO kind."""
    if policy.kind in _CONSTANT_ACTION:
        return _CONSTANT_ACTION[policy.kind], None
    if policy.kind == PolicyKind.RANDOM_HYBRID:
        return ActionId(int(rng.integers(3))), None
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (policy.params.dim,):
        raise DimensionMismatch(f"state shape {state.shape} != ({policy.params.dim},)")
    probs, _ = policy_forward(policy.params, state)
    return sample_action(probs, rng)
