"""Shared fixtures for the MARL tests."""

import numpy as np
import pytest

from jamshield.config import TrainerConfig
from jamshield.marl.policy import AgentSpec, HeadSpec


class BanditEnv:
    """One-step bandit: each agent earns 1 for pulling the target arm."""

    def __init__(self, n_agents: int = 1, n_arms: int = 4, target: int = 2) -> None:
        self.target = target
        self.agent_specs = [
            AgentSpec(f"agent{i}", 1, HeadSpec(discrete=(n_arms,))) for i in range(n_agents)
        ]

    def reset(self, seed=None):
        return [np.ones(1) for _ in self.agent_specs]

    def step(self, actions):
        rewards = [1.0 if a.discrete[0] == self.target else 0.0 for a in actions]
        return self.reset(), rewards, True, {}


@pytest.fixture
def bandit_factory():
    def factory(n_agents=1):
        return lambda seed: BanditEnv(n_agents=n_agents)

    return factory


@pytest.fixture
def bandit_config():
    return TrainerConfig(
        epochs=200,
        lr_start=1e-2,
        lr_end=1e-3,
        hidden_widths=[32, 32],
        episodes_per_iter=16,
        workers=2,
        log_every=1000,
    )
