"""PPO building blocks: GAE, the clipped surrogate and per-batch value normalisation."""

import logging
from collections.abc import Sequence

import numpy as np
import torch

from jamshield.errors import DomainError
from jamshield.marl.networks import DTYPE

logger = logging.getLogger(__name__)


def compute_gae(
    rewards: Sequence[float],
    values: Sequence[float],
    gamma: float,
    lam: float,
    last_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates and returns for one trajectory.

    `last_value` bootstraps the state after the final reward (0 for a terminal).
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise DomainError("rewards and values must be aligned")
    next_values = np.append(v[1:], last_value)
    deltas = r + gamma * next_values - v
    advantages = np.zeros_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + v


def ppo_clip_objective(
    ratio: torch.Tensor | float, advantage: torch.Tensor | float, eps: float
) -> torch.Tensor:
    ratio = torch.as_tensor(ratio, dtype=DTYPE)
    advantage = torch.as_tensor(advantage, dtype=DTYPE)
    if torch.any(ratio <= 0):
        raise DomainError("probability ratios must be > 0")
    clipped = torch.clamp(ratio, 1.0 - eps, 1.0 + eps)
    return torch.minimum(ratio * advantage, clipped * advantage)


def standardize(x: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    if x.numel() < 2:
        return x - x.mean()
    return (x - x.mean()) / (x.std(unbiased=False) + eps)


class ValueNormalizer:
    """Mean/variance of the latest batch of return targets.

    Critic targets are the batch's returns standardised with these moments;
    rollouts denormalise value estimates with the same moments.
    """

    def __init__(self) -> None:
        self.mean = 0.0
        self.var = 1.0
        self.count = 0.0

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size == 0:
            return
        self.mean, self.var, self.count = float(x.mean()), float(x.var()), float(x.size)

    @property
    def std(self) -> float:
        return float(np.sqrt(max(self.var, 1e-8)))

    def normalize(self, x: np.ndarray | torch.Tensor) -> np.ndarray | torch.Tensor:
        return (x - self.mean) / self.std

    def denormalize(self, x: np.ndarray | torch.Tensor) -> np.ndarray | torch.Tensor:
        return x * self.std + self.mean

    def state(self) -> np.ndarray:
        return np.array([self.mean, self.var, self.count])

    def load_state(self, state: np.ndarray) -> None:
        self.mean, self.var, self.count = (float(v) for v in state)
