"""Hybrid categorical / squashed-Gaussian policy heads and the multi-agent env interface."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.distributions import Categorical, Distribution, Normal, kl_divergence

from jamshield.errors import InapplicableError
from jamshield.marl.networks import DTYPE, Mlp, MlpSpec

logger = logging.getLogger(__name__)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


@dataclass(frozen=True)
class HeadSpec:
    discrete: tuple[int, ...] = ()
    continuous: int = 0

    @property
    def n_outputs(self) -> int:
        return sum(self.discrete) + self.continuous


@dataclass(frozen=True)
class AgentSpec:
    name: str
    obs_dim: int
    head: HeadSpec


@dataclass
class AgentAction:
    discrete: list[int] = field(default_factory=list)
    continuous: np.ndarray = field(default_factory=lambda: np.zeros(0))


class MultiAgentEnv(Protocol):
    agent_specs: list[AgentSpec]

    def reset(self, seed: int | None = None) -> list[np.ndarray]: ...

    def step(self, actions: Sequence[AgentAction]) -> tuple[list[np.ndarray], list[float], bool, dict]: ...


@dataclass
class HeadOutputs:
    logits: torch.Tensor
    mean: torch.Tensor
    log_std: torch.Tensor


@dataclass
class SampledActions:
    discrete: torch.Tensor
    pre_squash: torch.Tensor
    continuous: torch.Tensor
    log_prob: torch.Tensor
    entropy: torch.Tensor

    def to_agent_actions(self) -> list[AgentAction]:
        return [
            AgentAction(
                discrete=[int(v) for v in self.discrete[i].tolist()],
                continuous=self.continuous[i].detach().numpy().copy(),
            )
            for i in range(self.discrete.shape[0])
        ]


class HybridActor(nn.Module):
    def __init__(
        self,
        obs_dim: int,
        head: HeadSpec,
        hidden: Sequence[int] = (128, 128),
        log_std_init: float = -0.5,
        generator: torch.Generator | None = None,
    ) -> None:
        super().__init__()
        self.head = head
        self.body = Mlp(MlpSpec.actor(obs_dim, head.n_outputs, hidden), generator, output_gain=0.01)
        self.log_std = nn.Parameter(torch.full((head.continuous,), log_std_init, dtype=DTYPE))

    def forward(self, obs: torch.Tensor) -> HeadOutputs:
        out = self.body(obs)
        n_disc = sum(self.head.discrete)
        log_std = self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
        return HeadOutputs(out[..., :n_disc], out[..., n_disc:], log_std)


def tanh_log_det_jacobian(u: torch.Tensor) -> torch.Tensor:
    """log(1 - tanh(u)^2), stable for large |u|."""
    return 2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))


def head_distributions(outputs: HeadOutputs, head: HeadSpec) -> tuple[list[Categorical], Normal | None]:
    cats = []
    if head.discrete:
        cats = [Categorical(logits=l) for l in torch.split(outputs.logits, list(head.discrete), dim=-1)]
    normal = None
    if head.continuous:
        normal = Normal(outputs.mean, outputs.log_std.exp().expand_as(outputs.mean))
    return cats, normal


def sample_actions(
    outputs: HeadOutputs,
    head: HeadSpec,
    generator: torch.Generator | None = None,
    deterministic: bool = False,
) -> SampledActions:
    cats, normal = head_distributions(outputs, head)
    batch = outputs.logits.shape[:-1]
    log_prob = torch.zeros(batch, dtype=DTYPE)
    entropy = torch.zeros(batch, dtype=DTYPE)

    picks = []
    for dist in cats:
        if deterministic:
            a = dist.logits.argmax(dim=-1)
        else:
            a = torch.multinomial(dist.probs.reshape(-1, dist.probs.shape[-1]), 1, generator=generator)
            a = a.reshape(batch)
        log_prob = log_prob + dist.log_prob(a)
        entropy = entropy + dist.entropy()
        picks.append(a)
    discrete = torch.stack(picks, dim=-1) if picks else torch.zeros((*batch, 0), dtype=torch.long)

    if normal is not None:
        if deterministic:
            u = outputs.mean
        else:
            noise = torch.randn(outputs.mean.shape, generator=generator, dtype=DTYPE)
            u = outputs.mean + normal.stddev * noise
        log_prob = log_prob + (normal.log_prob(u) - tanh_log_det_jacobian(u)).sum(-1)
        entropy = entropy + normal.entropy().sum(-1)
    else:
        u = outputs.mean
    return SampledActions(discrete, u, torch.tanh(u), log_prob, entropy)


def evaluate_actions(
    outputs: HeadOutputs, head: HeadSpec, discrete: torch.Tensor, pre_squash: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Joint log-probability and entropy of stored actions under the current heads."""
    cats, normal = head_distributions(outputs, head)
    batch = outputs.logits.shape[:-1]
    log_prob = torch.zeros(batch, dtype=DTYPE)
    entropy = torch.zeros(batch, dtype=DTYPE)
    for i, dist in enumerate(cats):
        log_prob = log_prob + dist.log_prob(discrete[..., i])
        entropy = entropy + dist.entropy()
    if normal is not None:
        log_prob = log_prob + (normal.log_prob(pre_squash) - tanh_log_det_jacobian(pre_squash)).sum(-1)
        entropy = entropy + normal.entropy().sum(-1)
    return log_prob, entropy


def kl_proximity(p: Distribution, q: Distribution) -> torch.Tensor:
    """KL(p || q) for categorical or diagonal-Gaussian pairs over the same support."""
    if isinstance(p, Categorical) and isinstance(q, Categorical):
        if p.logits.shape[-1] != q.logits.shape[-1]:
            raise InapplicableError("categoricals over different numbers of classes")
        return kl_divergence(p, q)
    if isinstance(p, Normal) and isinstance(q, Normal):
        if p.loc.shape[-1:] != q.loc.shape[-1:]:
            raise InapplicableError("Gaussians of different dimension")
        return kl_divergence(p, q).sum(-1) if p.loc.dim() > 0 else kl_divergence(p, q)
    raise InapplicableError(f"no KL between {type(p).__name__} and {type(q).__name__}")


def agent_kl_proximity(
    out_i: HeadOutputs, head_i: HeadSpec, out_j: HeadOutputs, head_j: HeadSpec
) -> torch.Tensor:
    """Sum of KL terms over head pairs with identical support."""
    cats_i, normal_i = head_distributions(out_i, head_i)
    cats_j, normal_j = head_distributions(out_j, head_j)
    terms = [
        kl_proximity(p, q)
        for p, q in zip(cats_i, cats_j)
        if p.logits.shape[-1] == q.logits.shape[-1]
    ]
    if normal_i is not None and normal_j is not None and head_i.continuous == head_j.continuous:
        terms.append(kl_proximity(normal_i, normal_j))
    if not terms:
        raise InapplicableError("agents share no action head with identical support")
    return torch.stack(terms).sum(0)
