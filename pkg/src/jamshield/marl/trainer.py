"""PPO / IPPO / MAPPO training loop over any MultiAgentEnv."""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.optim.lr_scheduler import LambdaLR

from jamshield.config import TrainerConfig, Variant
from jamshield.errors import DivergenceError, InapplicableError
from jamshield.marl.checkpoint import load_tensors, save_tensors
from jamshield.marl.networks import DTYPE, Mlp, MlpSpec
from jamshield.marl.policy import (
    AgentAction,
    AgentSpec,
    HeadSpec,
    HybridActor,
    MultiAgentEnv,
    SampledActions,
    agent_kl_proximity,
    evaluate_actions,
    sample_actions,
)
from jamshield.marl.ppo import ValueNormalizer, compute_gae, ppo_clip_objective, standardize

logger = logging.getLogger(__name__)

CENTRALIZED_VARIANTS = frozenset({"mappo", "mappo-det"})


def derive_seed(master: int, *key: int) -> int:
    """Counter-based child seed: child k never depends on how many siblings exist."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def torch_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(seed)
    return g


def lr_decay(config: TrainerConfig) -> float:
    return (config.lr_end / config.lr_start) ** (1.0 / max(1, config.epochs - 1))


def lr_at(epoch: int, config: TrainerConfig) -> float:
    return config.lr_start * lr_decay(config) ** epoch


def batch_size_at(epoch: int, config: TrainerConfig) -> int:
    """Minibatch size doubling on an even milestone grid from batch_start to batch_end."""
    doublings = round(math.log2(config.batch_end / config.batch_start))
    if doublings == 0:
        return config.batch_start
    passed = min(doublings, epoch * (doublings + 1) // config.epochs)
    return config.batch_start * 2**passed


class JointAgentView:
    """Collapse a multi-agent env into one agent with the joint observation and all heads."""

    def __init__(self, env: MultiAgentEnv) -> None:
        self.env = env
        self._specs = list(env.agent_specs)
        self.agent_specs = [
            AgentSpec(
                "joint",
                sum(s.obs_dim for s in self._specs),
                HeadSpec(
                    discrete=tuple(d for s in self._specs for d in s.head.discrete),
                    continuous=sum(s.head.continuous for s in self._specs),
                ),
            )
        ]

    def reset(self, seed: int | None = None) -> list[np.ndarray]:
        return [np.concatenate(self.env.reset(seed))]

    def step(self, actions: Sequence[AgentAction]) -> tuple[list[np.ndarray], list[float], bool, dict]:
        joint = actions[0]
        per_agent = []
        d_off = c_off = 0
        for spec in self._specs:
            n_d, n_c = len(spec.head.discrete), spec.head.continuous
            per_agent.append(
                AgentAction(
                    discrete=list(joint.discrete[d_off : d_off + n_d]),
                    continuous=np.asarray(joint.continuous[c_off : c_off + n_c]),
                )
            )
            d_off += n_d
            c_off += n_c
        obs, rewards, done, info = self.env.step(per_agent)
        return [np.concatenate(obs)], [float(np.mean(rewards))], done, info


class PolicySet(nn.Module):
    """Per-agent actors plus either per-agent critics or one centralised critic."""

    def __init__(
        self,
        agent_specs: Sequence[AgentSpec],
        variant: Variant,
        hidden: Sequence[int] = (128, 128),
        log_std_init: float = -0.5,
        generator: torch.Generator | None = None,
    ) -> None:
        super().__init__()
        self.variant = variant
        self.agent_specs = list(agent_specs)
        self.hidden = list(hidden)
        self.actors = nn.ModuleList(
            HybridActor(s.obs_dim, s.head, hidden, log_std_init, generator) for s in self.agent_specs
        )
        if self.centralized:
            joint_dim = sum(s.obs_dim for s in self.agent_specs)
            self.critics = nn.ModuleList(
                [Mlp(MlpSpec.critic(joint_dim, hidden, len(self.agent_specs)), generator)]
            )
        else:
            self.critics = nn.ModuleList(
                Mlp(MlpSpec.critic(s.obs_dim, hidden), generator) for s in self.agent_specs
            )
        self.normalizers = [ValueNormalizer() for _ in self.agent_specs]

    @property
    def centralized(self) -> bool:
        return self.variant in CENTRALIZED_VARIANTS

    @property
    def n_agents(self) -> int:
        return len(self.agent_specs)

    def wrap(self, env: MultiAgentEnv) -> MultiAgentEnv:
        return JointAgentView(env) if self.variant == "ppo" else env

    def values(self, obs: Sequence[torch.Tensor]) -> torch.Tensor:
        """Normalised value estimates, shape (B, n_agents)."""
        if self.centralized:
            return self.critics[0](torch.cat(list(obs), dim=-1))
        return torch.cat([critic(o) for critic, o in zip(self.critics, obs)], dim=-1)

    def act(
        self,
        obs: Sequence[np.ndarray],
        generator: torch.Generator | None = None,
        deterministic: bool = False,
    ) -> list[SampledActions]:
        with torch.no_grad():
            return [
                sample_actions(
                    actor(torch.as_tensor(o, dtype=DTYPE).unsqueeze(0)),
                    spec.head,
                    generator,
                    deterministic,
                )
                for actor, spec, o in zip(self.actors, self.agent_specs, obs)
            ]

    def header(self) -> dict:
        return {
            "variant": self.variant,
            "hidden": self.hidden,
            "agents": [
                {
                    "name": s.name,
                    "obs_dim": s.obs_dim,
                    "discrete": list(s.head.discrete),
                    "continuous": s.head.continuous,
                }
                for s in self.agent_specs
            ],
        }

    def tensors(self) -> dict[str, np.ndarray]:
        out = {k: v.detach().numpy() for k, v in self.state_dict().items()}
        for i, norm in enumerate(self.normalizers):
            out[f"value_normalizer.{i}"] = norm.state()
        return out

    def load_tensor_dict(self, tensors: dict[str, np.ndarray]) -> None:
        state = {k: torch.from_numpy(v.copy()) for k, v in tensors.items() if not k.startswith("value_normalizer.")}
        self.load_state_dict(state, strict=True)
        for i, norm in enumerate(self.normalizers):
            norm.load_state(tensors[f"value_normalizer.{i}"])

    def save(self, path: str | Path, config: TrainerConfig | None = None) -> None:
        header = self.header()
        if config is not None:
            header["trainer"] = config.model_dump(mode="json")
        save_tensors(path, header, self.tensors())

    @classmethod
    def load(cls, path: str | Path) -> "PolicySet":
        header, tensors = load_tensors(path)
        specs = [
            AgentSpec(a["name"], a["obs_dim"], HeadSpec(tuple(a["discrete"]), a["continuous"]))
            for a in header["agents"]
        ]
        policy = cls(specs, header["variant"], header["hidden"])
        policy.load_tensor_dict(tensors)
        return policy


@dataclass
class Trajectory:
    obs: list[list[np.ndarray]] = field(default_factory=list)
    discrete: list[list[torch.Tensor]] = field(default_factory=list)
    pre_squash: list[list[torch.Tensor]] = field(default_factory=list)
    log_probs: list[list[float]] = field(default_factory=list)
    rewards: list[list[float]] = field(default_factory=list)
    values: list[list[float]] = field(default_factory=list)
    infos: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class RolloutBatch:
    obs: list[torch.Tensor]
    discrete: list[torch.Tensor]
    pre_squash: list[torch.Tensor]
    log_probs: torch.Tensor
    rewards: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class TrainingResult:
    policy: PolicySet
    curve: list[dict[str, float]]


def collect_episode(
    env: MultiAgentEnv, policy: PolicySet, generator: torch.Generator, deterministic: bool = False
) -> Trajectory:
    traj = Trajectory()
    obs = env.reset()
    done = False
    while not done:
        sampled = policy.act(obs, generator, deterministic)
        with torch.no_grad():
            v = policy.values([torch.as_tensor(o, dtype=DTYPE).unsqueeze(0) for o in obs])[0]
        values = [float(norm.denormalize(float(v[i]))) for i, norm in enumerate(policy.normalizers)]
        actions = [s.to_agent_actions()[0] for s in sampled]
        next_obs, rewards, done, info = env.step(actions)

        traj.obs.append([np.asarray(o, dtype=np.float64) for o in obs])
        traj.discrete.append([s.discrete[0] for s in sampled])
        traj.pre_squash.append([s.pre_squash[0] for s in sampled])
        traj.log_probs.append([float(s.log_prob[0]) for s in sampled])
        traj.rewards.append([float(r) for r in rewards])
        traj.values.append(values)
        traj.infos.append(info)
        obs = next_obs
    return traj


def build_batch(trajectories: Sequence[Trajectory], config: TrainerConfig, n_agents: int) -> RolloutBatch:
    advantages, returns = [], []
    for traj in trajectories:
        rewards = np.asarray(traj.rewards)
        values = np.asarray(traj.values)
        per_agent = [compute_gae(rewards[:, i], values[:, i], config.gamma, config.gae_lambda) for i in range(n_agents)]
        advantages.append(np.stack([a for a, _ in per_agent], axis=1))
        returns.append(np.stack([r for _, r in per_agent], axis=1))

    flat = [(traj, t) for traj in trajectories for t in range(len(traj))]
    return RolloutBatch(
        obs=[torch.as_tensor(np.stack([tr.obs[t][i] for tr, t in flat]), dtype=DTYPE) for i in range(n_agents)],
        discrete=[torch.stack([tr.discrete[t][i] for tr, t in flat]) for i in range(n_agents)],
        pre_squash=[torch.stack([tr.pre_squash[t][i] for tr, t in flat]) for i in range(n_agents)],
        log_probs=torch.as_tensor(np.array([tr.log_probs[t] for tr, t in flat]), dtype=DTYPE),
        rewards=np.concatenate([np.asarray(tr.rewards) for tr in trajectories]),
        values=np.concatenate([np.asarray(tr.values) for tr in trajectories]),
        advantages=np.concatenate(advantages),
        returns=np.concatenate(returns),
    )


def value_targets(policy: PolicySet, returns: np.ndarray) -> torch.Tensor:
    """Per-agent return targets standardised with the moments of this batch."""
    for i, norm in enumerate(policy.normalizers):
        norm.update(returns[:, i])
    return torch.as_tensor(
        np.stack([norm.normalize(returns[:, i]) for i, norm in enumerate(policy.normalizers)], axis=1),
        dtype=DTYPE,
    )


def ppo_update(
    policy: PolicySet,
    optimizer: torch.optim.Optimizer,
    batch: RolloutBatch,
    config: TrainerConfig,
    batch_size: int,
    generator: torch.Generator,
    epoch: int,
) -> dict[str, float]:
    n_agents = policy.n_agents
    targets = value_targets(policy, batch.returns)
    adv = torch.stack(
        [standardize(torch.as_tensor(batch.advantages[:, i], dtype=DTYPE)) for i in range(n_agents)], dim=1
    )

    n = len(batch)
    losses = []
    kl_skipped = False
    for _ in range(config.ppo_epochs):
        perm = torch.randperm(n, generator=generator)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            loss = torch.zeros((), dtype=DTYPE)
            outputs = []
            for i, (actor, spec) in enumerate(zip(policy.actors, policy.agent_specs)):
                out = actor(batch.obs[i][idx])
                outputs.append(out)
                log_prob, entropy = evaluate_actions(out, spec.head, batch.discrete[i][idx], batch.pre_squash[i][idx])
                ratio = torch.exp(torch.clamp(log_prob - batch.log_probs[idx, i], -20.0, 20.0))
                loss = loss - ppo_clip_objective(ratio, adv[idx, i], config.clip_eps).mean()
                loss = loss - config.entropy_coef * entropy.mean()

            values = policy.values([o[idx] for o in batch.obs])
            loss = loss + config.value_coef * ((values - targets[idx]) ** 2).mean(dim=0).sum()

            if config.kl_chi > 0 and n_agents > 1 and not kl_skipped:
                try:
                    kl = sum(
                        agent_kl_proximity(
                            outputs[i], policy.agent_specs[i].head, outputs[j], policy.agent_specs[j].head
                        ).mean()
                        for i in range(n_agents)
                        for j in range(n_agents)
                        if i != j
                    )
                    loss = loss + config.kl_chi * kl
                except InapplicableError:
                    kl_skipped = True
                    logger.warning("KL proximity skipped: agents share no head with identical support")

            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}",
                    diagnostics={
                        "epoch": epoch,
                        "variant": policy.variant,
                        "lr": optimizer.param_groups[0]["lr"],
                        "batch_size": batch_size,
                        "mean_reward": float(batch.rewards.mean()),
                    },
                )
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(policy.parameters(), config.max_grad_norm)
            optimizer.step()
            losses.append(float(loss))
    return {"loss": float(np.mean(losses)) if losses else 0.0}


def train(
    config: TrainerConfig,
    variant: Variant,
    env_factory: Callable[[int], MultiAgentEnv],
    seed: int,
) -> TrainingResult:
    """Run `config.epochs` iterations of rollout -> GAE -> clipped PPO epochs."""
    init_seed, update_seed, *worker_seeds = (derive_seed(seed, k) for k in range(2 + config.workers))
    init_gen = torch_generator(init_seed)
    update_gen = torch_generator(update_seed)

    envs = []
    sample_gens = []
    for w_seed in worker_seeds:
        env = env_factory(w_seed)
        envs.append(JointAgentView(env) if variant == "ppo" else env)
        sample_gens.append(torch_generator(w_seed))

    policy = PolicySet(envs[0].agent_specs, variant, config.hidden_widths, config.log_std_init, init_gen)
    optimizer = torch.optim.Adam(policy.parameters(), lr=config.lr_start)
    scheduler = LambdaLR(optimizer, lambda epoch: lr_at(epoch, config) / config.lr_start)

    logger.info(
        "Training %s: %d epochs, %d workers, %d episodes/epoch (seed %d)",
        variant,
        config.epochs,
        config.workers,
        config.episodes_per_iter,
        seed,
    )
    curve: list[dict[str, float]] = []
    for epoch in range(config.epochs):
        trajectories = []
        for e in range(config.episodes_per_iter):
            w = e % config.workers
            trajectories.append(collect_episode(envs[w], policy, sample_gens[w]))

        batch = build_batch(trajectories, config, policy.n_agents)
        lr = optimizer.param_groups[0]["lr"]
        bs = batch_size_at(epoch, config)
        stats = ppo_update(policy, optimizer, batch, config, bs, update_gen, epoch)
        scheduler.step()

        cumulative = np.array([np.asarray(t.rewards).sum(axis=0) for t in trajectories])
        row = {
            "epoch": epoch,
            "lr": lr,
            "batch_size": bs,
            "reward": float(cumulative.mean()),
            "loss": stats["loss"],
        }
        for i in range(policy.n_agents):
            row[f"reward_agent{i + 1}"] = float(cumulative[:, i].mean())
        curve.append(row)
        if epoch % config.log_every == 0 or epoch == config.epochs - 1:
            logger.info(
                "epoch %d lr=%.2e batch=%d reward=%.4f", epoch, lr, bs, row["reward"]
            )
    return TrainingResult(policy, curve)
