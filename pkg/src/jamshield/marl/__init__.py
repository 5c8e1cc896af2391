"""Float64 actor/critic networks, hybrid policy heads and PPO-family trainers."""

from jamshield.marl.policy import AgentAction, AgentSpec, HeadSpec, MultiAgentEnv
from jamshield.marl.trainer import PolicySet, TrainingResult, train

__all__ = ["AgentAction", "AgentSpec", "HeadSpec", "MultiAgentEnv", "PolicySet", "TrainingResult", "train"]
