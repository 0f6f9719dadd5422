"""MAPPO training: networks, GAE, rollout collection, PPO updates."""

from .buffer import TrajectoryBatch
from .gae import compute_gae, normalize_advantages
from .networks import (
    CRITIC_VARIANTS,
    ActorNetwork,
    AttentionCritic,
    PlainCritic,
    build_critic,
)
from .ppo import MAPPOTrainer, TrainConfig, clipped_surrogate, clipped_value_loss
from .rollout import RolloutCollector, greedy_actions, sample_categorical

__all__ = [
    "ActorNetwork", "AttentionCritic", "CRITIC_VARIANTS", "MAPPOTrainer",
    "PlainCritic", "RolloutCollector", "TrainConfig", "TrajectoryBatch",
    "build_critic", "clipped_surrogate", "clipped_value_loss", "compute_gae",
    "greedy_actions", "normalize_advantages", "sample_categorical",
]
