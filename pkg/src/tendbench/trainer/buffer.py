"""Time-major rollout storage for PPO updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TrajectoryBatch:
    """One rollout of aligned full episodes across B envs and N agents.

    Arrays are time-major. Recurrent states are stored at every chunk
    boundary so update-time BPTT can restart sequences mid-episode with the
    states the rollout policy actually had.
    """

    obs: np.ndarray                # [T, B, N, D]
    actions: np.ndarray            # [T, B, N] int
    log_probs: np.ndarray          # [T, B, N]
    values: np.ndarray             # [T, B, N]
    rewards: np.ndarray            # [T, B, N] totals used for training
    reward_components: np.ndarray  # [T, B, N, 7]
    dones: np.ndarray              # [T, B, N] float
    actor_states: np.ndarray       # [T / chunk, B, N, H]
    critic_states: np.ndarray      # [T / chunk, B, N, H]
    bootstrap_value: np.ndarray    # [B, N]
    chunk_length: int

    @property
    def steps(self) -> int:
        return self.obs.shape[0]

    @property
    def n_envs(self) -> int:
        return self.obs.shape[1]

    @property
    def n_agents(self) -> int:
        return self.obs.shape[2]

    def __post_init__(self):
        T = self.obs.shape[0]
        if T % self.chunk_length:
            raise ValueError(
                f"episode length {T} not divisible by chunk length {self.chunk_length}"
            )
        if self.actor_states.shape[0] != T // self.chunk_length:
            raise ValueError(
                f"expected {T // self.chunk_length} stored recurrent boundaries, "
                f"got {self.actor_states.shape[0]}"
            )
        if not np.isfinite(self.log_probs).all():
            raise ValueError("non-finite log-probabilities in rollout")
