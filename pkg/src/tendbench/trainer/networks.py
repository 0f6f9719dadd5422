"""Actor and centralized critic networks.

The actor is local: one hidden affine + tanh + layer norm, a GRU, and a
5-logit head, shared across agents. Critics see all agents' observations:

  * plain: agent-centric concatenation (own observation first, the others in
    ascending index order) through the same trunk shape, one value per agent
  * attention: every observation row is encoded and projected to q/k/v, a
    multi-head attention block mixes the rows, its flattened output is
    concatenated with the evaluated agent's own observation (or all
    observations via ``concat_all_obs``) and fed to the trunk

Step methods take numpy observations plus Tensor recurrent states and return
Tensor outputs, so one code path serves rollouts (inside ``no_grad``) and
training (recording the graph for truncated BPTT).
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..nn import (
    GRUCell,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Tensor,
    concat,
    stack,
    tanh,
)

CRITIC_VARIANTS = ("plain", "attention")


class ActorNetwork(Module):
    def __init__(self, obs_dim: int, hidden_dim: int = 64, n_actions: int = 5,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.fc = Linear(obs_dim, hidden_dim, gain=np.sqrt(2), rng=rng, dtype=dtype)
        self.norm = LayerNorm(hidden_dim, dtype=dtype)
        self.gru = GRUCell(hidden_dim, hidden_dim, rng=rng, dtype=dtype)
        self.head = Linear(hidden_dim, n_actions, gain=0.01, rng=rng, dtype=dtype)
        self.hidden_dim = hidden_dim
        self.dtype = dtype

    def initial_state(self, rows: int) -> Tensor:
        return Tensor(np.zeros((rows, self.hidden_dim), dtype=self.dtype))

    def step(self, obs: np.ndarray, h: Tensor) -> tuple[Tensor, Tensor]:
        """One step on row-batched observations [R, D] -> (logits [R, A], h')."""
        x = Tensor(np.asarray(obs, dtype=self.dtype))
        z = self.norm(tanh(self.fc(x)))
        h_next = self.gru(z, h)
        return self.head(h_next), h_next

    def forward_sequence(self, obs_seq: np.ndarray, h0: Tensor):
        """Thread the GRU through [L, R, D] -> (logits [L, R, A], final state)."""
        h = h0
        logits = []
        for t in range(obs_seq.shape[0]):
            out, h = self.step(obs_seq[t], h)
            logits.append(out)
        return stack(logits, axis=0), h


class _CriticTrunk(Module):
    def __init__(self, in_dim: int, hidden_dim: int, rng, dtype):
        self.fc = Linear(in_dim, hidden_dim, gain=np.sqrt(2), rng=rng, dtype=dtype)
        self.norm = LayerNorm(hidden_dim, dtype=dtype)
        self.gru = GRUCell(hidden_dim, hidden_dim, rng=rng, dtype=dtype)
        self.head = Linear(hidden_dim, 1, gain=1.0, rng=rng, dtype=dtype)

    def forward(self, x: Tensor, h: Tensor) -> tuple[Tensor, Tensor]:
        z = self.norm(tanh(self.fc(x)))
        h_next = self.gru(z, h)
        return self.head(h_next), h_next


class PlainCritic(Module):
    """Concatenated-observation critic with a per-agent value head."""

    def __init__(self, obs_dim: int, n_agents: int, hidden_dim: int = 64,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.trunk = _CriticTrunk(obs_dim * n_agents, hidden_dim, rng, dtype)
        self.n_agents = n_agents
        self.hidden_dim = hidden_dim
        self.dtype = dtype
        # agent-centric view order: own row first, then the rest ascending
        self._orders = np.array(
            [[i] + [j for j in range(n_agents) if j != i] for i in range(n_agents)]
        )

    def initial_state(self, rows: int) -> Tensor:
        return Tensor(np.zeros((rows, self.n_agents, self.hidden_dim), dtype=self.dtype))

    def step(self, all_obs: np.ndarray, h: Tensor) -> tuple[Tensor, Tensor]:
        """[R, N, D] observations + [R, N, H] states -> values [R, N], next states."""
        R, N, D = all_obs.shape
        rotated = np.asarray(all_obs, dtype=self.dtype)[:, self._orders, :]  # [R, N, N, D]
        x = Tensor(rotated.reshape(R * N, N * D))
        values, h_next = self.trunk(x, h.reshape(R * N, self.hidden_dim))
        return values.reshape(R, N), h_next.reshape(R, N, self.hidden_dim)


class AttentionCritic(Module):
    """Critic whose input passes through an inter-agent attention block."""

    def __init__(self, obs_dim: int, n_agents: int, hidden_dim: int = 64,
                 embed_dim: int = 64, num_heads: int = 3, head_dim: int | None = None,
                 concat_all_obs: bool = False,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        head_dim = head_dim or embed_dim
        self.encoder = Linear(obs_dim, embed_dim, rng=rng, dtype=dtype)
        self.query = Linear(embed_dim, embed_dim, bias=False, rng=rng, dtype=dtype)
        self.key = Linear(embed_dim, embed_dim, bias=False, rng=rng, dtype=dtype)
        self.value = Linear(embed_dim, embed_dim, bias=False, rng=rng, dtype=dtype)
        self.mha = MultiHeadAttention(embed_dim, num_heads, head_dim, rng=rng, dtype=dtype)
        trunk_obs = obs_dim * n_agents if concat_all_obs else obs_dim
        self.trunk = _CriticTrunk(n_agents * embed_dim + trunk_obs, hidden_dim, rng, dtype)
        self.n_agents = n_agents
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.concat_all_obs = concat_all_obs
        self.dtype = dtype

    def initial_state(self, rows: int) -> Tensor:
        return Tensor(np.zeros((rows, self.n_agents, self.hidden_dim), dtype=self.dtype))

    def attention_output(self, all_obs: np.ndarray) -> Tensor:
        """Encoded rows -> q/k/v -> multi-head attention mix: [R, N, embed]."""
        obs = Tensor(np.asarray(all_obs, dtype=self.dtype))
        e = self.encoder(obs)
        return self.mha(self.query(e), self.key(e), self.value(e))

    def step(self, all_obs: np.ndarray, h: Tensor) -> tuple[Tensor, Tensor]:
        R, N, D = all_obs.shape
        mixed = self.attention_output(all_obs)
        flat = mixed.reshape(R, N * self.embed_dim)
        tiled = stack([flat] * N, axis=1)                    # [R, N, N*embed]
        if self.concat_all_obs:
            own = Tensor(np.broadcast_to(
                np.asarray(all_obs, dtype=self.dtype).reshape(R, 1, N * D), (R, N, N * D)
            ).copy())
        else:
            own = Tensor(np.asarray(all_obs, dtype=self.dtype))
        x = concat([tiled, own], axis=-1).reshape(R * N, -1)
        values, h_next = self.trunk(x, h.reshape(R * N, self.hidden_dim))
        return values.reshape(R, N), h_next.reshape(R, N, self.hidden_dim)


def build_critic(variant: str, obs_dim: int, n_agents: int, hidden_dim: int = 64,
                 embed_dim: int = 64, num_heads: int = 3,
                 concat_all_obs: bool = False,
                 rng: np.random.Generator | None = None, dtype=np.float64):
    if variant == "plain":
        return PlainCritic(obs_dim, n_agents, hidden_dim, rng=rng, dtype=dtype)
    if variant == "attention":
        return AttentionCritic(
            obs_dim, n_agents, hidden_dim, embed_dim, num_heads,
            concat_all_obs=concat_all_obs, rng=rng, dtype=dtype,
        )
    raise ConfigError(f"critic variant must be one of {CRITIC_VARIANTS}, got {variant!r}")
