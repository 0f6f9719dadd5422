"""MAPPO training: clipped-surrogate updates over chunked recurrent sequences.

One training iteration collects a full aligned episode from every parallel
env, computes GAE from the rollout values, then runs ``ppo_epochs`` passes of
minibatched updates. A minibatch is a random subset of (env, chunk) sequence
starts; the actor and critic are re-run through each chunk from the recurrent
states stored during collection, so gradients flow through truncated BPTT the
same way the data was generated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from ..metrics import EpisodeMetrics
from ..nn import Adam, Tensor, clip, clip_grad_norm, exp, gather, log_softmax, maximum, minimum, stack
from ..observation import ObservationBuilder
from ..reward import RewardEngine
from ..scenario import TendingScenario
from .buffer import TrajectoryBatch
from .gae import compute_gae, normalize_advantages
from .networks import ActorNetwork, build_critic
from .rollout import RolloutCollector


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    ppo_epochs: int = 5
    num_minibatches: int = 2
    chunk_length: int = 10
    learning_rate: float = 5e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 10.0
    num_envs: int = 32
    hidden_dim: int = 64
    embed_dim: int = 64
    attention_heads: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError(f"gamma/lambda must lie in [0, 1], got {self.gamma}, {self.gae_lambda}")
        if self.clip_eps <= 0:
            raise ValueError(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


def clipped_surrogate(logp_new: Tensor, logp_old, advantages, clip_eps: float) -> Tensor:
    """Mean negative clipped surrogate: -E[min(r A, clip(r, 1 +- eps) A)]."""
    ratio = exp(logp_new - Tensor(np.asarray(logp_old)))
    adv = Tensor(np.asarray(advantages))
    unclipped = ratio * adv
    clipped = clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    return -(minimum(unclipped, clipped).mean())


def clipped_value_loss(values: Tensor, old_values, returns, clip_eps: float) -> Tensor:
    """0.5 E[max((v - R)^2, (clip(v - v_old) + v_old - R)^2)]."""
    v_old = Tensor(np.asarray(old_values))
    ret = Tensor(np.asarray(returns))
    v_clipped = v_old + clip(values - v_old, -clip_eps, clip_eps)
    return 0.5 * maximum((values - ret) ** 2.0, (v_clipped - ret) ** 2.0).mean()


def _pack_generator(gen: np.random.Generator) -> np.ndarray:
    s = gen.bit_generator.state
    mask = (1 << 64) - 1
    return np.array(
        [
            s["state"]["state"] & mask, (s["state"]["state"] >> 64) & mask,
            s["state"]["inc"] & mask, (s["state"]["inc"] >> 64) & mask,
            s["has_uint32"], s["uinteger"],
        ],
        dtype=np.uint64,
    )


def _unpack_generator(arr: np.ndarray) -> np.random.Generator:
    gen = np.random.Generator(np.random.PCG64())
    vals = [int(x) for x in arr]
    gen.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": vals[0] | (vals[1] << 64), "inc": vals[2] | (vals[3] << 64)},
        "has_uint32": vals[4],
        "uinteger": vals[5],
    }
    return gen


class MAPPOTrainer:
    """Shared-parameter actors plus one centralized critic (plain or attention)."""

    def __init__(
        self,
        scenario: TendingScenario,
        obs_builder: ObservationBuilder,
        reward_engine: RewardEngine,
        config: TrainConfig = TrainConfig(),
        critic_variant: str = "attention",
        critic_concat_all_obs: bool = False,
        seed: int = 0,
        count_agent_pairs_once: bool = False,
    ):
        self.config = config
        self.scenario = scenario
        self.critic_variant = critic_variant
        init_seed, rollout_seed, update_seed = np.random.SeedSequence(seed).spawn(3)
        init_rng = np.random.default_rng(init_seed)
        self.rollout_rng = np.random.default_rng(rollout_seed)
        self.update_rng = np.random.default_rng(update_seed)

        dtype = config.np_dtype
        self.actor = ActorNetwork(
            obs_builder.dim, config.hidden_dim, rng=init_rng, dtype=dtype
        )
        self.critic = build_critic(
            critic_variant, obs_builder.dim, scenario.n_agents,
            hidden_dim=config.hidden_dim, embed_dim=config.embed_dim,
            num_heads=config.attention_heads, concat_all_obs=critic_concat_all_obs,
            rng=init_rng, dtype=dtype,
        )
        self.actor_opt = Adam(self.actor.parameters(), lr=config.learning_rate)
        self.critic_opt = Adam(self.critic.parameters(), lr=config.learning_rate)
        self.collector = RolloutCollector(
            scenario, obs_builder, reward_engine, self.actor, self.critic,
            chunk_length=config.chunk_length,
            count_agent_pairs_once=count_agent_pairs_once,
        )
        self.episodes_done = 0
        self.updates_done = 0

    # -- training ---------------------------------------------------------

    def train_iteration(self) -> tuple[list[EpisodeMetrics], dict]:
        """Collect one aligned episode per env and run the PPO update."""
        batch, episodes = self.collector.collect(self.rollout_rng)
        stats = self.update(batch)
        self.episodes_done += len(episodes)
        return episodes, stats

    def update(self, batch: TrajectoryBatch) -> dict:
        cfg = self.config
        T, B, N = batch.rewards.shape
        L = batch.chunk_length
        chunks = T // L
        advantages, returns = compute_gae(
            batch.rewards, batch.values, batch.dones, batch.bootstrap_value,
            cfg.gamma, cfg.gae_lambda,
        )

        # [T, B, ...] -> [chunks, L, B, ...] so (env, chunk) pairs slice cleanly
        def chunked(arr):
            return arr.reshape((chunks, L) + arr.shape[1:])

        obs_c = chunked(batch.obs)
        act_c = chunked(batch.actions)
        logp_c = chunked(batch.log_probs)
        val_c = chunked(batch.values)
        adv_c = chunked(advantages)
        ret_c = chunked(returns)

        pairs = np.array([(c, b) for c in range(chunks) for b in range(B)])
        stats_acc: dict[str, list[float]] = {}
        for _ in range(cfg.ppo_epochs):
            perm = self.update_rng.permutation(len(pairs))
            for mb in np.array_split(perm, cfg.num_minibatches):
                sel_c, sel_b = pairs[mb, 0], pairs[mb, 1]
                stats = self._update_minibatch(
                    obs_seq=obs_c[sel_c, :, sel_b].swapaxes(0, 1),
                    actions=act_c[sel_c, :, sel_b].swapaxes(0, 1),
                    logp_old=logp_c[sel_c, :, sel_b].swapaxes(0, 1),
                    values_old=val_c[sel_c, :, sel_b].swapaxes(0, 1),
                    advantages=adv_c[sel_c, :, sel_b].swapaxes(0, 1),
                    returns=ret_c[sel_c, :, sel_b].swapaxes(0, 1),
                    actor_h0=batch.actor_states[sel_c, sel_b],
                    critic_h0=batch.critic_states[sel_c, sel_b],
                )
                for k, v in stats.items():
                    stats_acc.setdefault(k, []).append(v)
        self.updates_done += 1
        return {k: float(np.mean(v)) for k, v in stats_acc.items()}

    def _update_minibatch(self, obs_seq, actions, logp_old, values_old,
                          advantages, returns, actor_h0, critic_h0) -> dict:
        cfg = self.config
        L, K, N, D = obs_seq.shape
        # keep every loss input in the training dtype; a stray float64 here
        # silently promotes the whole backward pass
        adv = normalize_advantages(advantages).astype(cfg.np_dtype)
        logp_old = logp_old.astype(cfg.np_dtype)
        values_old = values_old.astype(cfg.np_dtype)
        returns = returns.astype(cfg.np_dtype)

        h_a = Tensor(actor_h0.reshape(K * N, -1).astype(cfg.np_dtype))
        h_c = Tensor(critic_h0.astype(cfg.np_dtype))
        logits_steps, value_steps = [], []
        for t in range(L):
            logits_t, h_a = self.actor.step(obs_seq[t].reshape(K * N, D), h_a)
            values_t, h_c = self.critic.step(obs_seq[t], h_c)
            logits_steps.append(logits_t)
            value_steps.append(values_t)
        logits = stack(logits_steps, axis=0)                     # [L, K*N, A]
        values = stack(value_steps, axis=0).reshape(L * K * N)

        logp_all = log_softmax(logits, axis=-1)
        logp_new = gather(
            logp_all, actions.reshape(L, K * N, 1), axis=-1
        ).reshape(L * K * N)
        entropy = -(exp(logp_all) * logp_all).sum(axis=-1).mean()

        actor_loss = clipped_surrogate(
            logp_new, logp_old.reshape(-1), adv.reshape(-1), cfg.clip_eps
        )
        value_loss = clipped_value_loss(
            values, values_old.reshape(-1), returns.reshape(-1), cfg.clip_eps
        )
        loss = actor_loss - cfg.entropy_coef * entropy + cfg.value_coef * value_loss
        if not np.isfinite(loss.data):
            raise NumericError(
                f"non-finite loss (actor {actor_loss.data}, value {value_loss.data}, "
                f"entropy {entropy.data})"
            )

        self.actor.zero_grad()
        self.critic.zero_grad()
        loss.backward()
        actor_norm = clip_grad_norm(self.actor.parameters(), cfg.max_grad_norm)
        critic_norm = clip_grad_norm(self.critic.parameters(), cfg.max_grad_norm)
        self.actor_opt.step()
        self.critic_opt.step()

        with np.errstate(over="ignore"):
            ratio = np.exp(logp_new.data - logp_old.reshape(-1))
        return {
            "actor_loss": float(actor_loss.data),
            "value_loss": float(value_loss.data),
            "entropy": float(entropy.data),
            "approx_kl": float(np.mean(logp_old.reshape(-1) - logp_new.data)),
            "ratio_mean": float(ratio.mean()),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
            "actor_grad_norm": actor_norm,
            "critic_grad_norm": critic_norm,
        }

    # -- persistence -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Everything needed for bit-exact resume, as named flat arrays."""
        out = {f"actor.{k}": v for k, v in self.actor.state_dict().items()}
        out.update({f"critic.{k}": v for k, v in self.critic.state_dict().items()})
        out.update(self.actor_opt.state_arrays("adam.actor"))
        out.update(self.critic_opt.state_arrays("adam.critic"))
        out["trainer.episodes_done"] = np.array([self.episodes_done], dtype=np.int64)
        out["trainer.updates_done"] = np.array([self.updates_done], dtype=np.int64)
        out["rng.rollout"] = _pack_generator(self.rollout_rng)
        out["rng.update"] = _pack_generator(self.update_rng)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        self.actor.load_state_dict(
            {k[len("actor."):]: v for k, v in arrays.items() if k.startswith("actor.")}
        )
        self.critic.load_state_dict(
            {k[len("critic."):]: v for k, v in arrays.items() if k.startswith("critic.")}
        )
        self.actor_opt.load_state_arrays("adam.actor", arrays)
        self.critic_opt.load_state_arrays("adam.critic", arrays)
        self.episodes_done = int(arrays["trainer.episodes_done"][0])
        self.updates_done = int(arrays["trainer.updates_done"][0])
        self.rollout_rng = _unpack_generator(arrays["rng.rollout"])
        self.update_rng = _unpack_generator(arrays["rng.update"])
