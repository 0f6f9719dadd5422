"""Batched rollout collection: decentralized acting, centralized value reads."""

from __future__ import annotations

import numpy as np

from ..metrics import EpisodeMetrics, episode_metrics, parts_cap
from ..nn import no_grad
from ..observation import ObservationBuilder
from ..reward import RewardBreakdown, RewardEngine
from ..scenario import TendingScenario
from .buffer import TrajectoryBatch


def sample_categorical(logits: np.ndarray, rng: np.random.Generator):
    """Sample action ids from rows of logits; returns (actions, log_probs)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(logp)
    u = rng.random(size=logits.shape[:-1] + (1,))
    actions = (probs.cumsum(axis=-1) < u).sum(axis=-1)
    actions = np.minimum(actions, logits.shape[-1] - 1)
    chosen = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0]
    return actions.astype(np.int64), chosen


def greedy_actions(logits: np.ndarray):
    actions = logits.argmax(axis=-1)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    chosen = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0]
    return actions.astype(np.int64), chosen


class RolloutCollector:
    """Runs aligned full episodes across a batch of envs and records them."""

    def __init__(
        self,
        scenario: TendingScenario,
        obs_builder: ObservationBuilder,
        reward_engine: RewardEngine,
        actor,
        critic,
        chunk_length: int = 10,
        count_agent_pairs_once: bool = False,
    ):
        self.scenario = scenario
        self.obs_builder = obs_builder
        self.reward_engine = reward_engine
        self.actor = actor
        self.critic = critic
        self.chunk_length = chunk_length
        self.count_agent_pairs_once = count_agent_pairs_once

    def collect(
        self,
        rng: np.random.Generator,
        deterministic: bool = False,
        step_hook=None,
    ) -> tuple[TrajectoryBatch, list[EpisodeMetrics]]:
        """One full episode per env; returns the batch and per-env metrics.

        ``step_hook(t, state, actions, events)`` is called after every step
        (trace export uses it).
        """
        scen = self.scenario
        T = scen.config.episode_length
        B, N = scen.batch_size, scen.n_agents
        D = self.obs_builder.dim
        H = self.actor.hidden_dim
        chunks = T // self.chunk_length

        obs_buf = np.zeros((T, B, N, D), dtype=np.float32)
        act_buf = np.zeros((T, B, N), dtype=np.int64)
        logp_buf = np.zeros((T, B, N))
        val_buf = np.zeros((T, B, N))
        rew_buf = np.zeros((T, B, N))
        comp_buf = np.zeros((T, B, N, len(RewardBreakdown.COMPONENTS)))
        done_buf = np.zeros((T, B, N))
        actor_h_buf = np.zeros((chunks, B, N, H))
        critic_h_buf = np.zeros((chunks, B, N, self.critic.hidden_dim))

        state = scen.reset(seed=rng)
        obs = self.obs_builder.build(state)
        h_actor = self.actor.initial_state(B * N)
        h_critic = self.critic.initial_state(B)

        as_onsets = np.zeros(B, dtype=np.int64)
        aa_onsets = np.zeros(B, dtype=np.int64)
        comp_sums = np.zeros((B, len(RewardBreakdown.COMPONENTS)))

        for t in range(T):
            if t % self.chunk_length == 0:
                c = t // self.chunk_length
                actor_h_buf[c] = h_actor.data.reshape(B, N, H)
                critic_h_buf[c] = h_critic.data
            with no_grad():
                logits, h_actor = self.actor.step(obs.reshape(B * N, D), h_actor)
                values, h_critic = self.critic.step(obs, h_critic)
            logits_np = logits.data.reshape(B, N, -1)
            if deterministic:
                actions, logp = greedy_actions(logits_np)
            else:
                actions, logp = sample_categorical(logits_np, rng)

            prev_state = state
            state, events = scen.step(state, actions)
            breakdown = self.reward_engine.compute(prev_state, state, events)

            obs_buf[t] = obs
            act_buf[t] = actions
            logp_buf[t] = logp
            val_buf[t] = values.data
            rew_buf[t] = breakdown.total
            comp_buf[t] = breakdown.stacked()
            done_buf[t] = 1.0 if t == T - 1 else 0.0

            comp_sums += breakdown.stacked().sum(axis=1)
            for b, ev in enumerate(events):
                for e in ev.contact_onsets:
                    if e.body_b < N:
                        aa_onsets[b] += 1
                    else:
                        as_onsets[b] += 1
            if step_hook is not None:
                step_hook(t, state, actions, events)
            obs = self.obs_builder.build(state)

        p_imax = parts_cap(T, scen.config.production_delay)
        episodes = [
            episode_metrics(
                per_machine=state.machine_collected[b],
                per_agent=state.agent_collected[b],
                delivered=int(state.agent_delivered[b].sum()),
                as_onsets=int(as_onsets[b]),
                aa_onsets=int(aa_onsets[b]),
                p_imax=p_imax,
                component_returns={
                    name: float(comp_sums[b, k])
                    for k, name in enumerate(RewardBreakdown.COMPONENTS)
                },
                count_agent_pairs_once=self.count_agent_pairs_once,
            )
            for b in range(B)
        ]
        batch = TrajectoryBatch(
            obs=obs_buf, actions=act_buf, log_probs=logp_buf, values=val_buf,
            rewards=rew_buf, reward_components=comp_buf, dones=done_buf,
            actor_states=actor_h_buf, critic_states=critic_h_buf,
            bootstrap_value=np.zeros((B, N)), chunk_length=self.chunk_length,
        )
        return batch, episodes
