"""Generalized advantage estimation over time-major reward/value arrays."""

from __future__ import annotations

import numpy as np


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Recursive GAE: delta_t = r_t + gamma V_{t+1} (1 - d_t) - V_t,
    A_t = delta_t + gamma lam (1 - d_t) A_{t+1}; returns = A + V.

    All inputs are time-major [T, ...]; ``bootstrap_value`` matches the
    trailing shape and stands in for V_{T}. Episode boundaries (dones) stop
    both the bootstrap and the advantage recursion.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(
            f"length mismatch: rewards {rewards.shape}, values {values.shape}, "
            f"dones {dones.shape}"
        )
    T = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    acc = np.zeros_like(next_value)
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        acc = delta + gamma * lam * nonterminal * acc
        advantages[t] = acc
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Shift/scale to zero mean and unit std (over all elements)."""
    return (adv - adv.mean()) / (adv.std() + eps)
