"""Per-agent, per-component reward computation with every ablation toggle.

Seven components are produced for every agent on every transition:

  * pick / place: event rewards, optionally broadcast to all agents
  * collision: penalty per contact onset (or per contacting step via toggle)
  * progress_machine: pr * (d_prev - d_curr) toward the closest machine with a
    ready part, active only while the agent carries nothing; the target is
    chosen on the pre-step state so picking the part this step still pays out
  * progress_storage: the mirror term toward the storage anchor while carrying
  * uncollected: global machine-idleness penalty, fixed (count of waiting
    machines) or increasing (total steps their parts have waited)
  * time: flat penalty whenever pick, place and uncollected are all zero

The total is exactly the sum of the seven components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError
from .scenario import LayoutSpec, ScenarioState, StepEvents

UNCOLLECTED_MODES = ("fixed", "increasing")


@dataclass(frozen=True)
class RewardConfig:
    pick_reward: float = 1.0
    place_reward: float = 2.0
    collision_penalty: float = -1.0
    progress_scale: float = 0.5
    uncollected_scale: float = -0.005
    time_penalty: float = -0.01
    share_pick_place: bool = False
    uncollected_mode: str = "fixed"
    enable_time_penalty: bool = True
    enable_distance_shaping: bool = True
    enable_uncollected_penalty: bool = True
    collision_on_onset_only: bool = True

    def __post_init__(self):
        values = (
            self.pick_reward, self.place_reward, self.collision_penalty,
            self.progress_scale, self.uncollected_scale, self.time_penalty,
        )
        if not all(np.isfinite(v) for v in values):
            raise ValueError(f"reward scales must be finite, got {values}")
        if self.pick_reward < 0 or self.place_reward < 0:
            raise ValueError("pick/place rewards must be >= 0")
        if self.collision_penalty > 0 or self.uncollected_scale > 0 or self.time_penalty > 0:
            raise ValueError("collision/uncollected/time values must be <= 0")
        if self.uncollected_mode not in UNCOLLECTED_MODES:
            raise ValueError(
                f"uncollected_mode must be one of {UNCOLLECTED_MODES}, "
                f"got {self.uncollected_mode!r}"
            )


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-component rewards, each shaped [B, N]; total is their exact sum."""

    pick: np.ndarray
    place: np.ndarray
    collision: np.ndarray
    progress_machine: np.ndarray
    progress_storage: np.ndarray
    uncollected: np.ndarray
    time: np.ndarray
    total: np.ndarray

    COMPONENTS = (
        "pick", "place", "collision", "progress_machine",
        "progress_storage", "uncollected", "time",
    )

    def stacked(self) -> np.ndarray:
        """Components stacked on a trailing axis: [B, N, 7]."""
        return np.stack([getattr(self, c) for c in self.COMPONENTS], axis=-1)


def progress_to_machine(d_prev, d_curr, has_part, pr: float):
    """pr * (d_prev - d_curr) while the agent has no part, else 0."""
    return np.where(~np.asarray(has_part, dtype=bool), pr * (d_prev - d_curr), 0.0)


def progress_to_storage(d_prev, d_curr, has_part, pr: float):
    """pr * (d_prev - d_curr) while the agent has a part, else 0."""
    return np.where(np.asarray(has_part, dtype=bool), pr * (d_prev - d_curr), 0.0)


def uncollected_penalty(ready, ns, config: RewardConfig):
    """Global penalty per env: count of ready machines or summed waiting steps."""
    if config.uncollected_mode == "fixed":
        return config.uncollected_scale * ready.sum(axis=-1).astype(np.float64)
    return config.uncollected_scale * ns.sum(axis=-1).astype(np.float64)


class RewardEngine:
    """Computes reward breakdowns for batched scenario transitions."""

    def __init__(self, layout: LayoutSpec, config: RewardConfig = RewardConfig()):
        self.layout = layout
        self.config = config
        self.anchors = np.array(layout.machine_anchors, dtype=np.float64)
        self.storage_anchor = np.array(layout.storage_anchor, dtype=np.float64)

    def compute(
        self,
        prev: ScenarioState,
        curr: ScenarioState,
        events: list[StepEvents],
    ) -> RewardBreakdown:
        cfg = self.config
        if curr.t != prev.t + 1 or curr.pos.shape != prev.pos.shape:
            raise ConsistencyError(
                f"states are not a direct transition: t {prev.t}->{curr.t}, "
                f"shapes {prev.pos.shape} vs {curr.pos.shape}"
            )
        B, N = prev.pos.shape[:2]
        if len(events) != B:
            raise ConsistencyError(f"{len(events)} event records for batch of {B}")

        pick_count = np.zeros((B, N))
        place_count = np.zeros((B, N))
        picks_per_env = np.zeros(B)
        places_per_env = np.zeros(B)
        for b, ev in enumerate(events):
            picks_per_env[b] = len(ev.picks)
            places_per_env[b] = len(ev.places)
            for agent, _ in ev.picks:
                pick_count[b, agent] += 1
            for agent in ev.places:
                place_count[b, agent] += 1

        if cfg.share_pick_place:
            r_pick = cfg.pick_reward * np.broadcast_to(picks_per_env[:, None], (B, N)).copy()
            r_place = cfg.place_reward * np.broadcast_to(places_per_env[:, None], (B, N)).copy()
        else:
            r_pick = cfg.pick_reward * pick_count
            r_place = cfg.place_reward * place_count

        if cfg.collision_on_onset_only:
            as_hits = (curr.as_contact & ~prev.as_contact).sum(axis=2)
            aa_hits = curr.aa_contact & ~prev.aa_contact
        else:
            as_hits = curr.as_contact.sum(axis=2)
            aa_hits = curr.aa_contact
        contact_count = as_hits.astype(np.float64)
        if aa_hits.shape[1]:
            from .world import agent_pair_indices

            idx_i, idx_j = agent_pair_indices(N)
            for p in range(len(idx_i)):
                contact_count[:, idx_i[p]] += aa_hits[:, p]
                contact_count[:, idx_j[p]] += aa_hits[:, p]
        r_collision = cfg.collision_penalty * contact_count

        r_pm = np.zeros((B, N))
        r_ps = np.zeros((B, N))
        if cfg.enable_distance_shaping:
            d_prev_all = np.linalg.norm(prev.pos[:, :, None, :] - self.anchors, axis=-1)
            d_curr_all = np.linalg.norm(curr.pos[:, :, None, :] - self.anchors, axis=-1)
            masked = np.where(prev.ready[:, None, :], d_prev_all, np.inf)
            target = masked.argmin(axis=2)                     # [B, N]
            any_ready = prev.ready.any(axis=1)[:, None]        # [B, 1]
            d_prev = np.take_along_axis(d_prev_all, target[:, :, None], 2)[:, :, 0]
            d_curr = np.take_along_axis(d_curr_all, target[:, :, None], 2)[:, :, 0]
            r_pm = np.where(
                any_ready & ~prev.has_part,
                progress_to_machine(d_prev, d_curr, prev.has_part, cfg.progress_scale),
                0.0,
            )
            ds_prev = np.linalg.norm(prev.pos - self.storage_anchor, axis=-1)
            ds_curr = np.linalg.norm(curr.pos - self.storage_anchor, axis=-1)
            r_ps = progress_to_storage(ds_prev, ds_curr, prev.has_part, cfg.progress_scale)

        if cfg.enable_uncollected_penalty:
            r_unc = np.broadcast_to(
                uncollected_penalty(curr.ready, curr.ns, cfg)[:, None], (B, N)
            ).copy()
        else:
            r_unc = np.zeros((B, N))

        if cfg.enable_time_penalty:
            idle = (r_pick == 0.0) & (r_place == 0.0) & (r_unc == 0.0)
            r_time = np.where(idle, cfg.time_penalty, 0.0)
        else:
            r_time = np.zeros((B, N))

        total = r_pick + r_place + r_collision + r_pm + r_ps + r_unc + r_time
        return RewardBreakdown(
            pick=r_pick, place=r_place, collision=r_collision,
            progress_machine=r_pm, progress_storage=r_ps,
            uncollected=r_unc, time=r_time, total=total,
        )
