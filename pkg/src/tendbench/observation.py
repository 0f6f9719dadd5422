"""Per-agent observation vectors with every ablation variant as a config toggle.

Field order is fixed so checkpoints stay portable across runs:

  1. self block: absolute position (2), velocity (2, optional), has-part (1)
  2. machine blocks, layout order: relative position (2, or 4 as two opposite
     corners), ready flag (1), time-since-ready (1, optional, scaled by 1/T)
  3. storage block: relative position (2 | 4)
  4. other agents, ascending index, self excluded: relative position (2),
     velocity (2, optional), has-part (1)
  5. blocker blocks (optional), layout order: relative position (2 | 4)
  6. wall blocks (optional), layout order: relative position (2 | 4)

Relative positions are target point minus agent center. With ``normalize``
enabled, absolute coordinates map through (p - min) / (max - min) and signed
offsets through (p + extent) / (2 extent), both landing in [0, 1]; velocities
use the offset map with extent = max_speed. Two-corner mode applies to
rectangular entities only (agents are circles and stay as centers).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import LayoutSpec, ScenarioState

ENTITY_REPRESENTATIONS = ("center", "two_corners")


@dataclass(frozen=True)
class ObservationConfig:
    include_velocities: bool = False
    include_time_since_ready: bool = False
    normalize: bool = True
    entity_representation: str = "center"
    include_blockers: bool = False
    include_walls: bool = True

    def __post_init__(self):
        if self.entity_representation not in ENTITY_REPRESENTATIONS:
            raise ValueError(
                f"entity_representation must be one of {ENTITY_REPRESENTATIONS}, "
                f"got {self.entity_representation!r}"
            )


def normalize_absolute(p: np.ndarray, width: float, height: float) -> np.ndarray:
    """Affine map of absolute coordinates into [0, 1]^2."""
    lo = np.array([-width / 2, -height / 2])
    return (p - lo) / np.array([width, height])


def normalize_relative(p: np.ndarray, width: float, height: float) -> np.ndarray:
    """Affine map of signed offsets in [-extent, +extent] into [0, 1]^2."""
    extent = np.array([width, height])
    return (p + extent) / (2.0 * extent)


def observation_dim(config: ObservationConfig, n_agents: int, n_machines: int,
                    n_blockers: int, n_walls: int = 4) -> int:
    """Observation length as a pure function of (config, entity counts)."""
    rect_pts = 4 if config.entity_representation == "two_corners" else 2
    vel = 2 if config.include_velocities else 0
    tsr = 1 if config.include_time_since_ready else 0
    dim = 2 + vel + 1
    dim += n_machines * (rect_pts + 1 + tsr)
    dim += rect_pts
    dim += (n_agents - 1) * (2 + vel + 1)
    if config.include_blockers:
        dim += n_blockers * rect_pts
    if config.include_walls:
        dim += n_walls * rect_pts
    return dim


class ObservationBuilder:
    """Builds observation arrays [B, N, D] from a batched scenario state."""

    def __init__(self, layout: LayoutSpec, config: ObservationConfig,
                 episode_length: int = 200, max_speed: float = 0.5):
        self.layout = layout
        self.config = config
        self.episode_length = episode_length
        self.max_speed = max_speed
        self.clamped_entries = 0  # diagnostic: out-of-range values clipped
        self.dim = observation_dim(
            config, layout.n_agents, layout.n_machines, len(layout.blockers)
        )
        self._machine_pts = self._rect_points(layout.machines)
        self._storage_pts = self._rect_points((layout.storage,))
        self._blocker_pts = self._rect_points(layout.blockers)
        self._wall_pts = self._rect_points(layout.walls)

    def _rect_points(self, rects) -> np.ndarray:
        """Representation points per rect: centers [R, 1, 2] or corners [R, 2, 2]."""
        if not rects:
            return np.zeros((0, 1, 2))
        centers = np.array([r.center for r in rects], dtype=np.float64)
        if self.config.entity_representation == "center":
            return centers[:, None, :]
        halves = np.array([r.half_extents for r in rects], dtype=np.float64)
        return np.stack([centers - halves, centers + halves], axis=1)

    def _norm_abs(self, p):
        if not self.config.normalize:
            return p
        out = normalize_absolute(p, self.layout.width, self.layout.height)
        return self._clamp01(out)

    def _norm_rel(self, p):
        if not self.config.normalize:
            return p
        out = normalize_relative(p, self.layout.width, self.layout.height)
        return self._clamp01(out)

    def _norm_vel(self, v):
        if not self.config.normalize:
            return v
        out = (v + self.max_speed) / (2.0 * self.max_speed)
        return self._clamp01(out)

    def _clamp01(self, x):
        bad = int((x < 0.0).sum() + (x > 1.0).sum())
        if bad:
            self.clamped_entries += bad
            return np.clip(x, 0.0, 1.0)
        return x

    def _rel_block(self, points, pos):
        """Offsets of entity points from each agent: [B, N, R*P*2] flattened."""
        B, N = pos.shape[:2]
        if points.size == 0:
            return np.zeros((B, N, 0))
        rel = points.reshape(1, 1, -1, 2) - pos[:, :, None, :]
        return self._norm_rel(rel).reshape(B, N, -1)

    def build(self, state: ScenarioState) -> np.ndarray:
        """Observation array [B, N, dim] for every agent in every env."""
        cfg = self.config
        B, N = state.pos.shape[:2]
        parts = [self._norm_abs(state.pos)]
        if cfg.include_velocities:
            parts.append(self._norm_vel(state.vel))
        parts.append(state.has_part[..., None].astype(np.float64))

        machine_rel = self._rel_block(self._machine_pts, state.pos)
        pts_per_machine = machine_rel.shape[2] // self.layout.n_machines
        machine_rel = machine_rel.reshape(B, N, self.layout.n_machines, pts_per_machine)
        machine_block = [machine_rel, np.broadcast_to(
            state.ready[:, None, :, None], (B, N, self.layout.n_machines, 1)
        ).astype(np.float64)]
        if cfg.include_time_since_ready:
            tsr = state.ns.astype(np.float64) / self.episode_length
            machine_block.append(np.broadcast_to(
                tsr[:, None, :, None], (B, N, self.layout.n_machines, 1)
            ))
        parts.append(np.concatenate(machine_block, axis=3).reshape(B, N, -1))

        parts.append(self._rel_block(self._storage_pts, state.pos))

        # other agents, ascending index with self removed
        rel_all = state.pos[:, None, :, :] - state.pos[:, :, None, :]   # [B, i, j, 2]
        others = []
        for i in range(N):
            idx = [j for j in range(N) if j != i]
            entry = [self._norm_rel(rel_all[:, i, idx])]
            if cfg.include_velocities:
                entry.append(self._norm_vel(state.vel[:, idx]))
            entry.append(state.has_part[:, idx].astype(np.float64)[..., None])
            others.append(np.concatenate(entry, axis=2).reshape(B, -1))
        parts.append(np.stack(others, axis=1))

        if cfg.include_blockers:
            parts.append(self._rel_block(self._blocker_pts, state.pos))
        if cfg.include_walls:
            parts.append(self._rel_block(self._wall_pts, state.pos))

        obs = np.concatenate(parts, axis=2)
        assert obs.shape == (B, N, self.dim)
        return obs

    def field_layout(self) -> list[tuple[str, int]]:
        """(field name, width) pairs in emission order; widths sum to ``dim``."""
        cfg = self.config
        rect_pts = 4 if cfg.entity_representation == "two_corners" else 2
        fields = [("self.position", 2)]
        if cfg.include_velocities:
            fields.append(("self.velocity", 2))
        fields.append(("self.has_part", 1))
        for m in range(self.layout.n_machines):
            fields.append((f"machine[{m}].relative_position", rect_pts))
            fields.append((f"machine[{m}].ready", 1))
            if cfg.include_time_since_ready:
                fields.append((f"machine[{m}].time_since_ready", 1))
        fields.append(("storage.relative_position", rect_pts))
        for k in range(self.layout.n_agents - 1):
            fields.append((f"other[{k}].relative_position", 2))
            if cfg.include_velocities:
                fields.append((f"other[{k}].velocity", 2))
            fields.append((f"other[{k}].has_part", 1))
        if cfg.include_blockers:
            for b in range(len(self.layout.blockers)):
                fields.append((f"blocker[{b}].relative_position", rect_pts))
        if cfg.include_walls:
            for w in range(len(self.layout.walls)):
                fields.append((f"wall[{w}].relative_position", rect_pts))
        assert sum(w for _, w in fields) == self.dim
        return fields
