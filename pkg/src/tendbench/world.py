"""Batched 2D kinematic world: point-mass circular agents among static rectangles.

All core routines are vectorized over a leading batch dimension so that many
independent world instances step together. The list-based ``detect_contacts``
and ``resolve_contacts`` wrappers expose the same physics for single instances
(handy in tests and layout validation).

Conventions:
  * positions/velocities/forces are float64 arrays with a trailing axis (x, y)
  * agents are circles of one shared radius; every other body is a static
    axis-aligned rectangle with infinite effective mass
  * contact = penetration depth strictly greater than ``contact_eps``
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidActionError, NumericError

NUM_ACTIONS = 5

# Action id -> unit force direction: 0 stay, 1 left, 2 right, 3 down, 4 up.
ACTION_DIRECTIONS = np.array(
    [[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]],
    dtype=np.float64,
)

STATIC_KINDS = ("machine", "blocker", "storage", "wall")


@dataclass(frozen=True)
class WorldConfig:
    """Physics constants. Defaults give max displacement 0.05 units/step;
    force_gain 2.0 lets sustained pushes reach the speed clamp (steady-state
    speed force_gain * dt * (1 - damping) / damping, capped at max_speed)."""

    dt: float = 0.1
    damping: float = 0.25
    force_gain: float = 2.0
    agent_mass: float = 1.0
    max_speed: float = 0.5
    contact_eps: float = 1e-9
    max_resolution_passes: int = 32


@dataclass(frozen=True)
class BodySpec:
    """Shape + role of one body. Circles are dynamic agents, rectangles are static."""

    kind: str
    radius: float | None = None
    half_extents: tuple[float, float] | None = None
    mass: float = 1.0

    def __post_init__(self):
        if self.kind == "agent":
            if self.radius is None or self.radius <= 0:
                raise ValueError(f"agent body needs radius > 0, got {self.radius}")
            if self.mass <= 0:
                raise ValueError(f"agent mass must be > 0, got {self.mass}")
        elif self.kind in STATIC_KINDS:
            if self.half_extents is None or min(self.half_extents) <= 0:
                raise ValueError(
                    f"{self.kind} body needs positive half extents, got {self.half_extents}"
                )
        else:
            raise ValueError(f"unknown body kind {self.kind!r}")

    @property
    def is_static(self) -> bool:
        return self.kind != "agent"


@dataclass(frozen=True)
class KinematicState:
    """Position and velocity of one body, each shaped (2,)."""

    position: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True)
class ContactEvent:
    """Unordered body pair in contact this step; ``onset`` marks the rising edge."""

    body_a: int
    body_b: int
    onset: bool


def action_to_force(actions, force_gain: float = 1.0) -> np.ndarray:
    """Map discrete action ids (0..4) to force vectors with trailing (x, y) axis."""
    acts = np.asarray(actions)
    if acts.size and (acts.min() < 0 or acts.max() >= NUM_ACTIONS):
        bad = acts[(acts < 0) | (acts >= NUM_ACTIONS)].ravel()[0]
        raise InvalidActionError(f"action id {bad} outside 0..{NUM_ACTIONS - 1}")
    return ACTION_DIRECTIONS[acts] * force_gain


def integrate_arrays(
    pos: np.ndarray,
    vel: np.ndarray,
    force: np.ndarray,
    cfg: WorldConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Semi-implicit Euler with multiplicative damping and a hard speed clamp.

    v' = clamp(|(v + (f/m) dt) * (1 - damping)| <= max_speed), p' = p + v' dt.
    Shapes are preserved; inputs are not mutated.
    """
    force = np.asarray(force, dtype=np.float64)
    if not np.all(np.isfinite(force)):
        raise NumericError("non-finite force passed to integrate")
    new_vel = (vel + force * (cfg.dt / cfg.agent_mass)) * (1.0 - cfg.damping)
    speed = np.linalg.norm(new_vel, axis=-1, keepdims=True)
    scale = np.where(speed > cfg.max_speed, cfg.max_speed / np.where(speed == 0, 1.0, speed), 1.0)
    new_vel = new_vel * scale
    new_pos = pos + new_vel * cfg.dt
    return new_pos, new_vel


def integrate(state: KinematicState, force, cfg: WorldConfig) -> KinematicState:
    """Single-body convenience wrapper around :func:`integrate_arrays`."""
    pos, vel = integrate_arrays(
        np.asarray(state.position, dtype=np.float64),
        np.asarray(state.velocity, dtype=np.float64),
        force,
        cfg,
    )
    return KinematicState(position=pos, velocity=vel)


@dataclass(frozen=True)
class StaticSet:
    """Struct-of-arrays view of the static rectangles of one layout."""

    centers: np.ndarray        # [S, 2]
    half_extents: np.ndarray   # [S, 2]
    kinds: tuple[str, ...]

    @property
    def count(self) -> int:
        return len(self.kinds)


def circle_rect_depth(pos, radius, statics: StaticSet):
    """Penetration of circles into rectangles.

    pos [..., 2] against S rectangles -> depth [..., S] and outward push
    normal [..., S, 2] (direction that separates the circle from the rect).
    Depth <= 0 means no overlap; centers inside a rectangle are pushed out
    along the axis of least overlap.
    """
    d = pos[..., None, :] - statics.centers                       # [..., S, 2]
    clipped = np.clip(d, -statics.half_extents, statics.half_extents)
    delta = d - clipped
    dist = np.linalg.norm(delta, axis=-1)                         # [..., S]
    outside = dist > 0.0
    safe = np.where(dist == 0.0, 1.0, dist)
    n_out = delta / safe[..., None]

    # Center inside the rectangle: least-overlap axis, sign of the offset.
    overlap = statics.half_extents - np.abs(clipped)              # [..., S, 2]
    axis = np.argmin(overlap, axis=-1)[..., None]                 # [..., S, 1]
    sign = np.where(np.take_along_axis(d, axis, -1) >= 0.0, 1.0, -1.0)
    n_in = np.zeros_like(d)
    np.put_along_axis(n_in, axis, sign, -1)
    depth_in = radius + np.take_along_axis(overlap, axis, -1)[..., 0]

    depth = np.where(outside, radius - dist, depth_in)
    normal = np.where(outside[..., None], n_out, n_in)
    return depth, normal


def circle_circle_depth(pos, radius, idx_i, idx_j):
    """Penetration for agent pairs: depth [..., P] and normal i -> j [..., P, 2]."""
    d = pos[..., idx_j, :] - pos[..., idx_i, :]
    dist = np.linalg.norm(d, axis=-1)
    safe = np.where(dist == 0.0, 1.0, dist)
    normal = np.where(
        (dist == 0.0)[..., None], np.array([1.0, 0.0]), d / safe[..., None]
    )
    return 2.0 * radius - dist, normal


def agent_pair_indices(n_agents: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (i, j) with i < j enumerating unordered agent pairs."""
    pairs = [(i, j) for i in range(n_agents) for j in range(i + 1, n_agents)]
    if not pairs:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    arr = np.array(pairs, dtype=np.intp)
    return arr[:, 0], arr[:, 1]


def detect_contact_masks(pos, radius, statics: StaticSet, idx_i, idx_j, eps: float):
    """Boolean contact masks: agent-static [B, N, S] and agent-agent [B, P]."""
    as_depth, _ = circle_rect_depth(pos, radius, statics)
    aa_depth, _ = circle_circle_depth(pos, radius, idx_i, idx_j)
    return as_depth > eps, aa_depth > eps


def _rect_pair_depth(p, radius, center, half):
    """One agent column [B, 2] against one rectangle -> depth [B], normal [B, 2]."""
    d = p - center
    clipped = np.clip(d, -half, half)
    delta = d - clipped
    dist = np.linalg.norm(delta, axis=-1)
    outside = dist > 0.0
    safe = np.where(dist == 0.0, 1.0, dist)
    n_out = delta / safe[..., None]
    overlap = half - np.abs(clipped)
    axis = np.argmin(overlap, axis=-1)[..., None]
    sign = np.where(np.take_along_axis(d, axis, -1) >= 0.0, 1.0, -1.0)
    n_in = np.zeros_like(d)
    np.put_along_axis(n_in, axis, sign, -1)
    depth = np.where(outside, radius - dist, radius + np.take_along_axis(overlap, axis, -1)[..., 0])
    return depth, np.where(outside[..., None], n_out, n_in)


def _agent_pair_depth(pos, radius, i, j):
    d = pos[:, j] - pos[:, i]
    dist = np.linalg.norm(d, axis=-1)
    safe = np.where(dist == 0.0, 1.0, dist)
    normal = np.where((dist == 0.0)[..., None], np.array([1.0, 0.0]), d / safe[..., None])
    return 2.0 * radius - dist, normal


def resolve_arrays(pos, vel, radius, statics: StaticSet, idx_i, idx_j, cfg: WorldConfig):
    """Iteratively project agents out of overlap and kill approaching normal velocity.

    pos/vel are [B, N, 2] and mutated in place (pass copies if the inputs must
    survive). Static bodies never move. Agent-agent corrections split the
    overlap equally and zero the relative normal velocity while preserving the
    pair's total normal momentum (equal masses) and tangential velocities.
    Pairs are processed in fixed (agent, static) then (i, j) order per pass,
    so the outcome is deterministic.
    """
    eps = cfg.contact_eps
    for _ in range(cfg.max_resolution_passes):
        as_active, aa_active = detect_contact_masks(pos, radius, statics, idx_i, idx_j, eps)
        if not as_active.any() and not aa_active.any():
            break

        hit_cols = np.nonzero(as_active.any(axis=0))
        for a, s in zip(*hit_cols):
            depth, n = _rect_pair_depth(pos[:, a], radius, statics.centers[s], statics.half_extents[s])
            mask = depth > eps
            if not mask.any():
                continue
            pos[:, a] += np.where(mask[:, None], n * depth[:, None], 0.0)
            vn = np.sum(vel[:, a] * n, axis=-1)
            into = mask & (vn < 0.0)
            vel[:, a] -= np.where(into[:, None], n * vn[:, None], 0.0)

        for p in np.nonzero(aa_active.any(axis=0))[0]:
            i, j = idx_i[p], idx_j[p]
            depth, n = _agent_pair_depth(pos, radius, i, j)
            mask = depth > eps
            if not mask.any():
                continue
            corr = np.where(mask[:, None], n * (0.5 * depth[:, None]), 0.0)
            pos[:, i] -= corr
            pos[:, j] += corr
            vi_n = np.sum(vel[:, i] * n, axis=-1)
            vj_n = np.sum(vel[:, j] * n, axis=-1)
            approaching = mask & (vj_n - vi_n < 0.0)
            avg = 0.5 * (vi_n + vj_n)
            vel[:, i] += np.where(approaching[:, None], n * (avg - vi_n)[:, None], 0.0)
            vel[:, j] += np.where(approaching[:, None], n * (avg - vj_n)[:, None], 0.0)
    return pos, vel


def _split_bodies(bodies):
    agents, statics, order = [], [], []
    for idx, (spec, state) in enumerate(bodies):
        if spec.kind == "agent":
            order.append(("agent", len(agents), idx))
            agents.append((spec, state))
        else:
            order.append(("static", len(statics), idx))
            statics.append((spec, state))
    return agents, statics, order


def _static_set(statics) -> StaticSet:
    if statics:
        centers = np.array([np.asarray(st.position, dtype=np.float64) for _, st in statics])
        halves = np.array([spec.half_extents for spec, _ in statics], dtype=np.float64)
    else:
        centers = np.zeros((0, 2))
        halves = np.zeros((0, 2))
    return StaticSet(centers=centers, half_extents=halves, kinds=tuple(s.kind for s, _ in statics))


def detect_contacts(
    bodies: list[tuple[BodySpec, KinematicState]],
    prev_contacts: set[tuple[int, int]] | None = None,
    cfg: WorldConfig = WorldConfig(),
) -> list[ContactEvent]:
    """Overlap tests for a heterogeneous body list; indices refer to the list order.

    ``prev_contacts`` is the set of pairs in contact on the previous step; a
    pair absent from it is reported with ``onset=True``.
    """
    agents, statics, order = _split_bodies(bodies)
    prev = prev_contacts or set()
    events: list[ContactEvent] = []
    if not agents:
        return events

    pos = np.array([np.asarray(st.position, dtype=np.float64) for _, st in agents])
    radii = [spec.radius for spec, _ in agents]
    agent_ids = [idx for kind, _, idx in order if kind == "agent"]
    static_ids = [idx for kind, _, idx in order if kind == "static"]
    sset = _static_set(statics)

    if sset.count:
        for a, (spec, _) in enumerate(agents):
            depth, _ = circle_rect_depth(pos[a], spec.radius, sset)
            for s in np.nonzero(depth > cfg.contact_eps)[0]:
                pair = tuple(sorted((agent_ids[a], static_ids[s])))
                events.append(ContactEvent(pair[0], pair[1], pair not in prev))

    for a in range(len(agents)):
        for b in range(a + 1, len(agents)):
            dist = float(np.linalg.norm(pos[b] - pos[a]))
            if radii[a] + radii[b] - dist > cfg.contact_eps:
                pair = tuple(sorted((agent_ids[a], agent_ids[b])))
                events.append(ContactEvent(pair[0], pair[1], pair not in prev))
    return events


def resolve_contacts(
    bodies: list[tuple[BodySpec, KinematicState]],
    contacts: list[ContactEvent],
    cfg: WorldConfig = WorldConfig(),
) -> list[KinematicState]:
    """Return post-resolution kinematic states aligned with the input list.

    The passed contacts are the trigger set from :func:`detect_contacts`; the
    projection itself iterates until no overlap remains, so secondary overlaps
    created by a correction are also removed.
    """
    agents, statics, order = _split_bodies(bodies)
    if not agents or not contacts:
        return [replace(st) for _, st in bodies]

    radius = agents[0][0].radius
    if any(spec.radius != radius for spec, _ in agents):
        raise ValueError("resolve_contacts expects one shared agent radius")

    pos = np.array([np.asarray(st.position, dtype=np.float64) for _, st in agents])[None]
    vel = np.array([np.asarray(st.velocity, dtype=np.float64) for _, st in agents])[None]
    idx_i, idx_j = agent_pair_indices(len(agents))
    pos, vel = resolve_arrays(pos, vel, radius, _static_set(statics), idx_i, idx_j, cfg)
    pos, vel = pos[0], vel[0]

    out: list[KinematicState] = []
    for kind, local, _ in order:
        if kind == "agent":
            out.append(KinematicState(position=pos[local].copy(), velocity=vel[local].copy()))
        else:
            st = statics[local][1]
            out.append(KinematicState(position=np.asarray(st.position, dtype=np.float64).copy(),
                                      velocity=np.asarray(st.velocity, dtype=np.float64).copy()))
    return out
