"""Machine-tending game logic: layouts, production timers, pick/place resolution.

The scenario is batched like the world. State transitions are pure: ``step``
returns a new :class:`ScenarioState` and leaves its input untouched, so
identical (layout, seed, action log) inputs replay to identical trajectories.

Entity ids used in contact events: agents are ``0..N-1``; static bodies follow
in layout order (machines, blockers, storage, walls) starting at ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import world
from .errors import EpisodeFinishedError, LayoutError
from .world import ContactEvent, StaticSet, WorldConfig


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle given by center and half extents."""

    center: tuple[float, float]
    half_extents: tuple[float, float]

    def contains(self, point, strict: bool = True) -> bool:
        dx = abs(point[0] - self.center[0])
        dy = abs(point[1] - self.center[1])
        if strict:
            return dx < self.half_extents[0] and dy < self.half_extents[1]
        return dx <= self.half_extents[0] and dy <= self.half_extents[1]


@dataclass(frozen=True)
class LayoutSpec:
    """Immutable geometry of one scenario instance.

    ``machine_anchors`` are the pick-zone points on each machine's unblocked
    face; ``storage_anchor`` is the steering target used by reward shaping.
    The four walls line the inside of the declared bounds, so every body stays
    within [-width/2, width/2] x [-height/2, height/2].
    """

    width: float
    height: float
    agent_radius: float
    spawns: tuple[tuple[float, float], ...]
    machines: tuple[Rect, ...]
    machine_anchors: tuple[tuple[float, float], ...]
    blockers: tuple[Rect, ...]
    storage: Rect
    storage_anchor: tuple[float, float]
    walls: tuple[Rect, ...]

    @property
    def n_agents(self) -> int:
        return len(self.spawns)

    @property
    def n_machines(self) -> int:
        return len(self.machines)

    def static_rects(self) -> tuple[Rect, ...]:
        """Static bodies in contact-id order: machines, blockers, storage, walls."""
        return self.machines + self.blockers + (self.storage,) + self.walls

    def static_kinds(self) -> tuple[str, ...]:
        return (
            ("machine",) * len(self.machines)
            + ("blocker",) * len(self.blockers)
            + ("storage",)
            + ("wall",) * len(self.walls)
        )

    def static_set(self) -> StaticSet:
        rects = self.static_rects()
        return StaticSet(
            centers=np.array([r.center for r in rects], dtype=np.float64),
            half_extents=np.array([r.half_extents for r in rects], dtype=np.float64),
            kinds=self.static_kinds(),
        )

    def entity_name(self, entity_id: int) -> str:
        """Human-readable name for an agent/static contact-event id."""
        if entity_id < self.n_agents:
            return f"agent {entity_id}"
        s = entity_id - self.n_agents
        kinds = self.static_kinds()
        label = kinds[s]
        nth = sum(1 for k in kinds[:s] if k == label)
        return label if label == "storage" else f"{label} {nth}"


def default_layout() -> LayoutSpec:
    """Three agents idle at the top, two machines with outer-side blockers,
    storage at the bottom. Pick anchors sit on the machines' inner faces so
    the approach from the idle row is unobstructed."""
    wall_t = 0.05
    hw, hh = 1.5, 1.5
    return LayoutSpec(
        width=3.0,
        height=3.0,
        agent_radius=0.08,
        spawns=((-0.6, 1.25), (0.0, 1.25), (0.6, 1.25)),
        machines=(Rect((-0.8, 0.1), (0.2, 0.2)), Rect((0.8, 0.1), (0.2, 0.2))),
        machine_anchors=((-0.6, 0.1), (0.6, 0.1)),
        blockers=(Rect((-1.06, 0.1), (0.06, 0.25)), Rect((1.06, 0.1), (0.06, 0.25))),
        storage=Rect((0.0, -1.15), (0.35, 0.15)),
        storage_anchor=(0.0, -1.0),
        walls=(
            Rect((0.0, hh - wall_t), (hw, wall_t)),
            Rect((0.0, -(hh - wall_t)), (hw, wall_t)),
            Rect((-(hw - wall_t), 0.0), (wall_t, hh - 2 * wall_t)),
            Rect((hw - wall_t, 0.0), (wall_t, hh - 2 * wall_t)),
        ),
    )


def _rects_overlap(a: Rect, b: Rect, eps: float = 1e-12) -> bool:
    return (
        abs(a.center[0] - b.center[0]) < a.half_extents[0] + b.half_extents[0] - eps
        and abs(a.center[1] - b.center[1]) < a.half_extents[1] + b.half_extents[1] - eps
    )


def _circle_rect_gap(point, radius, rect: Rect) -> float:
    """Signed clearance between a circle and a rectangle (negative = overlap)."""
    dx = max(abs(point[0] - rect.center[0]) - rect.half_extents[0], 0.0)
    dy = max(abs(point[1] - rect.center[1]) - rect.half_extents[1], 0.0)
    inside_x = abs(point[0] - rect.center[0]) - rect.half_extents[0]
    inside_y = abs(point[1] - rect.center[1]) - rect.half_extents[1]
    if inside_x < 0 and inside_y < 0:
        return max(inside_x, inside_y) - radius
    return float(np.hypot(dx, dy)) - radius


def validate_layout(layout: LayoutSpec) -> None:
    """Raise :class:`LayoutError` listing every violation, or return silently."""
    problems: list[str] = []
    if layout.n_agents < 1:
        problems.append("at least one agent spawn is required")
    if layout.n_machines < 1:
        problems.append("at least one machine is required")
    if len(layout.machine_anchors) != layout.n_machines:
        problems.append(
            f"{layout.n_machines} machines but {len(layout.machine_anchors)} anchors"
        )
    if len(layout.walls) != 4:
        problems.append(f"expected 4 boundary walls, got {len(layout.walls)}")
    if layout.agent_radius <= 0:
        problems.append(f"agent radius must be > 0, got {layout.agent_radius}")

    hw, hh = layout.width / 2, layout.height / 2
    statics = layout.static_rects()
    kinds = layout.static_kinds()
    for rect, kind in zip(statics, kinds):
        if (
            abs(rect.center[0]) + rect.half_extents[0] > hw + 1e-9
            or abs(rect.center[1]) + rect.half_extents[1] > hh + 1e-9
        ):
            problems.append(f"{kind} at {rect.center} extends outside the world bounds")

    for i in range(len(statics)):
        for j in range(i + 1, len(statics)):
            if _rects_overlap(statics[i], statics[j]):
                problems.append(
                    f"{kinds[i]} at {statics[i].center} overlaps {kinds[j]} at {statics[j].center}"
                )

    for k, spawn in enumerate(layout.spawns):
        for rect, kind in zip(statics, kinds):
            if _circle_rect_gap(spawn, layout.agent_radius, rect) < 0:
                problems.append(f"spawn {k} at {spawn} overlaps {kind} at {rect.center}")
        for k2 in range(k + 1, len(layout.spawns)):
            d = np.hypot(
                layout.spawns[k2][0] - spawn[0], layout.spawns[k2][1] - spawn[1]
            )
            if d < 2 * layout.agent_radius:
                problems.append(f"spawns {k} and {k2} overlap")

    for m, anchor in enumerate(layout.machine_anchors):
        for blocker in layout.blockers:
            if blocker.contains(anchor):
                problems.append(f"machine {m} anchor {anchor} lies inside a blocker")
    for blocker in layout.blockers:
        if blocker.contains(layout.storage_anchor):
            problems.append(f"storage anchor {layout.storage_anchor} lies inside a blocker")

    if problems:
        raise LayoutError("invalid layout:\n  - " + "\n  - ".join(problems))


@dataclass(frozen=True)
class ScenarioConfig:
    """Episode and pick/place rules.

    Picks trigger within ``agent_radius + pick_margin`` of a machine anchor;
    places trigger within ``agent_radius + place_margin`` of the storage
    rectangle (the storage body itself is solid, so a dilated-overlap test is
    what makes delivery possible after contact resolution).
    """

    episode_length: int = 200
    production_delay: int = 20
    pick_margin: float = 0.05
    place_margin: float = 0.05
    spawn_jitter: float = 0.0


@dataclass(frozen=True)
class StepEvents:
    """Discrete events of one step in one environment instance."""

    picks: tuple[tuple[int, int], ...] = ()
    places: tuple[int, ...] = ()
    contact_onsets: tuple[ContactEvent, ...] = ()


@dataclass(frozen=True)
class ScenarioState:
    """Batched mutable-world snapshot; arrays carry a leading env dimension."""

    t: int
    pos: np.ndarray               # [B, N, 2]
    vel: np.ndarray               # [B, N, 2]
    has_part: np.ndarray          # [B, N] bool
    ready: np.ndarray             # [B, M] bool
    timer: np.ndarray             # [B, M] int32
    ns: np.ndarray                # [B, M] int32, steps the ready part has waited
    parts_produced: np.ndarray    # [B, M]
    machine_collected: np.ndarray  # [B, M]
    agent_collected: np.ndarray   # [B, N]
    agent_delivered: np.ndarray   # [B, N]
    agent_collisions: np.ndarray  # [B, N]
    as_contact: np.ndarray        # [B, N, S] bool, previous-step contact set
    aa_contact: np.ndarray        # [B, P] bool

    @property
    def batch_size(self) -> int:
        return self.pos.shape[0]


def resolve_pick_contention(candidates: list[tuple[int, float]]) -> int:
    """Winner among (agent index, distance) candidates: closest, ties to lowest index."""
    return min(candidates, key=lambda c: (c[1], c[0]))[0]


def update_production(ready, timer, ns, picked, delay: int):
    """Advance machine production by one step.

    Machines picked this step keep the freshly set (not ready, timer=delay)
    state. Other non-ready machines count down; a timer reaching zero makes
    the machine ready with a new part (ns=0). Machines that stay ready age
    their waiting part by one step. Returns (ready, timer, ns, newly_ready).
    """
    ready = ready.copy()
    timer = timer.copy()
    ns = ns.copy()
    counting = ~picked & ~ready
    timer[counting] -= 1
    newly = counting & (timer == 0)
    ready[newly] = True
    ns[newly] = 0
    waiting = ~picked & ready & ~newly
    ns[waiting] += 1
    return ready, timer, ns, newly


class TendingScenario:
    """Batched machine-tending episodes over a fixed layout."""

    def __init__(
        self,
        layout: LayoutSpec,
        config: ScenarioConfig = ScenarioConfig(),
        world_config: WorldConfig = WorldConfig(),
        batch_size: int = 1,
    ):
        validate_layout(layout)
        self.layout = layout
        self.config = config
        self.world_config = world_config
        self.batch_size = batch_size
        self.n_agents = layout.n_agents
        self.n_machines = layout.n_machines
        self.statics = layout.static_set()
        self.anchors = np.array(layout.machine_anchors, dtype=np.float64)
        self.pair_i, self.pair_j = world.agent_pair_indices(self.n_agents)
        self.pick_radius = layout.agent_radius + config.pick_margin
        self.place_radius = layout.agent_radius + config.place_margin
        self._storage_center = np.array(layout.storage.center)
        self._storage_half = np.array(layout.storage.half_extents)

    def reset(self, seed: int | np.random.Generator = 0) -> ScenarioState:
        """Fresh episode: agents at spawns, all machines ready with a part."""
        B, N, M = self.batch_size, self.n_agents, self.n_machines
        pos = np.broadcast_to(
            np.array(self.layout.spawns, dtype=np.float64), (B, N, 2)
        ).copy()
        if self.config.spawn_jitter > 0:
            rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
            pos += rng.uniform(-self.config.spawn_jitter, self.config.spawn_jitter, size=(B, N, 2))
            vel = np.zeros((B, N, 2))
            world.resolve_arrays(
                pos, vel, self.layout.agent_radius, self.statics,
                self.pair_i, self.pair_j, self.world_config,
            )
        return ScenarioState(
            t=0,
            pos=pos,
            vel=np.zeros((B, N, 2)),
            has_part=np.zeros((B, N), dtype=bool),
            ready=np.ones((B, M), dtype=bool),
            timer=np.zeros((B, M), dtype=np.int32),
            ns=np.zeros((B, M), dtype=np.int32),
            parts_produced=np.ones((B, M), dtype=np.int64),
            machine_collected=np.zeros((B, M), dtype=np.int64),
            agent_collected=np.zeros((B, N), dtype=np.int64),
            agent_delivered=np.zeros((B, N), dtype=np.int64),
            agent_collisions=np.zeros((B, N), dtype=np.int64),
            as_contact=np.zeros((B, N, self.statics.count), dtype=bool),
            aa_contact=np.zeros((B, len(self.pair_i)), dtype=bool),
        )

    def anchor_distances(self, pos: np.ndarray) -> np.ndarray:
        """Distance from each agent center to each machine anchor: [B, N, M]."""
        return np.linalg.norm(pos[:, :, None, :] - self.anchors, axis=-1)

    def storage_distance(self, pos: np.ndarray) -> np.ndarray:
        """Distance from agent centers to the storage rectangle (0 inside): [B, N]."""
        d = np.abs(pos - self._storage_center) - self._storage_half
        return np.linalg.norm(np.maximum(d, 0.0), axis=-1)

    def step(self, state: ScenarioState, actions) -> tuple[ScenarioState, list[StepEvents]]:
        """Advance one step: physics, contacts, picks, places, production."""
        cfg = self.config
        if state.t >= cfg.episode_length:
            raise EpisodeFinishedError(
                f"episode already finished at t={state.t} (length {cfg.episode_length})"
            )
        actions = np.asarray(actions)
        if actions.shape != (state.batch_size, self.n_agents):
            raise ValueError(
                f"actions shape {actions.shape} != {(state.batch_size, self.n_agents)}"
            )

        force = world.action_to_force(actions, self.world_config.force_gain)
        pos, vel = world.integrate_arrays(state.pos, state.vel, force, self.world_config)

        as_mask, aa_mask = world.detect_contact_masks(
            pos, self.layout.agent_radius, self.statics,
            self.pair_i, self.pair_j, self.world_config.contact_eps,
        )
        as_onset = as_mask & ~state.as_contact
        aa_onset = aa_mask & ~state.aa_contact

        agent_collisions = state.agent_collisions + as_onset.sum(axis=2)
        if len(self.pair_i):
            pair_hits = aa_onset.astype(np.int64)
            for p, (i, j) in enumerate(zip(self.pair_i, self.pair_j)):
                agent_collisions[:, i] += pair_hits[:, p]
                agent_collisions[:, j] += pair_hits[:, p]

        world.resolve_arrays(
            pos, vel, self.layout.agent_radius, self.statics,
            self.pair_i, self.pair_j, self.world_config,
        )

        has_part = state.has_part.copy()
        ready = state.ready.copy()
        timer = state.timer.copy()
        ns = state.ns.copy()
        machine_collected = state.machine_collected.copy()
        agent_collected = state.agent_collected.copy()
        agent_delivered = state.agent_delivered.copy()

        picked_now = np.zeros_like(ready)
        picks_per_env: list[list[tuple[int, int]]] = [[] for _ in range(state.batch_size)]
        dists = self.anchor_distances(pos)
        eligible = (~has_part[:, :, None]) & ready[:, None, :] & (dists <= self.pick_radius)
        agent_picked_now = np.zeros_like(has_part)
        if eligible.any():
            for b in np.nonzero(eligible.any(axis=(1, 2)))[0]:
                for m in range(self.n_machines):
                    cands = [
                        (int(a), float(dists[b, a, m]))
                        for a in np.nonzero(eligible[b, :, m])[0]
                        if not agent_picked_now[b, a]
                    ]
                    if not cands:
                        continue
                    winner = resolve_pick_contention(cands)
                    picks_per_env[b].append((winner, m))
                    agent_picked_now[b, winner] = True
                    has_part[b, winner] = True
                    agent_collected[b, winner] += 1
                    machine_collected[b, m] += 1
                    ready[b, m] = False
                    timer[b, m] = cfg.production_delay
                    ns[b, m] = 0
                    picked_now[b, m] = True

        storage_gap = self.storage_distance(pos)
        placing = has_part & ~agent_picked_now & (storage_gap <= self.place_radius)
        places_per_env: list[list[int]] = [[] for _ in range(state.batch_size)]
        if placing.any():
            has_part[placing] = False
            agent_delivered += placing
            for b, a in zip(*np.nonzero(placing)):
                places_per_env[b].append(int(a))

        ready, timer, ns, newly = update_production(
            ready, timer, ns, picked_now, cfg.production_delay
        )
        parts_produced = state.parts_produced + newly

        events = [
            StepEvents(
                picks=tuple(picks_per_env[b]),
                places=tuple(places_per_env[b]),
                contact_onsets=self._onset_events(as_onset[b], aa_onset[b]),
            )
            for b in range(state.batch_size)
        ]
        new_state = ScenarioState(
            t=state.t + 1,
            pos=pos,
            vel=vel,
            has_part=has_part,
            ready=ready,
            timer=timer,
            ns=ns,
            parts_produced=parts_produced,
            machine_collected=machine_collected,
            agent_collected=agent_collected,
            agent_delivered=agent_delivered,
            agent_collisions=agent_collisions,
            as_contact=as_mask,
            aa_contact=aa_mask,
        )
        return new_state, events

    def _onset_events(self, as_onset_env, aa_onset_env) -> tuple[ContactEvent, ...]:
        N = self.n_agents
        out = [
            ContactEvent(int(a), N + int(s), True)
            for a, s in zip(*np.nonzero(as_onset_env))
        ]
        out.extend(
            ContactEvent(int(self.pair_i[p]), int(self.pair_j[p]), True)
            for p in np.nonzero(aa_onset_env)[0]
        )
        return tuple(out)
