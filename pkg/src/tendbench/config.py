"""Experiment configuration: YAML loading, validation, round-trip serialization.

A config document has nested sections (observation, reward, training,
scenario, world) plus top-level run settings. Unknown keys are rejected at
every level so typos fail loudly. ``layout`` accepts the name of a shipped
preset ("default"), a path to a layout YAML (relative paths resolve against
the config file), or an inline mapping.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .observation import ObservationConfig
from .reward import RewardConfig
from .scenario import LayoutSpec, Rect, ScenarioConfig, default_layout, validate_layout
from .trainer import TrainConfig
from .trainer.networks import CRITIC_VARIANTS
from .world import WorldConfig

LAYOUT_PRESETS = {"default": default_layout}


@dataclass(frozen=True)
class ExperimentConfig:
    layout_ref: object                 # "default" | path string | inline dict
    layout: LayoutSpec
    observation: ObservationConfig = ObservationConfig()
    reward: RewardConfig = RewardConfig()
    training: TrainConfig = TrainConfig()
    scenario: ScenarioConfig = ScenarioConfig()
    world: WorldConfig = WorldConfig()
    critic: str = "attention"
    critic_concat_all_obs: bool = False
    count_agent_pairs_once: bool = False
    seeds: tuple[int, ...] = (0, 1, 2)
    episodes: int = 2000
    eval_window: int = 200
    checkpoint_interval: int = 500
    output_dir: str = "runs/experiment"

    def __post_init__(self):
        problems = []
        if not self.seeds:
            problems.append("seeds must be a nonempty list")
        if self.critic not in CRITIC_VARIANTS:
            problems.append(f"critic must be one of {CRITIC_VARIANTS}, got {self.critic!r}")
        if self.episodes < 1:
            problems.append(f"episodes must be >= 1, got {self.episodes}")
        if self.eval_window < 1:
            problems.append(f"eval_window must be >= 1, got {self.eval_window}")
        if self.scenario.episode_length % self.training.chunk_length:
            problems.append(
                f"episode_length {self.scenario.episode_length} must be divisible "
                f"by chunk_length {self.training.chunk_length}"
            )
        if problems:
            raise ConfigError("invalid experiment config:\n  - " + "\n  - ".join(problems))


# -- layout (de)serialization -------------------------------------------------


def _rect_to_dict(rect: Rect) -> dict:
    return {"center": list(rect.center), "half_extents": list(rect.half_extents)}


def _rect_from_dict(d: dict, where: str) -> Rect:
    _reject_unknown(d, {"center", "half_extents", "anchor"}, where)
    return Rect(tuple(float(x) for x in d["center"]),
                tuple(float(x) for x in d["half_extents"]))


def layout_to_dict(layout: LayoutSpec) -> dict:
    machines = []
    for rect, anchor in zip(layout.machines, layout.machine_anchors):
        entry = _rect_to_dict(rect)
        entry["anchor"] = list(anchor)
        machines.append(entry)
    storage = _rect_to_dict(layout.storage)
    storage["anchor"] = list(layout.storage_anchor)
    return {
        "width": layout.width,
        "height": layout.height,
        "agent_radius": layout.agent_radius,
        "spawns": [list(s) for s in layout.spawns],
        "machines": machines,
        "blockers": [_rect_to_dict(r) for r in layout.blockers],
        "storage": storage,
        "walls": [_rect_to_dict(r) for r in layout.walls],
    }


def layout_from_dict(data: dict) -> LayoutSpec:
    """Build and validate a LayoutSpec; walls and anchors have sane defaults.

    Omitted walls become four boundary rectangles lining the inside of the
    declared bounds. An omitted machine anchor defaults to the center of the
    machine's bottom face; an omitted storage anchor to the storage center.
    """
    known = {"width", "height", "agent_radius", "spawns", "machines",
             "blockers", "storage", "walls"}
    _reject_unknown(data, known, "layout")
    try:
        width = float(data["width"])
        height = float(data["height"])
        spawns = tuple(tuple(float(x) for x in s) for s in data["spawns"])
        machine_dicts = list(data["machines"])
        storage_dict = dict(data["storage"])
    except KeyError as err:
        raise ConfigError(f"layout is missing required key {err}") from err

    machines, anchors = [], []
    for i, md in enumerate(machine_dicts):
        rect = _rect_from_dict(md, f"layout.machines[{i}]")
        machines.append(rect)
        if "anchor" in md:
            anchors.append(tuple(float(x) for x in md["anchor"]))
        else:
            anchors.append((rect.center[0], rect.center[1] - rect.half_extents[1]))

    storage = _rect_from_dict(storage_dict, "layout.storage")
    storage_anchor = (
        tuple(float(x) for x in storage_dict["anchor"])
        if "anchor" in storage_dict else storage.center
    )

    if "walls" in data:
        walls = tuple(_rect_from_dict(w, "layout.walls") for w in data["walls"])
    else:
        t = 0.05
        hw, hh = width / 2, height / 2
        walls = (
            Rect((0.0, hh - t), (hw, t)),
            Rect((0.0, -(hh - t)), (hw, t)),
            Rect((-(hw - t), 0.0), (t, hh - 2 * t)),
            Rect((hw - t, 0.0), (t, hh - 2 * t)),
        )

    layout = LayoutSpec(
        width=width,
        height=height,
        agent_radius=float(data.get("agent_radius", 0.08)),
        spawns=spawns,
        machines=tuple(machines),
        machine_anchors=tuple(anchors),
        blockers=tuple(_rect_from_dict(b, "layout.blockers") for b in data.get("blockers", [])),
        storage=storage,
        storage_anchor=storage_anchor,
        walls=walls,
    )
    validate_layout(layout)
    return layout


def resolve_layout(ref, base_dir: Path | None = None) -> LayoutSpec:
    if isinstance(ref, str):
        if ref in LAYOUT_PRESETS:
            return LAYOUT_PRESETS[ref]()
        path = Path(ref)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"layout {ref!r} is neither a preset nor a readable file")
        with open(path) as fh:
            return layout_from_dict(yaml.safe_load(fh))
    if isinstance(ref, dict):
        return layout_from_dict(ref)
    raise ConfigError(f"layout must be a preset name, path, or mapping, got {type(ref).__name__}")


# -- section plumbing ----------------------------------------------------------


def _reject_unknown(data: dict, known: set[str], where: str):
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _build_section(cls, data: dict, where: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _reject_unknown(data, set(fields), where)
    try:
        return cls(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {where} section: {err}") from err


_TOP_LEVEL_KEYS = {
    "layout", "observation", "reward", "training", "scenario", "world",
    "critic", "critic_concat_all_obs", "count_agent_pairs_once",
    "seeds", "episodes", "eval_window", "checkpoint_interval", "output_dir",
}


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    _reject_unknown(data, _TOP_LEVEL_KEYS, "config")
    if "layout" not in data:
        raise ConfigError("config must declare a layout")
    layout_ref = data["layout"]
    layout = resolve_layout(layout_ref, base_dir)
    try:
        return ExperimentConfig(
            layout_ref=layout_ref,
            layout=layout,
            observation=_build_section(ObservationConfig, data.get("observation", {}), "observation"),
            reward=_build_section(RewardConfig, data.get("reward", {}), "reward"),
            training=_build_section(TrainConfig, data.get("training", {}), "training"),
            scenario=_build_section(ScenarioConfig, data.get("scenario", {}), "scenario"),
            world=_build_section(WorldConfig, data.get("world", {}), "world"),
            critic=data.get("critic", "attention"),
            critic_concat_all_obs=bool(data.get("critic_concat_all_obs", False)),
            count_agent_pairs_once=bool(data.get("count_agent_pairs_once", False)),
            seeds=tuple(int(s) for s in data.get("seeds", (0, 1, 2))),
            episodes=int(data.get("episodes", 2000)),
            eval_window=int(data.get("eval_window", 200)),
            checkpoint_interval=int(data.get("checkpoint_interval", 500)),
            output_dir=str(data.get("output_dir", "runs/experiment")),
        )
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err


def config_to_dict(config: ExperimentConfig) -> dict:
    def section(obj) -> dict:
        return dataclasses.asdict(obj)

    return {
        "layout": config.layout_ref,
        "observation": section(config.observation),
        "reward": section(config.reward),
        "training": section(config.training),
        "scenario": section(config.scenario),
        "world": section(config.world),
        "critic": config.critic,
        "critic_concat_all_obs": config.critic_concat_all_obs,
        "count_agent_pairs_once": config.count_agent_pairs_once,
        "seeds": list(config.seeds),
        "episodes": config.episodes,
        "eval_window": config.eval_window,
        "checkpoint_interval": config.checkpoint_interval,
        "output_dir": config.output_dir,
    }


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: cannot parse config: {err}") from err
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from err
    return config_from_dict(data, base_dir=path.parent)


def serialize_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(serialize_config(config))
