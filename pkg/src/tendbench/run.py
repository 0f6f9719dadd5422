"""Experiment runner: training runs with artifacts, greedy evaluation, traces.

Every seed writes into its own directory under the run's output dir:

    <out>/manifest.yaml            resolved config snapshot + run metadata
    <out>/seed_<s>/metrics.csv     one row per training episode
    <out>/seed_<s>/updates.csv     one row per optimization iteration
    <out>/seed_<s>/checkpoints/    periodic + final + latest checkpoints

Reruns must use a fresh output dir; existing manifests are never rewritten.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ExperimentConfig, config_to_dict, layout_from_dict, layout_to_dict
from .errors import ConfigError, TraceError
from .metrics import AggregateReport, aggregate, write_metrics_csv
from .nn import load_arrays, save_arrays
from .observation import ObservationBuilder
from .reward import RewardEngine
from .scenario import ScenarioConfig, TendingScenario
from .trainer import MAPPOTrainer
from .world import WorldConfig

EVAL_STREAM_TAG = 0xE7A1  # keeps eval rolls distinct from training streams


def build_trainer(config: ExperimentConfig, seed: int, batch_size: int | None = None) -> MAPPOTrainer:
    scen = TendingScenario(
        config.layout, config.scenario, config.world,
        batch_size=batch_size or config.training.num_envs,
    )
    builder = ObservationBuilder(
        config.layout, config.observation,
        episode_length=config.scenario.episode_length,
        max_speed=config.world.max_speed,
    )
    engine = RewardEngine(config.layout, config.reward)
    return MAPPOTrainer(
        scen, builder, engine, config.training,
        critic_variant=config.critic,
        critic_concat_all_obs=config.critic_concat_all_obs,
        seed=seed,
        count_agent_pairs_once=config.count_agent_pairs_once,
    )


def write_manifest(out_dir: Path, config: ExperimentConfig, seeds) -> Path:
    manifest_path = out_dir / "manifest.yaml"
    if manifest_path.exists():
        raise ConfigError(
            f"{manifest_path} already exists; reruns must use a fresh output directory"
        )
    snapshot = config_to_dict(config)
    snapshot["layout"] = layout_to_dict(config.layout)  # self-contained
    manifest = {
        "version": __version__,
        "started_unix": time.time(),
        "config": snapshot,
        "seeds": {int(s): f"seed_{s}" for s in seeds},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(yaml.safe_dump(manifest, sort_keys=False))
    return manifest_path


def run_train(
    config: ExperimentConfig,
    out_dir=None,
    episodes: int | None = None,
    seeds=None,
    resume: bool = False,
    log=print,
) -> dict[int, Path]:
    """Train every seed to the episode budget; returns seed -> run dir."""
    out = Path(out_dir or config.output_dir)
    seeds = tuple(seeds if seeds is not None else config.seeds)
    budget = episodes if episodes is not None else config.episodes
    if not (resume and (out / "manifest.yaml").exists()):
        write_manifest(out, config, seeds)

    run_dirs: dict[int, Path] = {}
    for seed in seeds:
        seed_dir = out / f"seed_{seed}"
        ckpt_dir = seed_dir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        trainer = build_trainer(config, seed)
        if resume and (ckpt_dir / "latest.bin").exists():
            trainer.load_state_arrays(load_arrays(ckpt_dir / "latest.bin"))
            log(f"[seed {seed}] resumed at episode {trainer.episodes_done}")

        last_checkpoint = trainer.episodes_done
        while trainer.episodes_done < budget:
            episodes_batch, stats = trainer.train_iteration()
            first_idx = trainer.episodes_done - len(episodes_batch)
            write_metrics_csv(
                seed_dir / "metrics.csv",
                [ep.csv_row(seed, first_idx + i) for i, ep in enumerate(episodes_batch)],
            )
            _append_update_row(seed_dir / "updates.csv", trainer, stats)
            if trainer.episodes_done - last_checkpoint >= config.checkpoint_interval:
                save_arrays(ckpt_dir / f"ep_{trainer.episodes_done}.bin", trainer.state_arrays())
                last_checkpoint = trainer.episodes_done
            save_arrays(ckpt_dir / "latest.bin", trainer.state_arrays())
            if trainer.updates_done % 10 == 1:
                log(
                    f"[seed {seed}] episode {trainer.episodes_done}/{budget} "
                    f"collected {np.mean([e.collected for e in episodes_batch]):.2f} "
                    f"return {np.mean([e.return_total for e in episodes_batch]):.2f}"
                )
        save_arrays(ckpt_dir / "final.bin", trainer.state_arrays())
        run_dirs[seed] = seed_dir
    return run_dirs


def _append_update_row(path: Path, trainer: MAPPOTrainer, stats: dict):
    exists = path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["update", "episodes_done"] + sorted(stats))
        if not exists:
            writer.writeheader()
        writer.writerow(
            {"update": trainer.updates_done, "episodes_done": trainer.episodes_done, **stats}
        )


class _TraceWriter:
    """Line-delimited episode trace: header record, then one record per step."""

    def __init__(self, path, config: ExperimentConfig):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(self.path, "w")
        header = {
            "type": "header",
            "layout": layout_to_dict(config.layout),
            "scenario": dataclasses.asdict(config.scenario),
            "world": dataclasses.asdict(config.world),
        }
        self.fh.write(json.dumps(header) + "\n")

    def episode_start(self, seed: int, episode: int, state):
        self.fh.write(json.dumps({
            "type": "episode", "seed": seed, "episode": episode,
            "start_pos": state.pos[0].tolist(),
        }) + "\n")

    def step_hook(self, seed: int, episode: int):
        def hook(t, state, actions, events):
            ev = events[0]
            self.fh.write(json.dumps({
                "type": "step", "seed": seed, "episode": episode, "t": int(state.t),
                "actions": [int(a) for a in actions[0]],
                "pos": [[round(float(x), 12) for x in p] for p in state.pos[0]],
                "events": {
                    "picks": [[int(a), int(m)] for a, m in ev.picks],
                    "places": [int(a) for a in ev.places],
                    "onsets": [[e.body_a, e.body_b] for e in ev.contact_onsets],
                },
            }) + "\n")

        return hook

    def close(self):
        self.fh.close()


def run_eval(
    checkpoint_path,
    config: ExperimentConfig,
    episodes: int,
    seeds=None,
    deterministic: bool = True,
    trace_path=None,
    log=print,
) -> AggregateReport:
    """Greedy (argmax) rollouts of a checkpoint; aggregates over the episodes.

    With ``trace_path`` set the rollouts run one env at a time so the trace is
    a clean single-env record.
    """
    seeds = tuple(seeds if seeds is not None else config.seeds)
    arrays = load_arrays(checkpoint_path)
    tracer = _TraceWriter(trace_path, config) if trace_path else None
    runs: dict[int, list[dict]] = {}
    for seed in seeds:
        batch_size = 1 if tracer else min(config.training.num_envs, episodes)
        trainer = build_trainer(config, seed, batch_size=batch_size)
        trainer.load_state_arrays(arrays)
        rng = np.random.default_rng(np.random.SeedSequence([EVAL_STREAM_TAG, seed]))
        rows: list[dict] = []
        episode_idx = 0
        while episode_idx < episodes:
            if tracer:
                # record the reset positions so a replay can reconstruct them
                probe = trainer.scenario.reset(seed=rng)
                tracer.episode_start(seed, episode_idx, probe)
                hook = tracer.step_hook(seed, episode_idx)
            else:
                hook = None
            batch, eps = trainer.collector.collect(
                rng, deterministic=deterministic, step_hook=hook
            )
            for ep in eps:
                if episode_idx >= episodes:
                    break
                rows.append(ep.csv_row(seed, episode_idx))
                episode_idx += 1
        runs[seed] = rows
    if tracer:
        tracer.close()
    return aggregate(runs, window=episodes)


def run_ablate(sweep_path, out_dir=None, episodes: int | None = None, log=print) -> dict[str, Path]:
    """Run every config listed in a sweep file; one run directory per entry."""
    from .config import load_config

    sweep_path = Path(sweep_path)
    try:
        sweep = yaml.safe_load(sweep_path.read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"{sweep_path}: cannot read sweep file: {err}") from err
    if not isinstance(sweep, dict) or "runs" not in sweep or not sweep["runs"]:
        raise ConfigError(f"{sweep_path}: sweep file must map 'runs' to a nonempty list")

    out_root = Path(out_dir or sweep.get("output_dir", "runs/ablations"))
    results: dict[str, Path] = {}
    for entry in sweep["runs"]:
        cfg_path = Path(entry)
        if not cfg_path.is_absolute():
            cfg_path = sweep_path.parent / cfg_path
        config = load_config(cfg_path)
        name = cfg_path.stem
        log(f"=== ablation run {name} ===")
        run_train(config, out_dir=out_root / name, episodes=episodes, log=log)
        results[name] = out_root / name
    return results


def _iter_trace(path: Path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as err:
                raise TraceError(
                    f"{path}: corrupt record on line {lineno} "
                    f"(last valid step was line {lineno - 1}): {err}"
                ) from err


def run_replay(trace_path, render_dir=None, verify: bool = True, log=print) -> list[str]:
    """Reconstruct a trace: verify positions by re-simulation, print a timeline.

    Returns the timeline lines. With ``render_dir`` set, also draws one PNG
    per step (matplotlib).
    """
    trace_path = Path(trace_path)
    if not trace_path.exists():
        raise TraceError(f"{trace_path}: no such trace file")
    timeline: list[str] = []
    scen = None
    layout = None
    state = None
    renderer = None
    current_episode = None
    last_good = 0

    for lineno, record in _iter_trace(trace_path):
        kind = record.get("type")
        if kind == "header":
            layout = layout_from_dict(record["layout"])
            scen = TendingScenario(
                layout,
                ScenarioConfig(**record["scenario"]),
                WorldConfig(**record["world"]),
                batch_size=1,
            )
            if render_dir is not None:
                renderer = _Renderer(layout, Path(render_dir))
        elif kind == "episode":
            if scen is None:
                raise TraceError(f"{trace_path}: episode record before header (line {lineno})")
            state = scen.reset()
            state = dataclasses.replace(
                state, pos=np.array([record["start_pos"]], dtype=np.float64)
            )
            current_episode = record["episode"]
        elif kind == "step":
            if scen is None or state is None:
                raise TraceError(
                    f"{trace_path}: step record before header/episode "
                    f"(line {lineno}, last valid step line {last_good})"
                )
            state, events = scen.step(state, [record["actions"]])
            if verify:
                replayed = np.array(record["pos"])
                if not np.allclose(state.pos[0], replayed, atol=1e-9):
                    raise TraceError(
                        f"{trace_path}: position mismatch at episode "
                        f"{current_episode} t={record['t']} (line {lineno})"
                    )
            t = record["t"]
            for agent, machine in record["events"]["picks"]:
                timeline.append(f"t={t} agent {agent} picks machine {machine}")
            for agent in record["events"]["places"]:
                timeline.append(f"t={t} agent {agent} places part in storage")
            for a, b in record["events"]["onsets"]:
                timeline.append(
                    f"t={t} collision onset: {layout.entity_name(a)} and {layout.entity_name(b)}"
                )
            if renderer is not None:
                renderer.draw(state, current_episode, t)
            last_good = lineno
        else:
            raise TraceError(f"{trace_path}: unknown record type {kind!r} on line {lineno}")

    for line in timeline:
        log(line)
    return timeline


class _Renderer:
    """PNG frame export for replays. Matplotlib imported lazily."""

    COLORS = {"machine": "#2e9e4f", "blocker": "#8a8a8a", "storage": "#2b6fd4", "wall": "#222222"}

    def __init__(self, layout, out_dir: Path):
        import matplotlib

        matplotlib.use("Agg")
        self.layout = layout
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)

    def draw(self, state, episode, t):
        import matplotlib.patches as patches
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 5))
        hw, hh = self.layout.width / 2, self.layout.height / 2
        ax.set_xlim(-hw, hw)
        ax.set_ylim(-hh, hh)
        ax.set_aspect("equal")
        for rect, kind in zip(self.layout.static_rects(), self.layout.static_kinds()):
            ax.add_patch(patches.Rectangle(
                (rect.center[0] - rect.half_extents[0], rect.center[1] - rect.half_extents[1]),
                2 * rect.half_extents[0], 2 * rect.half_extents[1],
                color=self.COLORS[kind],
            ))
        for i, p in enumerate(state.pos[0]):
            face = "#d43a3a" if not state.has_part[0, i] else "#f0a52e"
            ax.add_patch(patches.Circle(p, self.layout.agent_radius, color=face))
            ax.annotate(str(i), p, ha="center", va="center", fontsize=8)
        ax.set_title(f"episode {episode} t={t}")
        fig.savefig(self.out_dir / f"ep{episode:04d}_t{t:03d}.png", dpi=80)
        plt.close(fig)
