"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration problems, 3 numeric failures during
training, 4 IO problems (checkpoints, traces), 1 anything else.
"""

from __future__ import annotations

import sys

import click

from .config import load_config
from .errors import CheckpointError, ConfigError, LayoutError, NumericError, TraceError
from .observation import ObservationBuilder
from .run import run_ablate, run_eval, run_replay, run_train

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _run(fn):
    try:
        fn()
    except (ConfigError, LayoutError) as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(EXIT_CONFIG)
    except NumericError as err:
        click.echo(f"numeric failure: {err}", err=True)
        sys.exit(EXIT_NUMERIC)
    except (CheckpointError, TraceError, OSError) as err:
        click.echo(f"io error: {err}", err=True)
        sys.exit(EXIT_IO)


@click.group()
def main():
    """Multi-robot machine-tending RL workbench."""


@main.command()
@click.argument("config_path", metavar="CONFIG")
@click.option("--seed", type=int, multiple=True, help="Override the config's seed list.")
@click.option("--out", type=click.Path(), default=None, help="Output directory override.")
@click.option("--episodes", type=int, default=None, help="Episode budget override.")
@click.option("--resume", is_flag=True, help="Continue from <out>/seed_*/checkpoints/latest.bin.")
def train(config_path, seed, out, episodes, resume):
    """Train per the CONFIG file, one run directory per seed."""

    def go():
        config = load_config(config_path)
        run_dirs = run_train(
            config, out_dir=out, episodes=episodes,
            seeds=seed or None, resume=resume, log=click.echo,
        )
        for s, path in run_dirs.items():
            click.echo(f"seed {s}: {path}")

    _run(go)


@main.command("eval")
@click.argument("checkpoint", metavar="CHECKPOINT")
@click.argument("config_path", metavar="CONFIG")
@click.option("--episodes", type=int, default=200, show_default=True)
@click.option("--seed", type=int, multiple=True, help="Override the config's seed list.")
@click.option("--deterministic/--stochastic", default=True, show_default=True,
              help="Greedy argmax actions vs sampling.")
@click.option("--trace", type=click.Path(), default=None,
              help="Write a line-delimited episode trace (runs one env at a time).")
def eval_cmd(checkpoint, config_path, episodes, seed, deterministic, trace):
    """Evaluate a CHECKPOINT under CONFIG and print the aggregate report."""

    def go():
        config = load_config(config_path)
        report = run_eval(
            checkpoint, config, episodes,
            seeds=seed or None, deterministic=deterministic,
            trace_path=trace, log=click.echo,
        )
        click.echo(report.table())

    _run(go)


@main.command()
@click.argument("sweep_file", metavar="SWEEP")
@click.option("--out", type=click.Path(), default=None)
@click.option("--episodes", type=int, default=None, help="Episode budget override for every run.")
def ablate(sweep_file, out, episodes):
    """Run every config listed in a SWEEP file."""

    def go():
        results = run_ablate(sweep_file, out_dir=out, episodes=episodes, log=click.echo)
        for name, path in results.items():
            click.echo(f"{name}: {path}")

    _run(go)


@main.command()
@click.argument("trace_file", metavar="TRACE")
@click.option("--render-dir", type=click.Path(), default=None,
              help="Also export one PNG frame per step.")
@click.option("--no-verify", is_flag=True, help="Skip the re-simulation check.")
def replay(trace_file, render_dir, no_verify):
    """Reconstruct a trace and print its event timeline."""

    def go():
        lines = run_replay(trace_file, render_dir=render_dir,
                           verify=not no_verify, log=click.echo)
        if not lines:
            click.echo("(empty timeline)")

    _run(go)


@main.command()
@click.argument("config_path", metavar="CONFIG")
def schema(config_path):
    """Print the observation layout (field order and widths) for CONFIG."""

    def go():
        config = load_config(config_path)
        builder = ObservationBuilder(
            config.layout, config.observation,
            episode_length=config.scenario.episode_length,
            max_speed=config.world.max_speed,
        )
        click.echo(f"observation dimension: {builder.dim}")
        offset = 0
        for name, width in builder.field_layout():
            span = f"[{offset}]" if width == 1 else f"[{offset}:{offset + width}]"
            click.echo(f"  {span:>10}  {name}")
            offset += width

    _run(go)


if __name__ == "__main__":
    main()
