"""Evaluation metrics: per-episode counts, utilization ratios, aggregation.

Machine utilization divides parts collected from a machine by the most it
could have produced in an episode; agent utilization divides an agent's
collected parts by the per-agent fair share of the total producible amount.
With P_max = M * P_imax the two averages coincide algebraically:
Avr(MU) = sum(P_i) / (M * P_imax) = Avr(AU).

Collisions count contact onsets per involved agent, so an agent-agent onset
contributes two by default ("cumulative across all agents"); pass
``count_agent_pairs_once=True`` to count each pair event once.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError
from .reward import RewardBreakdown

CSV_COLUMNS = (
    "seed", "episode", "collected", "delivered", "collisions",
    "avr_mu", "avr_au", "return_total",
    "ret_pick", "ret_place", "ret_collision", "ret_progress_machine",
    "ret_progress_storage", "ret_uncollected", "ret_time",
)


def parts_cap(episode_length: int, production_delay: int) -> int:
    """Most parts one machine can yield in an episode (P_imax)."""
    return 1 + (episode_length - 1) // production_delay


def machine_utilization(parts_per_machine, p_imax: int):
    """Per-machine utilization and its average across machines."""
    parts = np.asarray(parts_per_machine, dtype=np.float64)
    if p_imax <= 0:
        raise ValueError(f"p_imax must be > 0, got {p_imax}")
    if (parts > p_imax).any():
        raise ConsistencyError(
            f"machine collected {parts.max()} parts, above the cap {p_imax}"
        )
    mu = parts / p_imax
    return mu, float(mu.mean())


def agent_utilization(parts_per_agent, p_max: int, n_agents: int):
    """Per-agent utilization against the fair share p_max / n and its average."""
    parts = np.asarray(parts_per_agent, dtype=np.float64)
    if p_max <= 0 or n_agents <= 0:
        raise ValueError(f"p_max and n_agents must be > 0, got {p_max}, {n_agents}")
    au = parts / (p_max / n_agents)
    return au, float(au.mean())


@dataclass(frozen=True)
class EpisodeMetrics:
    collected: int
    delivered: int
    collisions: int
    per_machine: tuple[int, ...]
    per_agent: tuple[int, ...]
    avr_mu: float
    avr_au: float
    return_total: float
    component_returns: dict[str, float] = field(default_factory=dict)

    def csv_row(self, seed: int, episode: int) -> dict:
        row = {
            "seed": seed, "episode": episode,
            "collected": self.collected, "delivered": self.delivered,
            "collisions": self.collisions,
            "avr_mu": self.avr_mu, "avr_au": self.avr_au,
            "return_total": self.return_total,
        }
        for name in RewardBreakdown.COMPONENTS:
            row[f"ret_{name}"] = self.component_returns.get(name, 0.0)
        return row


def episode_metrics(
    per_machine,
    per_agent,
    delivered: int,
    as_onsets: int,
    aa_onsets: int,
    p_imax: int,
    component_returns: dict[str, float],
    count_agent_pairs_once: bool = False,
) -> EpisodeMetrics:
    """Assemble one episode's metrics from raw counts and return sums."""
    per_machine = tuple(int(x) for x in per_machine)
    per_agent = tuple(int(x) for x in per_agent)
    collected = sum(per_agent)
    if collected != sum(per_machine):
        raise ConsistencyError(
            f"agents collected {collected} parts but machines gave {sum(per_machine)}"
        )
    if delivered > collected:
        raise ConsistencyError(f"delivered {delivered} > collected {collected}")
    _, avr_mu = machine_utilization(per_machine, p_imax)
    p_max = len(per_machine) * p_imax
    _, avr_au = agent_utilization(per_agent, p_max, len(per_agent))
    collisions = as_onsets + (aa_onsets if count_agent_pairs_once else 2 * aa_onsets)
    return EpisodeMetrics(
        collected=collected,
        delivered=int(delivered),
        collisions=int(collisions),
        per_machine=per_machine,
        per_agent=per_agent,
        avr_mu=avr_mu,
        avr_au=avr_au,
        return_total=float(sum(component_returns.values())),
        component_returns=dict(component_returns),
    )


@dataclass(frozen=True)
class AggregateReport:
    """Per-metric mean and population std across seeds of final-window means."""

    window: int
    per_seed: dict[int, dict[str, float]]
    mean: dict[str, float]
    std: dict[str, float]

    def format_value(self, metric: str, digits: int = 2) -> str:
        return f"{self.mean[metric]:.{digits}f} ({self.std[metric]:.{digits}f})"

    def table(self, metrics=("collected", "delivered", "collisions", "avr_mu", "avr_au")) -> str:
        lines = [f"{'metric':<12} mean (std) over last {self.window} episodes x {len(self.per_seed)} seeds"]
        for m in metrics:
            lines.append(f"{m:<12} {self.format_value(m)}")
        return "\n".join(lines)


def aggregate(runs: dict[int, list[dict]], window: int) -> AggregateReport:
    """Mean over each seed's final ``window`` episodes, then mean/std across seeds.

    ``runs`` maps seed -> list of per-episode metric dicts (CSV-row style).
    """
    if not runs:
        raise ValueError("no runs to aggregate")
    shortest = min(len(rows) for rows in runs.values())
    if shortest == 0:
        raise ValueError("empty metric stream")
    if window > shortest:
        raise ValueError(f"window {window} exceeds shortest stream ({shortest} episodes)")

    numeric = [c for c in CSV_COLUMNS if c not in ("seed", "episode")]
    per_seed: dict[int, dict[str, float]] = {}
    for seed, rows in runs.items():
        tail = rows[-window:]
        per_seed[seed] = {
            m: float(np.mean([float(r[m]) for r in tail])) for m in numeric if m in tail[0]
        }
    metrics = list(next(iter(per_seed.values())).keys())
    mean = {m: float(np.mean([per_seed[s][m] for s in per_seed])) for m in metrics}
    std = {m: float(np.std([per_seed[s][m] for s in per_seed])) for m in metrics}
    return AggregateReport(window=window, per_seed=per_seed, mean=mean, std=std)


def write_metrics_csv(path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if new_file:
            writer.writeheader()
        writer.writerows(rows)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
