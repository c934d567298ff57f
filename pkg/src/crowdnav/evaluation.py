"""Seeded evaluation suites: the five summary metrics, multi-method
comparison on a shared seed set, and single-episode trajectory capture.

Evaluation always scores the discounted return under the sparse reward,
whatever reward the agent was trained with, so shaped-reward agents stay
comparable in one table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .env import EnvConfig, EpisodeRecord, Outcome
from .network import ValueNetwork
from .training import run_episode


@dataclass(frozen=True)
class EvalReport:
    success_rate: float
    collision_rate: float
    timeout_rate: float
    danger_freq: float  # mean discomfort steps per episode
    mean_nav_time: float  # seconds, over successful episodes; nan if none
    mean_discounted_reward: float
    episodes: int
    seed_set: str

    def row(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "collision_rate": self.collision_rate,
            "timeout_rate": self.timeout_rate,
            "danger_freq": self.danger_freq,
            "mean_nav_time": self.mean_nav_time,
            "mean_discounted_reward": self.mean_discounted_reward,
            "episodes": self.episodes,
            "seed_set": self.seed_set,
        }


def evaluate(
    net: ValueNetwork,
    env_cfg: EnvConfig,
    episodes: int,
    seed_base: int,
    policy: Callable | None = None,
) -> EvalReport:
    """Run greedy episodes on scenario seeds seed_base + i and aggregate.

    `policy`, when given, replaces the greedy network policy for a whole
    episode (used for ORCA or random baselines); it must have the same
    signature as training.run_episode without the network argument.
    """
    gamma_step = env_cfg.gamma_step()
    n_success = n_collision = 0
    nav_times = []
    discomfort_steps = 0
    rewards = []
    for i in range(episodes):
        if policy is not None:
            rec = policy(env_cfg, seed_base + i)
        else:
            rec = run_episode(net, env_cfg, eps=0.0, rng=None, seed=seed_base + i)
        if rec.outcome is Outcome.REACH_GOAL:
            n_success += 1
            nav_times.append(rec.nav_time)
        elif rec.outcome is Outcome.COLLISION:
            n_collision += 1
        discomfort_steps += rec.discomfort_count
        rewards.append(rec.sparse_discounted_return(gamma_step, env_cfg.d_c))
    return EvalReport(
        success_rate=n_success / episodes,
        collision_rate=n_collision / episodes,
        timeout_rate=(episodes - n_success - n_collision) / episodes,
        danger_freq=discomfort_steps / episodes,
        mean_nav_time=sum(nav_times) / len(nav_times) if nav_times else math.nan,
        mean_discounted_reward=sum(rewards) / len(rewards),
        episodes=episodes,
        seed_set=f"base{seed_base}+{episodes}",
    )


@dataclass
class MethodRow:
    label: str
    demo: bool
    report: EvalReport | None = None
    error: str | None = None


def compare_methods(
    methods: Sequence[tuple[str, bool, Callable[[], ValueNetwork]]],
    env_cfg: EnvConfig,
    episodes: int,
    seed_base: int,
) -> list[MethodRow]:
    """Evaluate several trained agents on one shared seed set.

    `methods` holds (label, uses_demo, loader) rows; a loader raises to
    mark its row failed without stopping the others.
    """
    rows = []
    for label, demo, loader in methods:
        row = MethodRow(label=label, demo=demo)
        try:
            net = loader()
        except Exception as exc:  # per-row isolation by contract
            row.error = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        row.report = evaluate(net, env_cfg, episodes, seed_base)
        rows.append(row)
    return rows


def capture_trajectory(
    net: ValueNetwork, env_cfg: EnvConfig, seed
) -> tuple[EpisodeRecord, dict]:
    """One greedy episode with its full record and a summary of travel
    time, path length and outcome."""
    rec = run_episode(net, env_cfg, eps=0.0, rng=None, seed=seed)
    summary = {
        "outcome": rec.outcome.value,
        "nav_time": rec.nav_time,
        "path_length": rec.path_length(),
        "collision": rec.outcome is Outcome.COLLISION,
    }
    return rec, summary


def format_report_table(rows: list[MethodRow], delimiter: str = "\t") -> str:
    """Delimiter-separated comparison table, one metrics row per method."""
    header = [
        "demo", "method", "success", "collision", "danger", "time", "reward", "episodes",
    ]
    lines = [delimiter.join(header)]
    for row in rows:
        demo = "use" if row.demo else "no-demo"
        if row.error is not None:
            lines.append(delimiter.join([demo, row.label, "error:" + row.error]))
            continue
        r = row.report
        time_txt = "--" if math.isnan(r.mean_nav_time) else f"{r.mean_nav_time:.2f}"
        lines.append(
            delimiter.join(
                [
                    demo,
                    row.label,
                    f"{r.success_rate:.2f}",
                    f"{r.collision_rate:.2f}",
                    f"{r.danger_freq:.2f}",
                    time_txt,
                    f"{r.mean_discounted_reward:.4f}",
                    str(r.episodes),
                ]
            )
        )
    return "\n".join(lines) + "\n"
