"""Static SVG rendering of trajectories and learning curves."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "crowdnav"

import matplotlib.pyplot as plt
import numpy as np

from .env import EpisodeRecord
from .errors import FormatError
from .trajectories import read_curve, read_trajectories

_HUMAN_CMAP = plt.get_cmap("tab10")


def _save(fig, out_path) -> None:
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_trajectory(rec: EpisodeRecord, out_path, label_every: float = 4.0) -> None:
    """Agent discs with time labels along their paths, one color per agent."""
    fig, ax = plt.subplots(figsize=(6.4, 6.4))
    first = rec.states[0]
    times = [w.step_count * rec.dt for w in rec.states]

    rx = [w.robot.px for w in rec.states]
    ry = [w.robot.py for w in rec.states]
    ax.plot(rx, ry, color="gold", lw=1.0, zorder=2)
    ax.plot(
        first.robot.gx, first.robot.gy, marker="*", markersize=14,
        color="red", zorder=4, label="goal",
    )

    n = len(first.humans)
    for i in range(n):
        hx = [w.humans[i].px for w in rec.states]
        hy = [w.humans[i].py for w in rec.states]
        ax.plot(hx, hy, color=_HUMAN_CMAP(i % 10), lw=0.8, alpha=0.6, zorder=1)

    label_step = max(1, round(label_every / rec.dt)) if rec.dt > 0 else 1
    marked = list(range(0, len(rec.states), label_step))
    if marked[-1] != len(rec.states) - 1:
        marked.append(len(rec.states) - 1)
    for k in marked:
        w = rec.states[k]
        ax.add_patch(
            plt.Circle((w.robot.px, w.robot.py), w.robot.radius,
                       facecolor="gold", edgecolor="black", lw=0.6, zorder=3)
        )
        ax.annotate(f"{times[k]:.1f}", (w.robot.px, w.robot.py),
                    fontsize=7, ha="center", va="center", zorder=5)
        for i, h in enumerate(w.humans):
            ax.add_patch(
                plt.Circle((h.px, h.py), h.radius,
                           facecolor="none", edgecolor=_HUMAN_CMAP(i % 10), lw=0.8, zorder=3)
            )
            ax.annotate(f"{times[k]:.1f}", (h.px, h.py),
                        fontsize=6, ha="center", va="center",
                        color=_HUMAN_CMAP(i % 10), zorder=5)

    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"outcome: {rec.outcome.value}, time {rec.nav_time:.2f} s")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, out_path)


def _rolling_rate(flags: list[float], window: int) -> np.ndarray:
    arr = np.asarray(flags, dtype=float)
    out = np.empty_like(arr)
    c = np.cumsum(np.insert(arr, 0, 0.0))
    for i in range(len(arr)):
        lo = max(0, i - window + 1)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def render_curve(points, out_path, window: int = 100) -> None:
    """Success/collision rolling rates and discounted reward over training,
    with validation sweep successes overlaid."""
    train = [p for p in points if p.phase == "train"]
    val = [p for p in points if p.phase == "val"]
    if not train and not val:
        raise FormatError("curve log holds no rows to plot")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.5, 4.0))
    if train:
        eps = [p.episode for p in train]
        succ = _rolling_rate([p.outcome == "reach_goal" for p in train], window)
        coll = _rolling_rate([p.outcome == "collision" for p in train], window)
        marker = "o" if len(train) == 1 else None
        ax1.plot(eps, succ, label="success (train)", color="tab:green", marker=marker)
        ax1.plot(eps, coll, label="collision (train)", color="tab:red", marker=marker)
        ax2.plot(
            eps, _rolling_mean([p.discounted_reward for p in train], window),
            label="reward (train)", color="tab:blue", marker=marker,
        )
    if val:
        sweeps: dict[int, list] = {}
        for p in val:
            sweeps.setdefault(p.episode, []).append(p)
        xs = sorted(sweeps)
        succ = [np.mean([q.outcome == "reach_goal" for q in sweeps[x]]) for x in xs]
        rew = [np.mean([q.discounted_reward for q in sweeps[x]]) for x in xs]
        ax1.plot(xs, succ, "s--", label="success (val)", color="darkgreen", markersize=4)
        ax2.plot(xs, rew, "s--", label="reward (val)", color="navy", markersize=4)

    ax1.set_xlabel("episode")
    ax1.set_ylabel("rate")
    ax1.set_ylim(-0.05, 1.05)
    ax1.legend(fontsize=8)
    ax2.set_xlabel("episode")
    ax2.set_ylabel("discounted reward")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_path)


def _rolling_mean(values, window: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    out = np.empty_like(arr)
    c = np.cumsum(np.insert(arr, 0, 0.0))
    for i in range(len(arr)):
        lo = max(0, i - window + 1)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def render_file(in_path, out_path) -> None:
    """Dispatch on file content: JSON trajectory header or curve CSV."""
    with open(in_path, "r", encoding="utf-8") as f:
        head = f.readline().strip()
    if head.startswith("{"):
        recs = read_trajectories(in_path)
        render_trajectory(recs[0], out_path)
    elif head.startswith("episode,"):
        render_curve(read_curve(in_path), out_path)
    else:
        raise FormatError(f"{in_path}: line 1: neither a trajectory header nor a curve header")
