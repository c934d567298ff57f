"""Line-delimited episode and learning-curve file formats.

Trajectory files are JSON lines: one header object, one object per step
carrying the pre-step world state, and one final object with the terminal
state. Field order is fixed (see _step_obj) so that load/dump round-trips
are byte-identical. Learning-curve logs are comma-separated with one row
per episode: episode,phase,outcome,nav_time,discounted_reward,epsilon,
mean_loss.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from .env import EpisodeRecord, StepInfo, WorldState
from .errors import FormatError
from .geometry import AgentState
from .training import CurvePoint

_VERSION = 1


def _agent_quad(a: AgentState) -> list[float]:
    return [a.px, a.py, a.vx, a.vy]


def _header_obj(rec: EpisodeRecord) -> dict:
    first = rec.states[0]
    return {
        "type": "header",
        "version": _VERSION,
        "dt": rec.dt,
        "robot_radius": first.robot.radius,
        "robot_goal": [first.robot.gx, first.robot.gy],
        "robot_v_pref": first.robot.v_pref,
        "human_radii": [h.radius for h in first.humans],
        "outcome": rec.outcome.value,
        "nav_time": rec.nav_time,
    }


def _step_obj(rec: EpisodeRecord, t: int) -> dict:
    world = rec.states[t]
    return {
        "type": "step",
        "t": world.step_count * rec.dt,
        "robot": _agent_quad(world.robot),
        "humans": [_agent_quad(h) for h in world.humans],
        "action_index": rec.action_indices[t],
        "action": list(rec.actions[t]),
        "reward": rec.rewards[t],
        "info": rec.infos[t].value,
        "d_min": rec.d_mins[t],
        "discomfort": rec.discomforts[t],
    }


def _final_obj(rec: EpisodeRecord) -> dict:
    world = rec.states[-1]
    return {
        "type": "final",
        "t": world.step_count * rec.dt,
        "robot": _agent_quad(world.robot),
        "humans": [_agent_quad(h) for h in world.humans],
    }


def episode_lines(rec: EpisodeRecord) -> list[str]:
    objs = [_header_obj(rec)]
    objs += [_step_obj(rec, t) for t in range(rec.n_steps)]
    objs.append(_final_obj(rec))
    return [json.dumps(o, separators=(",", ":")) for o in objs]


def write_trajectory(path, records: EpisodeRecord | Sequence[EpisodeRecord]) -> None:
    """Write one or several episodes; multi-episode files simply repeat the
    header/steps/final block."""
    if isinstance(records, EpisodeRecord):
        records = [records]
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            for line in episode_lines(rec):
                f.write(line + "\n")


def _require(obj: dict, key: str, lineno: int, path) -> object:
    if key not in obj:
        raise FormatError(f"{path}: line {lineno}: missing field '{key}'")
    return obj[key]


def _agent_from_quad(quad, radius: float, v_pref: float, lineno: int, path) -> AgentState:
    if not isinstance(quad, list) or len(quad) != 4:
        raise FormatError(f"{path}: line {lineno}: agent entry must be [x, y, vx, vy]")
    px, py, vx, vy = (float(v) for v in quad)
    # Goals of other agents are not part of the interchange format; a loaded
    # state carries the agent's own position as a placeholder goal.
    return AgentState(px=px, py=py, vx=vx, vy=vy, radius=radius, gx=px, gy=py, v_pref=v_pref)


def read_trajectories(path) -> list[EpisodeRecord]:
    records: list[EpisodeRecord] = []
    current: EpisodeRecord | None = None
    header: dict | None = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            kind = _require(obj, "type", lineno, path)
            if kind == "header":
                if current is not None:
                    raise FormatError(f"{path}: line {lineno}: header inside an open episode")
                if obj.get("version") != _VERSION:
                    raise FormatError(f"{path}: line {lineno}: unsupported version {obj.get('version')}")
                header = obj
                current = EpisodeRecord(dt=float(_require(obj, "dt", lineno, path)))
            elif kind in ("step", "final"):
                if current is None or header is None:
                    raise FormatError(f"{path}: line {lineno}: state line before header")
                robot_goal = header["robot_goal"]
                robot = AgentState(
                    px=float(obj["robot"][0]), py=float(obj["robot"][1]),
                    vx=float(obj["robot"][2]), vy=float(obj["robot"][3]),
                    radius=float(header["robot_radius"]),
                    gx=float(robot_goal[0]), gy=float(robot_goal[1]),
                    v_pref=float(header["robot_v_pref"]),
                )
                radii = header["human_radii"]
                human_quads = _require(obj, "humans", lineno, path)
                if len(human_quads) != len(radii):
                    raise FormatError(
                        f"{path}: line {lineno}: expected {len(radii)} humans, got {len(human_quads)}"
                    )
                humans = tuple(
                    _agent_from_quad(q, float(r), float(header["robot_v_pref"]), lineno, path)
                    for q, r in zip(human_quads, radii)
                )
                step_count = round(float(_require(obj, "t", lineno, path)) / current.dt)
                world = WorldState(robot=robot, humans=humans, step_count=step_count)
                current.states.append(world)
                if kind == "step":
                    try:
                        current.actions.append(tuple(float(v) for v in obj["action"]))
                        current.action_indices.append(int(obj["action_index"]))
                        current.rewards.append(float(obj["reward"]))
                        current.infos.append(StepInfo(obj["info"]))
                        current.d_mins.append(float(obj["d_min"]))
                        current.discomforts.append(bool(obj["discomfort"]))
                    except (KeyError, ValueError) as exc:
                        raise FormatError(f"{path}: line {lineno}: bad step fields ({exc})") from exc
                else:
                    if not current.actions:
                        raise FormatError(f"{path}: line {lineno}: episode has no steps")
                    records.append(current)
                    current = None
                    header = None
            else:
                raise FormatError(f"{path}: line {lineno}: unknown record type '{kind}'")
    if current is not None:
        raise FormatError(f"{path}: unexpected end of file inside an episode")
    if not records:
        raise FormatError(f"{path}: no episodes found")
    return records


# ----- learning-curve logs ----------------------------------------------------

_CURVE_HEADER = "episode,phase,outcome,nav_time,discounted_reward,epsilon,mean_loss"


def write_curve(path, points: Iterable[CurvePoint]) -> None:
    lines = [_CURVE_HEADER]
    for p in points:
        loss = "" if p.mean_loss is None else repr(p.mean_loss)
        lines.append(
            f"{p.episode},{p.phase},{p.outcome},{repr(p.nav_time)},"
            f"{repr(p.discounted_reward)},{repr(p.epsilon)},{loss}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_curve(path) -> list[CurvePoint]:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != _CURVE_HEADER:
        raise FormatError(f"{path}: line 1: expected curve header '{_CURVE_HEADER}'")
    points = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise FormatError(f"{path}: line {lineno}: expected 7 fields, got {len(parts)}")
        try:
            points.append(
                CurvePoint(
                    episode=int(parts[0]),
                    phase=parts[1],
                    outcome=parts[2],
                    nav_time=float(parts[3]),
                    discounted_reward=float(parts[4]),
                    epsilon=float(parts[5]),
                    mean_loss=None if parts[6] == "" else float(parts[6]),
                )
            )
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: bad numeric field ({exc})") from exc
    return points
