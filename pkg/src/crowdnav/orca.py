"""Optimal reciprocal collision avoidance for the simulated crowd.

Each agent derives one half-plane constraint per neighbor from the
velocity obstacle over a finite time horizon, assumes the neighbor takes
half of the required velocity change, and picks the feasible velocity
closest to its preferred velocity by a small 2D linear program. When the
constraints are infeasible the solver falls back to minimizing the
maximum constraint violation (the 3D LP of the RVO2 formulation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .geometry import AgentState

_EPS = 1e-10


@dataclass(frozen=True)
class OrcaParams:
    """Solver parameters. The paper leaves these unspecified; defaults cover
    an 8 m arena with 1 m/s agents."""

    time_horizon: float = 5.0  # seconds
    neighbor_dist: float = 10.0  # meters
    max_speed: float = 1.0  # m/s
    safety_margin: float = 0.0  # meters added to combined radii


@dataclass(frozen=True)
class HalfPlane:
    """Velocity constraint: v is feasible iff (v - point) . normal >= 0."""

    point: tuple[float, float]
    normal: tuple[float, float]  # unit vector into the feasible side


def _orca_lines(
    agent: AgentState,
    neighbors: Sequence[AgentState],
    params: OrcaParams,
    dt: float,
    static_neighbors: Sequence[bool] | None = None,
) -> list[tuple[float, float, float, float]]:
    """Constraint lines (px, py, dx, dy); feasible side is left of the
    direction (dx, dy) through (px, py)."""
    lines = []
    inv_horizon = 1.0 / params.time_horizon
    inv_dt = 1.0 / dt
    for k, other in enumerate(neighbors):
        rel_px = other.px - agent.px
        rel_py = other.py - agent.py
        dist_sq = rel_px * rel_px + rel_py * rel_py
        if dist_sq > params.neighbor_dist * params.neighbor_dist:
            continue
        rel_vx = agent.vx - other.vx
        rel_vy = agent.vy - other.vy
        r = agent.radius + other.radius + params.safety_margin
        r_sq = r * r

        if dist_sq > r_sq:
            # No current overlap: project relative velocity out of the
            # truncated velocity-obstacle cone.
            wx = rel_vx - inv_horizon * rel_px
            wy = rel_vy - inv_horizon * rel_py
            w_len_sq = wx * wx + wy * wy
            dot1 = wx * rel_px + wy * rel_py
            if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
                # Closest point lies on the cutoff circle.
                w_len = math.sqrt(w_len_sq)
                ux, uy = wx / w_len, wy / w_len
                dir_x, dir_y = uy, -ux
                mag = r * inv_horizon - w_len
                u_x, u_y = mag * ux, mag * uy
            else:
                # Closest point lies on one of the cone legs.
                leg = math.sqrt(dist_sq - r_sq)
                if rel_px * wy - rel_py * wx > 0.0:
                    dir_x = (rel_px * leg - rel_py * r) / dist_sq
                    dir_y = (rel_px * r + rel_py * leg) / dist_sq
                else:
                    dir_x = -(rel_px * leg + rel_py * r) / dist_sq
                    dir_y = -(-rel_px * r + rel_py * leg) / dist_sq
                dot2 = rel_vx * dir_x + rel_vy * dir_y
                u_x = dot2 * dir_x - rel_vx
                u_y = dot2 * dir_y - rel_vy
        else:
            # Already interpenetrating: separate within one time step.
            wx = rel_vx - inv_dt * rel_px
            wy = rel_vy - inv_dt * rel_py
            w_len = math.hypot(wx, wy)
            if w_len < _EPS:
                ux, uy = 1.0, 0.0
            else:
                ux, uy = wx / w_len, wy / w_len
            dir_x, dir_y = uy, -ux
            mag = r * inv_dt - w_len
            u_x, u_y = mag * ux, mag * uy

        # Reciprocity: half of the required change against a cooperating
        # agent. A neighbor flagged static (parked on its goal) takes no
        # avoiding action, so the full change is ours.
        share = 1.0 if static_neighbors is not None and static_neighbors[k] else 0.5
        lines.append((agent.vx + share * u_x, agent.vy + share * u_y, dir_x, dir_y))
    return lines


def _lp1(lines, line_no, radius, opt_x, opt_y, direction_opt):
    """Optimize along constraint line `line_no` subject to the previous
    lines and the speed disc. Returns the new velocity or None if the
    feasible segment is empty."""
    px, py, dx, dy = lines[line_no]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return None
    sqrt_disc = math.sqrt(disc)
    t_left = -dot - sqrt_disc
    t_right = -dot + sqrt_disc

    for i in range(line_no):
        qx, qy, ex, ey = lines[i]
        denom = dx * ey - dy * ex
        numer = ex * (py - qy) - ey * (px - qx)
        if abs(denom) <= _EPS:
            if numer < 0.0:
                return None
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_opt:
        t = t_right if opt_x * dx + opt_y * dy > 0.0 else t_left
    else:
        t = dx * (opt_x - px) + dy * (opt_y - py)
        t = min(max(t, t_left), t_right)
    return (px + t * dx, py + t * dy)


def _lp2(lines, radius, opt_x, opt_y, direction_opt):
    """Sequential 2D LP. Returns (fail_index, velocity); fail_index equals
    len(lines) on success, otherwise the first infeasible constraint."""
    if direction_opt:
        vx, vy = opt_x * radius, opt_y * radius
    elif opt_x * opt_x + opt_y * opt_y > radius * radius:
        scale = radius / math.hypot(opt_x, opt_y)
        vx, vy = opt_x * scale, opt_y * scale
    else:
        vx, vy = opt_x, opt_y

    for i, (px, py, dx, dy) in enumerate(lines):
        if dx * (py - vy) - dy * (px - vx) > 0.0:
            result = _lp1(lines, i, radius, opt_x, opt_y, direction_opt)
            if result is None:
                return i, (vx, vy)
            vx, vy = result
    return len(lines), (vx, vy)


def _lp3(lines, begin, radius, vx, vy):
    """Infeasible fallback: minimize the maximum constraint violation,
    processing constraints from the first failed one onward."""
    distance = 0.0
    for i in range(begin, len(lines)):
        px, py, dx, dy = lines[i]
        if dx * (py - vy) - dy * (px - vx) > distance:
            proj = []
            for j in range(i):
                qx, qy, ex, ey = lines[j]
                denom = dx * ey - dy * ex
                if abs(denom) <= _EPS:
                    if dx * ex + dy * ey > 0.0:
                        continue  # parallel, same direction: redundant
                    ppx, ppy = 0.5 * (px + qx), 0.5 * (py + qy)
                else:
                    t = (ex * (py - qy) - ey * (px - qx)) / denom
                    ppx, ppy = px + t * dx, py + t * dy
                ndx, ndy = ex - dx, ey - dy
                norm = math.hypot(ndx, ndy)
                proj.append((ppx, ppy, ndx / norm, ndy / norm))
            fail, (nvx, nvy) = _lp2(proj, radius, -dy, dx, True)
            if fail == len(proj):
                vx, vy = nvx, nvy
            distance = dx * (py - vy) - dy * (px - vx)
    return vx, vy


def avoidance_constraints(
    agent: AgentState,
    neighbors: Sequence[AgentState],
    params: OrcaParams,
    dt: float,
    static_neighbors: Sequence[bool] | None = None,
) -> list[HalfPlane]:
    """The half-plane constraints `orca_velocity` solves against."""
    planes = []
    for px, py, dx, dy in _orca_lines(agent, neighbors, params, dt, static_neighbors):
        planes.append(HalfPlane(point=(px, py), normal=(-dy, dx)))
    return planes


def orca_velocity(
    agent: AgentState,
    neighbors: Sequence[AgentState],
    params: OrcaParams,
    dt: float,
    static_neighbors: Sequence[bool] | None = None,
) -> tuple[float, float]:
    """Collision-avoiding velocity closest to the agent's preferred velocity.

    The preferred velocity is the unit vector toward the agent's goal scaled
    by its preferred speed (zero when already at the goal). The returned
    speed never exceeds params.max_speed.
    """
    gx = agent.gx - agent.px
    gy = agent.gy - agent.py
    dist = math.hypot(gx, gy)
    if dist < _EPS:
        pref_x, pref_y = 0.0, 0.0
    else:
        pref_x = gx / dist * agent.v_pref
        pref_y = gy / dist * agent.v_pref

    lines = _orca_lines(agent, neighbors, params, dt, static_neighbors)
    fail, (vx, vy) = _lp2(lines, params.max_speed, pref_x, pref_y, False)
    if fail < len(lines):
        vx, vy = _lp3(lines, fail, params.max_speed, vx, vy)
    return vx, vy


def step_humans(
    humans: Sequence[AgentState],
    params: OrcaParams,
    dt: float,
) -> tuple[AgentState, ...]:
    """Advance the crowd one step. Humans avoid only other humans; a human
    that has arrived (distance-to-goal below its radius) holds position
    with zero velocity and acts as a static disc for the others."""
    humans = tuple(humans)
    arrived = [h.dist_to_goal() < h.radius for h in humans]
    # An arriving human freezes this very step; advertise the zero velocity
    # to every other solver so nobody plans against its stale motion.
    advertised = tuple(
        replace(h, vx=0.0, vy=0.0) if stop else h for h, stop in zip(humans, arrived)
    )
    velocities = []
    for i, h in enumerate(humans):
        if arrived[i]:
            velocities.append((0.0, 0.0))
            continue
        others = advertised[:i] + advertised[i + 1 :]
        others_static = arrived[:i] + arrived[i + 1 :]
        velocities.append(orca_velocity(h, others, params, dt, others_static))
    return tuple(
        replace(h, px=h.px + vx * dt, py=h.py + vy * dt, vx=vx, vy=vy)
        for h, (vx, vy) in zip(humans, velocities)
    )
