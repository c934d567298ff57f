"""World-frame agent states and the robot-centric state representation.

All positions are meters, velocities m/s. The robot-centric frame has its
origin at the robot and its x-axis aimed at the robot's goal, which makes
the learned representation invariant to rigid transforms of the world.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

ROBOT_STATE_DIM = 5
HUMAN_STATE_DIM = 7

# x-axis used when the robot sits exactly on its goal (zero-norm direction).
# Such states are terminal, so the choice never influences learning.
_DEGENERATE_GOAL_EPS = 1e-12


@dataclass(frozen=True)
class AgentState:
    """Full world-frame state of one circular agent.

    Every simulated agent carries a goal and preferred speed; they are
    observable only for the agent itself (humans never expose theirs).
    """

    px: float
    py: float
    vx: float
    vy: float
    radius: float
    gx: float
    gy: float
    v_pref: float

    def dist_to_goal(self) -> float:
        return math.hypot(self.gx - self.px, self.gy - self.py)

    def with_goal(self, gx: float, gy: float) -> "AgentState":
        return replace(self, gx=gx, gy=gy)


@dataclass(frozen=True)
class JointState:
    """Robot-centric observation fed to the value network.

    robot: (5,) array [d_g, v_pref, v_x, v_y, r]
    humans: (n, 7) array, one row per human:
        [d_i, p_x, p_y, v_x, v_y, r_i, r_i + r_robot]
    """

    robot: np.ndarray
    humans: np.ndarray

    @property
    def n_humans(self) -> int:
        return self.humans.shape[0]

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.robot, self.humans.ravel()])


def to_robot_centric(robot: AgentState, humans: Sequence[AgentState]) -> JointState:
    """Transform world states into the robot-centric frame.

    The frame origin is the robot position and the x-axis points at the
    robot's goal; all positions and velocities are rotated accordingly.
    """
    dx = robot.gx - robot.px
    dy = robot.gy - robot.py
    d_g = math.sqrt(dx * dx + dy * dy)
    if d_g < _DEGENERATE_GOAL_EPS:
        cos_t, sin_t = 1.0, 0.0
    else:
        cos_t, sin_t = dx / d_g, dy / d_g

    rvx = cos_t * robot.vx + sin_t * robot.vy
    rvy = -sin_t * robot.vx + cos_t * robot.vy
    robot_vec = np.array([d_g, robot.v_pref, rvx, rvy, robot.radius])

    rows = np.empty((len(humans), HUMAN_STATE_DIM))
    for i, h in enumerate(humans):
        hx = h.px - robot.px
        hy = h.py - robot.py
        p_x = cos_t * hx + sin_t * hy
        p_y = -sin_t * hx + cos_t * hy
        v_x = cos_t * h.vx + sin_t * h.vy
        v_y = -sin_t * h.vx + cos_t * h.vy
        d_i = math.sqrt(p_x * p_x + p_y * p_y)
        rows[i] = (d_i, p_x, p_y, v_x, v_y, h.radius, h.radius + robot.radius)
    return JointState(robot_vec, rows)


def propagate_cvm(
    robot: AgentState,
    humans: Sequence[AgentState],
    action: tuple[float, float],
    dt: float,
) -> tuple[AgentState, tuple[AgentState, ...]]:
    """One constant-velocity step: the robot jumps to the commanded velocity
    instantaneously, humans keep their current velocities."""
    ax, ay = action
    new_robot = replace(robot, px=robot.px + ax * dt, py=robot.py + ay * dt, vx=ax, vy=ay)
    new_humans = tuple(
        replace(h, px=h.px + h.vx * dt, py=h.py + h.vy * dt) for h in humans
    )
    return new_robot, new_humans


def closest_approach(
    p_a: tuple[float, float],
    v_a: tuple[float, float],
    r_a: float,
    p_b: tuple[float, float],
    v_b: tuple[float, float],
    r_b: float,
    dt: float,
) -> float:
    """Minimum separation between two moving discs over [0, dt].

    Returns min_t ||(p_a + v_a t) - (p_b + v_b t)|| - (r_a + r_b); negative
    values indicate interpenetration. Uses the closed-form minimizer of the
    quadratic center distance, clamped to the interval.
    """
    dx = p_a[0] - p_b[0]
    dy = p_a[1] - p_b[1]
    dvx = v_a[0] - v_b[0]
    dvy = v_a[1] - v_b[1]
    dv2 = dvx * dvx + dvy * dvy
    if dv2 > 0.0:
        t = -(dx * dvx + dy * dvy) / dv2
        t = min(max(t, 0.0), dt)
    else:
        t = 0.0
    cx = dx + dvx * t
    cy = dy + dvy * t
    return math.sqrt(cx * cx + cy * cy) - (r_a + r_b)
