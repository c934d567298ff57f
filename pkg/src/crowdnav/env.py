"""Episodic circle-crossing MDP with ORCA-driven humans.

The environment state is an immutable snapshot; `reset` and `step` are
pure functions so episodes with independent RNG streams can run in
parallel. Rewards follow the sparse goal/collision/discomfort scheme or
its distance-shaped variant, selected per config.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, ScenarioGenerationError
from .geometry import AgentState, JointState, closest_approach, propagate_cvm, to_robot_centric
from .orca import OrcaParams, step_humans

_MAX_PLACEMENT_ATTEMPTS = 1000
_PLACEMENT_NOISE = 0.5  # meters, uniform perturbation of on-circle starts


class RewardMode(enum.Enum):
    SPARSE = "sparse"
    SHAPED = "shaped"


class StepInfo(enum.Enum):
    NOTHING = "nothing"
    DISCOMFORT = "discomfort"
    COLLISION = "collision"
    REACH_GOAL = "reach_goal"
    TIMEOUT = "timeout"


class Outcome(enum.Enum):
    REACH_GOAL = "reach_goal"
    COLLISION = "collision"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class EnvConfig:
    n_humans: int = 5
    circle_radius: float = 4.0  # meters
    dt: float = 0.25  # seconds per decision step
    time_limit: float = 25.0  # seconds
    d_c: float = 0.2  # comfort distance, meters
    agent_radius: float = 0.3  # meters, robot and humans
    v_pref: float = 1.0  # m/s, all agents
    reward_mode: RewardMode = RewardMode.SPARSE
    alpha: float = 0.002  # shaped-reward distance weight
    gamma: float = 0.9  # discount base

    def __post_init__(self):
        if self.n_humans < 0:
            raise ConfigError("n_humans must be >= 0")
        if self.dt <= 0:
            raise ConfigError("dt must be > 0")
        if self.time_limit <= self.dt:
            raise ConfigError("time_limit must exceed dt")
        if self.d_c <= 0:
            raise ConfigError("d_c must be > 0")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")

    @property
    def max_steps(self) -> int:
        return math.ceil(self.time_limit / self.dt)

    def orca_params(self) -> OrcaParams:
        # The margin keeps the crowd collision-free even when a dense squeeze
        # makes the avoidance LP infeasible and the fallback must compromise.
        return OrcaParams(max_speed=self.v_pref, safety_margin=0.1)

    def gamma_step(self) -> float:
        return discount_factor(self.gamma, self.dt, self.v_pref)


@dataclass(frozen=True)
class WorldState:
    robot: AgentState
    humans: tuple[AgentState, ...]
    step_count: int = 0

    def elapsed(self, dt: float) -> float:
        return self.step_count * dt


def discount_factor(gamma: float, dt: float, v_pref: float) -> float:
    """Per-decision-step discount gamma^(dt * v_pref); the preferred speed
    normalizes the exponent so the discount is kinematically comparable
    across step sizes."""
    if not 0.0 < gamma < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    return gamma ** (dt * v_pref)


def build_action_set(v_pref: float = 1.0) -> tuple[tuple[float, float], ...]:
    """The discrete action set: stop plus 8 headings at the preferred speed.

    Index 0 is the stop action; indices 1..8 sweep headings 2*pi*k/8 for
    k = 0..7 counterclockwise from +x.
    """
    actions = [(0.0, 0.0)]
    for k in range(8):
        theta = 2.0 * math.pi * k / 8.0
        actions.append((v_pref * math.cos(theta), v_pref * math.sin(theta)))
    return tuple(actions)


def sparse_reward(d_min: float, d_c: float, reached: bool) -> float:
    """Sparse navigation reward: -0.25 on collision, a graded discomfort
    penalty inside the comfort distance, 1 on reaching the goal, else 0.
    Branches are evaluated in that priority order."""
    if d_min < 0.0:
        return -0.25
    if 0.0 < d_min < d_c:
        return 0.5 * (d_min - d_c)
    if reached:
        return 1.0
    return 0.0


def shaped_reward(d_min: float, dist: float, d_c: float, alpha: float, reached: bool) -> float:
    """Distance-shaped variant: -1 on collision, the same discomfort
    penalty, 2 on reaching the goal, else -alpha * distance-to-goal."""
    if d_min < 0.0:
        return -1.0
    if 0.0 < d_min < d_c:
        return 0.5 * (d_min - d_c)
    if reached:
        return 2.0
    return -alpha * dist


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    info: StepInfo
    d_min: float
    next_world: WorldState
    next_joint: JointState


def reset(config: EnvConfig, seed) -> WorldState:
    """Sample a circle-crossing scenario.

    The robot starts at the bottom of the circle with the antipodal goal;
    humans start at random perturbed angles with goals antipodal through
    the center. Rejection sampling enforces pairwise start separation of
    combined radii plus the comfort distance.
    """
    rng = np.random.default_rng(seed)
    R = config.circle_radius
    robot = AgentState(
        px=0.0, py=-R, vx=0.0, vy=0.0,
        radius=config.agent_radius, gx=0.0, gy=R, v_pref=config.v_pref,
    )
    placed: list[AgentState] = [robot]
    humans: list[AgentState] = []
    for _ in range(config.n_humans):
        for attempt in range(_MAX_PLACEMENT_ATTEMPTS):
            angle = rng.uniform(0.0, 2.0 * math.pi)
            px = R * math.cos(angle) + rng.uniform(-_PLACEMENT_NOISE, _PLACEMENT_NOISE)
            py = R * math.sin(angle) + rng.uniform(-_PLACEMENT_NOISE, _PLACEMENT_NOISE)
            ok = True
            for other in placed:
                min_sep = config.agent_radius + other.radius + config.d_c
                if math.hypot(px - other.px, py - other.py) < min_sep:
                    ok = False
                    break
            if ok:
                break
        else:
            raise ScenarioGenerationError(
                f"could not place human {len(humans)} after "
                f"{_MAX_PLACEMENT_ATTEMPTS} attempts; scenario over-crowded"
            )
        human = AgentState(
            px=px, py=py, vx=0.0, vy=0.0,
            radius=config.agent_radius, gx=-px, gy=-py, v_pref=config.v_pref,
        )
        placed.append(human)
        humans.append(human)
    return WorldState(robot=robot, humans=tuple(humans), step_count=0)


def cvm_step_reward(
    world: WorldState, action: tuple[float, float], config: EnvConfig
) -> tuple[float, float, bool]:
    """(d_min, reward, reached) for one step under the constant-velocity
    model. Shared by the environment step and the one-step policy
    lookahead so both see the identical reward."""
    robot = world.robot
    d_min = math.inf
    for h in world.humans:
        sep = closest_approach(
            (robot.px, robot.py), action, robot.radius,
            (h.px, h.py), (h.vx, h.vy), h.radius, config.dt,
        )
        if sep < d_min:
            d_min = sep
    ax, ay = action
    nx, ny = robot.px + ax * config.dt, robot.py + ay * config.dt
    d_g_next = math.hypot(robot.gx - nx, robot.gy - ny)
    reached = d_g_next < config.agent_radius
    if config.reward_mode is RewardMode.SPARSE:
        reward = sparse_reward(d_min, config.d_c, reached)
    else:
        reward = shaped_reward(d_min, d_g_next, config.d_c, config.alpha, reached)
    return d_min, reward, reached


def step(world: WorldState, action: tuple[float, float], config: EnvConfig) -> StepOutcome:
    """Advance the world by one decision interval.

    d_min is measured against all humans over the interval using their
    pre-step velocities; the humans themselves then advance under ORCA
    against each other only (they ignore the robot).
    """
    d_min, reward, reached = cvm_step_reward(world, action, config)
    ax, ay = action
    new_robot = replace(
        world.robot,
        px=world.robot.px + ax * config.dt,
        py=world.robot.py + ay * config.dt,
        vx=ax, vy=ay,
    )
    new_humans = step_humans(world.humans, config.orca_params(), config.dt)
    next_world = WorldState(new_robot, new_humans, world.step_count + 1)

    collided = d_min < 0.0
    elapsed = next_world.step_count * config.dt
    if collided:
        info = StepInfo.COLLISION
    elif reached:
        info = StepInfo.REACH_GOAL
    elif elapsed >= config.time_limit - 1e-9:
        info = StepInfo.TIMEOUT
    elif 0.0 < d_min < config.d_c:
        info = StepInfo.DISCOMFORT
    else:
        info = StepInfo.NOTHING

    return StepOutcome(
        reward=reward,
        info=info,
        d_min=d_min,
        next_world=next_world,
        next_joint=to_robot_centric(new_robot, new_humans),
    )


_TERMINAL_INFOS = (StepInfo.COLLISION, StepInfo.REACH_GOAL, StepInfo.TIMEOUT)
_OUTCOME_BY_INFO = {
    StepInfo.COLLISION: Outcome.COLLISION,
    StepInfo.REACH_GOAL: Outcome.REACH_GOAL,
    StepInfo.TIMEOUT: Outcome.TIMEOUT,
}


def is_terminal(info: StepInfo) -> bool:
    return info in _TERMINAL_INFOS


@dataclass
class EpisodeRecord:
    """Full trajectory of one episode.

    states has length K+1 (initial world plus one snapshot per step);
    the per-step lists have length K. action_index is -1 for actions
    outside the discrete set (e.g. demonstration velocities).
    """

    dt: float
    states: list[WorldState] = field(default_factory=list)
    actions: list[tuple[float, float]] = field(default_factory=list)
    action_indices: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    infos: list[StepInfo] = field(default_factory=list)
    d_mins: list[float] = field(default_factory=list)
    discomforts: list[bool] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def nav_time(self) -> float:
        return self.n_steps * self.dt

    @property
    def outcome(self) -> Outcome:
        return _OUTCOME_BY_INFO[self.infos[-1]]

    @property
    def discomfort_count(self) -> int:
        return sum(self.discomforts)

    @property
    def had_discomfort(self) -> bool:
        return any(self.discomforts)

    def add_step(self, action, action_index: int, out: StepOutcome, config: EnvConfig) -> None:
        self.actions.append(tuple(action))
        self.action_indices.append(action_index)
        self.rewards.append(out.reward)
        self.infos.append(out.info)
        self.d_mins.append(out.d_min)
        self.discomforts.append(0.0 < out.d_min < config.d_c)
        self.states.append(out.next_world)

    def discounted_return(self, gamma_step: float) -> float:
        """Discounted sum of the recorded (training-mode) rewards."""
        total = 0.0
        for t in range(self.n_steps - 1, -1, -1):
            total = self.rewards[t] + gamma_step * total
        return total

    def sparse_discounted_return(self, gamma_step: float, d_c: float) -> float:
        """Discounted return under the sparse reward regardless of the mode
        the episode was recorded with; used for cross-method comparison."""
        total = 0.0
        for t in range(self.n_steps - 1, -1, -1):
            reached = self.infos[t] is StepInfo.REACH_GOAL
            r = sparse_reward(self.d_mins[t], d_c, reached)
            total = r + gamma_step * total
        return total

    def path_length(self) -> float:
        total = 0.0
        for a, b in zip(self.states[:-1], self.states[1:]):
            total += math.hypot(b.robot.px - a.robot.px, b.robot.py - a.robot.py)
        return total
