"""Crowd-robot navigation: simulator, sparse-reward value-function RL with
hindsight relabeling and curriculum transfer, and evaluation tooling."""

from .env import (
    EnvConfig,
    EpisodeRecord,
    Outcome,
    RewardMode,
    StepInfo,
    StepOutcome,
    WorldState,
    build_action_set,
    discount_factor,
    reset,
    shaped_reward,
    sparse_reward,
    step,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    CrowdNavError,
    FormatError,
    ScenarioGenerationError,
)
from .evaluation import EvalReport, capture_trajectory, compare_methods, evaluate
from .geometry import (
    AgentState,
    JointState,
    closest_approach,
    propagate_cvm,
    to_robot_centric,
)
from .network import MomentumSGD, ValueNetConfig, ValueNetwork, sync_target
from .orca import HalfPlane, OrcaParams, orca_velocity, step_humans
from .training import (
    InitPolicy,
    ReplayBuffer,
    TrainConfig,
    Transition,
    curriculum_train,
    epsilon_schedule,
    generate_demonstrations,
    greedy_action,
    her_relabel,
    il_pretrain,
    run_episode,
    store_episode,
    td_update,
    train,
)

__version__ = "0.1.0"
