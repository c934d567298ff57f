"""Value-function RL with experience replay, hindsight relabeling of timed-out
episodes, and curriculum transfer from a 1-human to a crowded scene.

Seeding: one run seed derives every stream (network init, per-episode
scenario seeds, exploration draws, minibatch sampling, validation and
demonstration scenarios) through fixed stream ids, so whole runs are
bit-reproducible.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import env as crowd_env
from .env import (
    EnvConfig,
    EpisodeRecord,
    Outcome,
    RewardMode,
    StepInfo,
    WorldState,
    build_action_set,
    cvm_step_reward,
    discount_factor,
)
from .errors import ConfigError, ContractViolationError
from .geometry import JointState, propagate_cvm, to_robot_centric
from .network import MomentumSGD, ValueNetwork, accumulate_grads, sync_target
from .orca import orca_velocity

# Stream ids mixed with the run seed; each (seed, stream, index) tuple is
# independent entropy for numpy's SeedSequence.
STREAM_NET = 0
STREAM_ENV = 1
STREAM_POLICY = 2
STREAM_VAL = 3
STREAM_DEMO = 4
STREAM_TD = 5
STREAM_IL = 6
STREAM_EVAL = 7


def derive_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), int(stream)) + tuple(int(e) for e in extra))


class InitPolicy(enum.Enum):
    RANDOM = "random"
    DEMONSTRATION = "demonstration"


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 10000
    eps_start: float = 0.5
    eps_end: float = 0.1
    eps_decay_episodes: int = 5000
    lr_rl: float = 0.001
    lr_il: float = 0.01
    il_epochs: int = 50
    batch_size: int = 100
    grad_steps_per_episode: int = 100
    target_update_interval: int = 50
    buffer_capacity: int = 100_000
    init_episodes: int = 3000
    init_policy: InitPolicy = InitPolicy.RANDOM
    momentum: float = 0.9
    val_interval: int = 500
    val_episodes: int = 100
    checkpoint_interval: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ConfigError("need 0 <= eps_end <= eps_start <= 1")
        for name in (
            "eps_decay_episodes", "il_epochs", "batch_size", "grad_steps_per_episode",
            "target_update_interval", "buffer_capacity", "init_episodes",
            "val_interval", "val_episodes", "checkpoint_interval",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if self.lr_rl <= 0 or self.lr_il <= 0:
            raise ConfigError("learning rates must be > 0")


@dataclass(frozen=True)
class Transition:
    joint: JointState
    action_index: int
    reward: float
    next_joint: JointState
    terminal: bool


class ReplayBuffer:
    """FIFO ring of transitions with uniform without-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ConfigError("buffer capacity must be > 0")
        self.capacity = capacity
        self._data: list[Transition] = []
        self._head = 0

    def __len__(self) -> int:
        return len(self._data)

    def add(self, transition: Transition) -> None:
        if len(self._data) < self.capacity:
            self._data.append(transition)
        else:
            self._data[self._head] = transition
            self._head = (self._head + 1) % self.capacity

    def extend(self, transitions: Sequence[Transition]) -> None:
        for t in transitions:
            self.add(t)

    def sample(self, rng: np.random.Generator, batch_size: int) -> list[Transition]:
        n = len(self._data)
        if batch_size > n:
            raise ContractViolationError("buffer smaller than batch size")
        idx = rng.integers(0, n, size=batch_size)
        unique = set(idx.tolist())
        while len(unique) < batch_size:  # rare for batch << size
            unique.add(int(rng.integers(0, n)))
        return [self._data[i] for i in sorted(unique)]


def epsilon_schedule(episode: int, cfg: TrainConfig) -> float:
    """Linear decay from eps_start to eps_end over eps_decay_episodes, then
    constant eps_end."""
    if episode >= cfg.eps_decay_episodes:
        return cfg.eps_end
    frac = max(episode, 0) / cfg.eps_decay_episodes
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def greedy_action(
    world: WorldState,
    net: ValueNetwork,
    action_set: Sequence[tuple[float, float]],
    config: EnvConfig,
) -> int:
    """One-step lookahead argmax of r + gamma_step * V(next joint state),
    with the next state predicted by the constant-velocity model. Ties
    break toward the lowest action index."""
    gamma_step = config.gamma_step()
    rewards = np.empty(len(action_set))
    robots = []
    humans = []
    for i, action in enumerate(action_set):
        _, rewards[i], _ = cvm_step_reward(world, action, config)
        next_robot, next_humans = propagate_cvm(world.robot, world.humans, action, config.dt)
        joint = to_robot_centric(next_robot, next_humans)
        robots.append(joint.robot)
        humans.append(joint.humans)
    values = net.forward_batch(np.stack(robots), np.stack(humans))
    return int(np.argmax(rewards + gamma_step * values))


def run_episode(
    net: ValueNetwork,
    config: EnvConfig,
    eps: float,
    rng: np.random.Generator | None,
    seed,
) -> EpisodeRecord:
    """Roll one episode to termination with an eps-greedy policy.

    eps = 1 gives pure random rollouts (no network evaluations); eps = 0 is
    fully deterministic given the parameters and the scenario seed.
    """
    action_set = build_action_set(config.v_pref)
    world = crowd_env.reset(config, seed)
    record = EpisodeRecord(dt=config.dt, states=[world])
    for _ in range(config.max_steps):
        if eps > 0.0 and rng is not None and rng.random() < eps:
            a_idx = int(rng.integers(len(action_set)))
        else:
            a_idx = greedy_action(world, net, action_set, config)
        out = crowd_env.step(world, action_set[a_idx], config)
        record.add_step(action_set[a_idx], a_idx, out, config)
        world = out.next_world
        if crowd_env.is_terminal(out.info):
            break
    return record


def episode_transitions(record: EpisodeRecord) -> list[Transition]:
    """Verbatim transitions. Collision/ReachGoal finals are terminal;
    a timed-out final is a horizon truncation and still bootstraps."""
    out = []
    k = record.n_steps
    for t in range(k):
        world, nxt = record.states[t], record.states[t + 1]
        terminal = t == k - 1 and record.infos[t] in (StepInfo.COLLISION, StepInfo.REACH_GOAL)
        out.append(
            Transition(
                joint=to_robot_centric(world.robot, world.humans),
                action_index=record.action_indices[t],
                reward=record.rewards[t],
                next_joint=to_robot_centric(nxt.robot, nxt.humans),
                terminal=terminal,
            )
        )
    return out


def her_relabel(record: EpisodeRecord, config: EnvConfig) -> list[Transition]:
    """Relabel a clean timed-out episode with its final position as the goal.

    Every snapshot is re-transformed to the new goal (x-axis re-aimed, d_g
    recomputed); the final step becomes a terminal success with reward 1
    while intermediate rewards are kept.
    """
    if record.outcome is not Outcome.TIMEOUT:
        raise ContractViolationError(
            f"hindsight relabeling requires a timed-out episode, got {record.outcome.value}"
        )
    if record.had_discomfort:
        raise ContractViolationError(
            "hindsight relabeling requires an episode without discomfort"
        )
    final = record.states[-1].robot
    gx, gy = final.px, final.py
    out = []
    k = record.n_steps
    for t in range(k):
        world, nxt = record.states[t], record.states[t + 1]
        joint = to_robot_centric(world.robot.with_goal(gx, gy), world.humans)
        next_joint = to_robot_centric(nxt.robot.with_goal(gx, gy), nxt.humans)
        if t == k - 1:
            reward, terminal = 1.0, True
        else:
            reward, terminal = record.rewards[t], False
        out.append(
            Transition(
                joint=joint,
                action_index=record.action_indices[t],
                reward=reward,
                next_joint=next_joint,
                terminal=terminal,
            )
        )
    return out


def her_eligible(record: EpisodeRecord) -> bool:
    return record.outcome is Outcome.TIMEOUT and not record.had_discomfort


def store_episode(
    buffer: ReplayBuffer, record: EpisodeRecord, config: EnvConfig, her: bool
) -> None:
    """Store per the relabeling branch structure: successes and collisions
    verbatim; clean timeouts relabeled when hindsight replay is on; all
    other timeouts verbatim."""
    if her and her_eligible(record):
        buffer.extend(her_relabel(record, config))
    else:
        buffer.extend(episode_transitions(record))


def td_update(
    net: ValueNetwork,
    target_net: ValueNetwork,
    buffer: ReplayBuffer,
    cfg: TrainConfig,
    gamma_step: float,
    rng: np.random.Generator,
    optimizer: MomentumSGD,
) -> float | None:
    """grad_steps_per_episode minibatch TD updates against the frozen
    target network. Terminal targets are the bare rewards (no bootstrap).
    Returns the mean loss, or None when the buffer is still underfilled."""
    if len(buffer) < cfg.batch_size:
        return None
    losses = []
    for _ in range(cfg.grad_steps_per_episode):
        batch = buffer.sample(rng, cfg.batch_size)
        groups: dict[int, list[Transition]] = {}
        for tr in batch:
            groups.setdefault(tr.joint.n_humans, []).append(tr)
        total_grads = None
        total_loss = 0.0
        for n, transitions in sorted(groups.items()):
            robot = np.stack([tr.joint.robot for tr in transitions])
            humans = np.stack([tr.joint.humans for tr in transitions])
            rewards = np.array([tr.reward for tr in transitions])
            terminal = np.array([tr.terminal for tr in transitions])
            next_robot = np.stack([tr.next_joint.robot for tr in transitions])
            next_humans = np.stack([tr.next_joint.humans for tr in transitions])
            next_values = target_net.forward_batch(next_robot, next_humans)
            targets = rewards + np.where(terminal, 0.0, gamma_step * next_values)
            loss, _, grads = net.batch_loss_and_grads(robot, humans, targets)
            weight = len(transitions) / len(batch)
            total_loss += weight * loss
            if total_grads is None:  # single-group batches skip accumulation
                if weight != 1.0:
                    for g in grads.values():
                        g *= weight
                total_grads = grads
            else:
                accumulate_grads(total_grads, grads, weight)
        optimizer.step(net, total_grads)
        losses.append(total_loss)
    return float(np.mean(losses))


@dataclass
class CurvePoint:
    episode: int
    phase: str  # "train" or "val"
    outcome: str
    nav_time: float
    discounted_reward: float
    epsilon: float
    mean_loss: float | None


@dataclass
class TrainResult:
    net: ValueNetwork
    curve: list[CurvePoint] = field(default_factory=list)
    skipped_updates: int = 0

    def validation_success_rates(self) -> dict[int, float]:
        """Validation sweep success rate keyed by the training episode at
        which the sweep ran."""
        sweeps: dict[int, list[str]] = {}
        for p in self.curve:
            if p.phase == "val":
                sweeps.setdefault(p.episode, []).append(p.outcome)
        return {
            ep: sum(o == Outcome.REACH_GOAL.value for o in outcomes) / len(outcomes)
            for ep, outcomes in sweeps.items()
        }


def _validation_sweep(
    net: ValueNetwork,
    config: EnvConfig,
    cfg: TrainConfig,
    seed: int,
    episode: int,
    curve: list[CurvePoint],
) -> None:
    gamma_step = config.gamma_step()
    for i in range(cfg.val_episodes):
        rec = run_episode(net, config, eps=0.0, rng=None, seed=(seed, STREAM_VAL, i))
        curve.append(
            CurvePoint(
                episode=episode,
                phase="val",
                outcome=rec.outcome.value,
                nav_time=rec.nav_time,
                discounted_reward=rec.discounted_return(gamma_step),
                epsilon=0.0,
                mean_loss=None,
            )
        )


def train(
    cfg: TrainConfig,
    env_cfg: EnvConfig,
    her: bool,
    seed: int,
    initial_net: ValueNetwork | None = None,
    demos: Sequence[EpisodeRecord] | None = None,
    stage: int = 0,
    checkpoint_hook: Callable[[int, ValueNetwork], None] | None = None,
) -> TrainResult:
    """The full training loop: buffer initialization, eps-greedy episodes,
    hindsight storage, minibatch TD updates, and periodic target syncs,
    with eps = 0 validation sweeps every val_interval episodes."""
    net_rng_seed = int(
        np.random.SeedSequence((seed, STREAM_NET, stage)).generate_state(1)[0]
    )
    if initial_net is not None:
        net = initial_net.copy()
    else:
        net = ValueNetwork(seed=net_rng_seed)
    result = TrainResult(net=net)
    if cfg.episodes == 0:
        return result

    target = sync_target(net)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    optimizer = MomentumSGD(cfg.lr_rl, cfg.momentum)
    gamma_step = env_cfg.gamma_step()
    policy_rng = derive_rng(seed, STREAM_POLICY, stage)
    td_rng = derive_rng(seed, STREAM_TD, stage)

    if cfg.init_policy is InitPolicy.DEMONSTRATION:
        if demos is None:
            demos = generate_demonstrations(env_cfg, cfg.init_episodes, seed)
        for rec in demos:
            store_episode(buffer, rec, env_cfg, her)
    else:
        for i in range(cfg.init_episodes):
            rec = run_episode(
                net, env_cfg, eps=1.0, rng=policy_rng, seed=(seed, STREAM_ENV, stage, i)
            )
            store_episode(buffer, rec, env_cfg, her)

    for episode in range(cfg.episodes):
        eps = epsilon_schedule(episode, cfg)
        rec = run_episode(
            net, env_cfg, eps=eps, rng=policy_rng,
            seed=(seed, STREAM_ENV, stage, cfg.init_episodes + episode),
        )
        store_episode(buffer, rec, env_cfg, her)
        mean_loss = td_update(net, target, buffer, cfg, gamma_step, td_rng, optimizer)
        if mean_loss is None:
            result.skipped_updates += 1
        if (episode + 1) % cfg.target_update_interval == 0:
            target = sync_target(net)
        result.curve.append(
            CurvePoint(
                episode=episode,
                phase="train",
                outcome=rec.outcome.value,
                nav_time=rec.nav_time,
                discounted_reward=rec.discounted_return(gamma_step),
                epsilon=eps,
                mean_loss=mean_loss,
            )
        )
        if (episode + 1) % cfg.val_interval == 0 or episode + 1 == cfg.episodes:
            _validation_sweep(net, env_cfg, cfg, seed, episode, result.curve)
        if checkpoint_hook is not None and (episode + 1) % cfg.checkpoint_interval == 0:
            checkpoint_hook(episode + 1, net)
    return result


def curriculum_train(
    cfg_stage1: TrainConfig,
    env_stage1: EnvConfig,
    cfg_stage2: TrainConfig,
    env_stage2: EnvConfig,
    her: bool,
    seed: int,
    checkpoint_hook: Callable[[int, ValueNetwork], None] | None = None,
) -> tuple[TrainResult, TrainResult]:
    """Two-stage curriculum: train in the simple scene, then continue from
    those weights in the crowded scene. Attention pooling keeps the network
    shape independent of the human count, so the transfer is direct."""
    stage1 = train(cfg_stage1, env_stage1, her, seed, stage=1)
    stage2 = train(
        cfg_stage2, env_stage2, her, seed,
        initial_net=stage1.net, stage=2, checkpoint_hook=checkpoint_hook,
    )
    return stage1, stage2


def orca_episode(env_cfg: EnvConfig, seed) -> EpisodeRecord:
    """One episode with the robot driven by the reciprocal avoidance policy
    (the robot sees the humans; humans still ignore the robot). Rewards are
    recorded under the sparse scheme."""
    from dataclasses import replace as dc_replace

    cfg = dc_replace(env_cfg, reward_mode=RewardMode.SPARSE)
    # A wider margin than the crowd's: the humans never yield to the robot,
    # so the expert keeps extra clearance.
    params = dc_replace(cfg.orca_params(), safety_margin=0.2)
    world = crowd_env.reset(cfg, seed)
    record = EpisodeRecord(dt=cfg.dt, states=[world])
    for _ in range(cfg.max_steps):
        action = orca_velocity(world.robot, world.humans, params, cfg.dt)
        out = crowd_env.step(world, action, cfg)
        record.add_step(action, -1, out, cfg)
        world = out.next_world
        if crowd_env.is_terminal(out.info):
            break
    return record


def generate_demonstrations(
    env_cfg: EnvConfig, episodes: int, seed: int
) -> list[EpisodeRecord]:
    """Expert rollouts for imitation pretraining and replay initialization."""
    return [orca_episode(env_cfg, (seed, STREAM_DEMO, i)) for i in range(episodes)]


def il_pretrain(
    net: ValueNetwork,
    demos: Sequence[EpisodeRecord],
    cfg: TrainConfig,
    env_cfg: EnvConfig,
    seed: int = 0,
) -> list[float]:
    """Supervised pretraining: regress V(J_t) onto each demo state's
    empirical discounted return. Returns the per-epoch mean losses."""
    if not demos:
        raise ContractViolationError("imitation pretraining requires demonstrations")
    gamma_step = env_cfg.gamma_step()
    states: list[JointState] = []
    targets: list[float] = []
    for rec in demos:
        ret = 0.0
        rets = [0.0] * rec.n_steps
        for t in range(rec.n_steps - 1, -1, -1):
            ret = rec.rewards[t] + gamma_step * ret
            rets[t] = ret
        for t in range(rec.n_steps):
            w = rec.states[t]
            states.append(to_robot_centric(w.robot, w.humans))
            targets.append(rets[t])

    groups: dict[int, list[int]] = {}
    for i, s in enumerate(states):
        groups.setdefault(s.n_humans, []).append(i)
    stacked = {
        n: (
            np.stack([states[i].robot for i in idx]),
            np.stack([states[i].humans for i in idx]),
            np.array([targets[i] for i in idx]),
            np.array(idx),
        )
        for n, idx in groups.items()
    }

    optimizer = MomentumSGD(cfg.lr_il, cfg.momentum)
    rng = derive_rng(seed, STREAM_IL)
    n_samples = len(states)
    epoch_losses = []
    for _ in range(cfg.il_epochs):
        losses = []
        for n, (robot, humans, tgt, _) in sorted(stacked.items()):
            order = rng.permutation(len(tgt))
            for start in range(0, len(order), cfg.batch_size):
                sel = order[start : start + cfg.batch_size]
                loss, _, grads = net.batch_loss_and_grads(robot[sel], humans[sel], tgt[sel])
                optimizer.step(net, grads)
                losses.append((len(sel), loss))
        epoch_losses.append(sum(k * l for k, l in losses) / sum(k for k, _ in losses))
    return epoch_losses
