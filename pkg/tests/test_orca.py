import math

import numpy as np
import pytest

from crowdnav.env import EnvConfig, reset
from crowdnav.geometry import AgentState, closest_approach
from crowdnav.orca import OrcaParams, avoidance_constraints, orca_velocity, step_humans

PARAMS = OrcaParams()
DT = 0.25


def agent(px, py, vx=0.0, vy=0.0, radius=0.3, gx=0.0, gy=0.0, v_pref=1.0):
    return AgentState(px=px, py=py, vx=vx, vy=vy, radius=radius, gx=gx, gy=gy, v_pref=v_pref)


class TestOrcaVelocity:
    def test_unconstrained_preferred_velocity(self):
        me = agent(0, 0, gx=4, gy=0)
        assert orca_velocity(me, [], PARAMS, DT) == (1.0, 0.0)

    def test_at_goal_stops(self):
        me = agent(2, 2, gx=2, gy=2)
        assert orca_velocity(me, [], PARAMS, DT) == (0.0, 0.0)

    def test_speed_never_exceeds_max(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            me = agent(*rng.uniform(-4, 4, 2), *rng.uniform(-1, 1, 2),
                       gx=rng.uniform(-4, 4), gy=rng.uniform(-4, 4))
            others = [
                agent(*rng.uniform(-4, 4, 2), *rng.uniform(-1, 1, 2))
                for _ in range(rng.integers(1, 5))
            ]
            vx, vy = orca_velocity(me, others, PARAMS, DT)
            assert math.hypot(vx, vy) <= PARAMS.max_speed + 1e-9

    def test_mirror_symmetry_head_on(self):
        a = agent(-2, 0, vx=0.3, vy=0.0, gx=2, gy=0)
        b = agent(2, 0, vx=-0.3, vy=0.0, gx=-2, gy=0)
        va = orca_velocity(a, [b], PARAMS, DT)
        vb = orca_velocity(b, [a], PARAMS, DT)
        assert va[0] == pytest.approx(-vb[0], abs=1e-6)
        assert va[1] == pytest.approx(-vb[1], abs=1e-6)

    def test_head_on_episode_never_interpenetrates(self):
        a = agent(-2, 0, gx=2, gy=0)
        b = agent(2, 0, gx=-2, gy=0)
        pair = (a, b)
        for _ in range(200):
            pair = step_humans(pair, PARAMS, DT)
            gap = math.hypot(pair[0].px - pair[1].px, pair[0].py - pair[1].py)
            assert gap > pair[0].radius + pair[1].radius

    def test_constraint_normals_are_unit(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            me = agent(*rng.uniform(-4, 4, 2), *rng.uniform(-1, 1, 2),
                       gx=rng.uniform(-4, 4), gy=rng.uniform(-4, 4))
            others = [
                agent(*rng.uniform(-4, 4, 2), *rng.uniform(-1, 1, 2))
                for _ in range(3)
            ]
            for plane in avoidance_constraints(me, others, PARAMS, DT):
                assert math.hypot(*plane.normal) == pytest.approx(1.0, abs=1e-9)

    def test_neighbors_beyond_range_ignored(self):
        me = agent(0, 0, gx=4, gy=0)
        far = agent(100, 0, vx=-1)
        assert orca_velocity(me, [far], PARAMS, DT) == (1.0, 0.0)


class TestStepHumans:
    def test_single_human_walks_to_goal(self):
        h = agent(0, -4, gx=0, gy=4)
        (moved,) = step_humans((h,), PARAMS, DT)
        assert moved.vx == pytest.approx(0.0, abs=1e-12)
        assert moved.vy == pytest.approx(1.0)
        assert moved.py == pytest.approx(-3.75)

    def test_arrived_human_holds_position(self):
        h = agent(1.0, 1.1, vx=0.5, vy=0.5, gx=1.0, gy=1.0)
        (held,) = step_humans((h,), PARAMS, DT)
        assert (held.px, held.py) == (1.0, 1.1)
        assert (held.vx, held.vy) == (0.0, 0.0)

    def test_circle_crossing_is_collision_free(self):
        # robot-free 5-human episodes; pairwise separation stays positive
        # over every motion interval
        cfg = EnvConfig(n_humans=5)
        for seed in range(20):
            world = reset(cfg, seed)
            humans = world.humans
            for _ in range(cfg.max_steps):
                new_humans = step_humans(humans, cfg.orca_params(), cfg.dt)
                for i in range(len(humans)):
                    for j in range(i + 1, len(humans)):
                        a, b = new_humans[i], new_humans[j]
                        sep = closest_approach(
                            (humans[i].px, humans[i].py), (a.vx, a.vy), a.radius,
                            (humans[j].px, humans[j].py), (b.vx, b.vy), b.radius,
                            cfg.dt,
                        )
                        assert sep >= 0.0, f"seed {seed}: humans {i},{j} collided"
                humans = new_humans
