import math

import numpy as np
import pytest

from crowdnav.geometry import (
    AgentState,
    closest_approach,
    propagate_cvm,
    to_robot_centric,
)


def agent(px, py, vx=0.0, vy=0.0, radius=0.3, gx=0.0, gy=0.0, v_pref=1.0):
    return AgentState(px=px, py=py, vx=vx, vy=vy, radius=radius, gx=gx, gy=gy, v_pref=v_pref)


class TestToRobotCentric:
    def test_aligned_frame(self):
        robot = agent(0, 0, vx=1, vy=0, gx=4, gy=0)
        joint = to_robot_centric(robot, [])
        assert joint.robot == pytest.approx([4.0, 1.0, 1.0, 0.0, 0.3])
        assert joint.n_humans == 0

    def test_rotated_velocity(self):
        # goal straight up: the +90 degree rotation maps (0,1) onto (1,0)
        robot = agent(0, -4, vx=0, vy=1, gx=0, gy=4)
        joint = to_robot_centric(robot, [])
        assert joint.robot[0] == pytest.approx(8.0)
        assert joint.robot[2] == pytest.approx(1.0)
        assert joint.robot[3] == pytest.approx(0.0, abs=1e-12)

    def test_human_observation(self):
        robot = agent(0, 0, gx=0, gy=4)
        human = agent(1, 0)
        joint = to_robot_centric(robot, [human])
        assert joint.humans[0] == pytest.approx([1.0, 0.0, -1.0, 0.0, 0.0, 0.3, 0.6], abs=1e-12)

    def test_degenerate_goal_uses_default_axis(self):
        robot = agent(2, 3, vx=0.5, vy=-0.5, gx=2, gy=3)
        joint = to_robot_centric(robot, [agent(3, 3)])
        assert np.all(np.isfinite(joint.robot))
        assert np.all(np.isfinite(joint.humans))
        assert joint.robot[0] == 0.0
        # x-axis falls back to (1, 0): velocities pass through unrotated
        assert joint.robot[2] == pytest.approx(0.5)
        assert joint.robot[3] == pytest.approx(-0.5)

    def test_frame_invariance_under_rigid_transform(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            robot = agent(*rng.uniform(-5, 5, 2), *rng.uniform(-1, 1, 2),
                          gx=rng.uniform(-5, 5), gy=rng.uniform(-5, 5))
            humans = [
                agent(*rng.uniform(-5, 5, 2), *rng.uniform(-1, 1, 2))
                for _ in range(3)
            ]
            theta = rng.uniform(0, 2 * math.pi)
            tx, ty = rng.uniform(-10, 10, 2)
            c, s = math.cos(theta), math.sin(theta)

            def rigid(a):
                return AgentState(
                    px=c * a.px - s * a.py + tx, py=s * a.px + c * a.py + ty,
                    vx=c * a.vx - s * a.vy, vy=s * a.vx + c * a.vy,
                    radius=a.radius,
                    gx=c * a.gx - s * a.gy + tx, gy=s * a.gx + c * a.gy + ty,
                    v_pref=a.v_pref,
                )

            base = to_robot_centric(robot, humans)
            moved = to_robot_centric(rigid(robot), [rigid(h) for h in humans])
            np.testing.assert_allclose(moved.robot, base.robot, atol=1e-9)
            np.testing.assert_allclose(moved.humans, base.humans, atol=1e-9)

    def test_human_distance_matches_position_norm(self):
        rng = np.random.default_rng(11)
        robot = agent(1.0, -2.0, gx=3.0, gy=0.5)
        humans = [agent(*rng.uniform(-5, 5, 2), *rng.uniform(-1, 1, 2)) for _ in range(6)]
        joint = to_robot_centric(robot, humans)
        for row in joint.humans:
            assert abs(row[0] - math.hypot(row[1], row[2])) < 1e-9

    @pytest.mark.parametrize("n", range(11))
    def test_flattened_length(self, n):
        robot = agent(0, 0, gx=1, gy=1)
        humans = [agent(i + 1.0, 0.0) for i in range(n)]
        joint = to_robot_centric(robot, humans)
        assert joint.flatten().shape == (5 + 7 * n,)


class TestPropagateCvm:
    def test_robot_moves_with_action(self):
        robot = agent(0, 0, gx=4, gy=0)
        new_robot, _ = propagate_cvm(robot, [], (1.0, 0.0), 0.25)
        assert (new_robot.px, new_robot.py) == (0.25, 0.0)
        assert (new_robot.vx, new_robot.vy) == (1.0, 0.0)

    def test_human_keeps_velocity(self):
        human = agent(1, 1, vx=-1, vy=0)
        _, humans = propagate_cvm(agent(0, 0, gx=1, gy=0), [human], (0.0, 0.0), 0.25)
        assert (humans[0].px, humans[0].py) == (0.75, 1.0)
        assert (humans[0].vx, humans[0].vy) == (-1.0, 0.0)

    def test_stop_action(self):
        robot = agent(2, 3, vx=1, vy=1, gx=4, gy=0)
        new_robot, _ = propagate_cvm(robot, [], (0.0, 0.0), 0.25)
        assert (new_robot.px, new_robot.py) == (2.0, 3.0)
        assert (new_robot.vx, new_robot.vy) == (0.0, 0.0)

    def test_composition_for_humans(self):
        rng = np.random.default_rng(3)
        humans = [agent(*rng.uniform(-4, 4, 2), *rng.uniform(-1, 1, 2)) for _ in range(4)]
        robot = agent(0, 0, gx=1, gy=0)
        d1, d2 = 0.125, 0.375
        _, step_a = propagate_cvm(robot, humans, (0.0, 0.0), d1)
        _, step_ab = propagate_cvm(robot, step_a, (0.0, 0.0), d2)
        _, direct = propagate_cvm(robot, humans, (0.0, 0.0), d1 + d2)
        for a, b in zip(step_ab, direct):
            assert a.px == pytest.approx(b.px, abs=1e-12)
            assert a.py == pytest.approx(b.py, abs=1e-12)


def brute_force_closest(p_a, v_a, r_a, p_b, v_b, r_b, dt, samples=10_000):
    best = math.inf
    for k in range(samples + 1):
        t = dt * k / samples
        dx = (p_a[0] + v_a[0] * t) - (p_b[0] + v_b[0] * t)
        dy = (p_a[1] + v_a[1] * t) - (p_b[1] + v_b[1] * t)
        best = min(best, math.hypot(dx, dy))
    return best - (r_a + r_b)


class TestClosestApproach:
    def test_receding_clamps_to_interval_end(self):
        # closing at 1 m/s, minimum at the end of the interval
        val = closest_approach((0, 0), (1, 0), 0.3, (1, 0), (0, 0), 0.3, 0.25)
        assert val == pytest.approx(0.15)

    def test_equal_velocities_constant_separation(self):
        val = closest_approach((0, 0), (0.4, -0.2), 0.3, (2, 1), (0.4, -0.2), 0.3, 0.25)
        assert val == pytest.approx(math.hypot(2, 1) - 0.6)

    def test_static_interpenetration(self):
        val = closest_approach((0, 0), (0, 0), 0.3, (0.5, 0), (0, 0), 0.3, 0.25)
        assert val == pytest.approx(-0.1)

    def test_matches_dense_sampling(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            p_a = tuple(rng.uniform(-3, 3, 2))
            p_b = tuple(rng.uniform(-3, 3, 2))
            v_a = tuple(rng.uniform(-2, 2, 2))
            v_b = tuple(rng.uniform(-2, 2, 2))
            r_a, r_b = rng.uniform(0.1, 0.5, 2)
            dt = rng.uniform(0.1, 1.0)
            exact = closest_approach(p_a, v_a, r_a, p_b, v_b, r_b, dt)
            sampled = brute_force_closest(p_a, v_a, r_a, p_b, v_b, r_b, dt)
            assert abs(exact - sampled) < 1e-6
