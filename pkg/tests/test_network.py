import math

import numpy as np
import pytest

from crowdnav.errors import ConfigError, FormatError
from crowdnav.geometry import JointState
from crowdnav.network import MomentumSGD, ValueNetwork, sync_target


def random_joint(rng, n_humans):
    robot = np.array([rng.uniform(0, 9), 1.0, *rng.uniform(-1, 1, 2), 0.3])
    humans = np.empty((n_humans, 7))
    for i in range(n_humans):
        px, py = rng.uniform(-5, 5, 2)
        humans[i] = (math.hypot(px, py), px, py, *rng.uniform(-1, 1, 2), 0.3, 0.6)
    return JointState(robot, humans)


def reference_forward(net, joint):
    """Independent re-implementation with plain per-human loops."""

    def mlp(prefix, count, x, final_linear):
        for i in range(count):
            W = net.params[f"{prefix}.{i}.W"]
            b = net.params[f"{prefix}.{i}.b"]
            x = x @ W + b
            if not (final_linear and i == count - 1):
                x = np.maximum(x, 0.0)
        return x

    robot, humans = joint.robot, joint.humans
    n = humans.shape[0]
    if n == 0:
        crowd = np.zeros(net.config.feature_dim)
    else:
        embeds = []
        for i in range(n):
            pair = np.concatenate([robot, humans[i]])
            embeds.append(mlp("embed", len(net.config.embed_dims), pair, final_linear=False))
        mean = sum(embeds) / n
        scores = []
        for e in embeds:
            u = np.concatenate([e, mean])
            scores.append(mlp("att", len(net.config.attention_dims) + 1, u, final_linear=True)[0])
        scores = np.array(scores)
        weights = np.exp(scores - scores.max())
        weights = weights / weights.sum()
        crowd = np.zeros(net.config.feature_dim)
        for i, e in enumerate(embeds):
            h = np.maximum(e @ net.params["feat.0.W"] + net.params["feat.0.b"], 0.0)
            crowd = crowd + weights[i] * h
    q = np.concatenate([robot, crowd])
    return float(mlp("value", len(net.config.value_dims) + 1, q, final_linear=True)[0])


class TestForward:
    def test_zero_head_outputs_zero(self):
        net = ValueNetwork(seed=0)
        last = len(net.config.value_dims)
        net.params[f"value.{last}.W"][:] = 0.0
        net.params[f"value.{last}.b"][:] = 0.0
        rng = np.random.default_rng(1)
        for n in (0, 1, 5):
            assert net.forward(random_joint(rng, n)) == 0.0

    def test_matches_reference_implementation(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            net = ValueNetwork(seed=trial)
            joint = random_joint(rng, int(rng.integers(1, 6)))
            assert net.forward(joint) == pytest.approx(reference_forward(net, joint), abs=1e-10)

    def test_permutation_invariance_is_bit_exact(self):
        rng = np.random.default_rng(3)
        net = ValueNetwork(seed=9)
        joint = random_joint(rng, 5)
        base = net.forward(joint)
        for _ in range(10):
            perm = rng.permutation(5)
            shuffled = JointState(joint.robot, joint.humans[perm])
            assert net.forward(shuffled) == base

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        net = ValueNetwork(seed=5)
        joints = [random_joint(rng, 3) for _ in range(8)]
        robot = np.stack([j.robot for j in joints])
        humans = np.stack([j.humans for j in joints])
        batch = net.forward_batch(robot, humans)
        for i, j in enumerate(joints):
            assert batch[i] == pytest.approx(net.forward(j), abs=1e-12)

    def test_no_humans_uses_zero_crowd_feature(self):
        net = ValueNetwork(seed=0)
        joint = JointState(np.array([4.0, 1.0, 0.0, 0.0, 0.3]), np.empty((0, 7)))
        v = net.forward(joint)
        assert np.isfinite(v)

    def test_shape_mismatch_raises(self):
        net = ValueNetwork(seed=0)
        with pytest.raises(ConfigError):
            net.forward_batch(np.zeros((1, 4)), np.zeros((1, 2, 7)))
        with pytest.raises(ConfigError):
            net.forward_batch(np.zeros((1, 5)), np.zeros((1, 2, 6)))

    def test_forward_is_pure(self):
        net = ValueNetwork(seed=0)
        rng = np.random.default_rng(5)
        joint = random_joint(rng, 4)
        before = {k: v.copy() for k, v in net.params.items()}
        net.forward(joint)
        for k in before:
            np.testing.assert_array_equal(net.params[k], before[k])


def finite_difference_check(net, joint, target, rng, n_coords=50, h=1e-5):
    """Central differences on randomly chosen parameter coordinates."""
    _, grads = net.backward(joint, target)
    worst = 0.0
    names = sorted(net.params)
    for _ in range(n_coords):
        name = names[rng.integers(len(names))]
        flat_idx = int(rng.integers(net.params[name].size))
        idx = np.unravel_index(flat_idx, net.params[name].shape)
        orig = net.params[name][idx]
        net.params[name][idx] = orig + h
        up = (net.forward(joint) - target) ** 2
        net.params[name][idx] = orig - h
        down = (net.forward(joint) - target) ** 2
        net.params[name][idx] = orig
        numeric = (up - down) / (2 * h)
        analytic = grads[name][idx]
        denom = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


class TestBackward:
    def test_zero_loss_zero_grads(self):
        net = ValueNetwork(seed=1)
        rng = np.random.default_rng(6)
        joint = random_joint(rng, 3)
        target = net.forward(joint)
        loss, grads = net.backward(joint, target)
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_loss_is_quadratic_in_residual(self):
        net = ValueNetwork(seed=1)
        rng = np.random.default_rng(7)
        joint = random_joint(rng, 2)
        v = net.forward(joint)
        loss1, _ = net.backward(joint, v - 0.5)
        loss2, _ = net.backward(joint, v - 1.0)
        assert loss2 == pytest.approx(4 * loss1)

    @pytest.mark.parametrize("n_humans", [0, 1, 3, 5])
    def test_gradients_match_finite_differences(self, n_humans):
        rng = np.random.default_rng(100 + n_humans)
        net = ValueNetwork(seed=n_humans)
        joint = random_joint(rng, n_humans)
        worst = finite_difference_check(net, joint, target=0.7, rng=rng)
        assert worst < 1e-4

    def test_batch_gradients_match_single_average(self):
        rng = np.random.default_rng(8)
        net = ValueNetwork(seed=2)
        joints = [random_joint(rng, 2) for _ in range(4)]
        targets = rng.uniform(-1, 1, 4)
        robot = np.stack([j.robot for j in joints])
        humans = np.stack([j.humans for j in joints])
        loss, _, grads = net.batch_loss_and_grads(robot, humans, targets)
        acc = net.zero_grads()
        total = 0.0
        for j, t in zip(joints, targets):
            l, g = net.backward(j, t)
            total += l
            for k in acc:
                acc[k] += g[k] / len(joints)
        assert loss == pytest.approx(total / len(joints))
        for k in acc:
            np.testing.assert_allclose(grads[k], acc[k], atol=1e-12)


class TestOptimizer:
    def test_zero_grads_no_change(self):
        net = ValueNetwork(seed=0)
        before = {k: v.copy() for k, v in net.params.items()}
        MomentumSGD(lr=0.1).step(net, net.zero_grads())
        for k in before:
            np.testing.assert_array_equal(net.params[k], before[k])

    def test_plain_sgd_definition(self):
        net = ValueNetwork(seed=0)
        w0 = net.params["value.0.W"].copy()
        grads = net.zero_grads()
        grads["value.0.W"][:] = 2.0
        MomentumSGD(lr=0.01, momentum=0.0).step(net, grads)
        np.testing.assert_allclose(net.params["value.0.W"], w0 - 0.01 * 2.0)

    def test_momentum_recurrence(self):
        net = ValueNetwork(seed=0)
        w0 = net.params["value.0.W"].copy()
        grads = net.zero_grads()
        grads["value.0.W"][:] = 1.0
        opt = MomentumSGD(lr=0.1, momentum=0.9)
        opt.step(net, grads)
        first = w0 - net.params["value.0.W"]
        np.testing.assert_allclose(first, 0.1 * np.ones_like(w0))
        before_second = net.params["value.0.W"].copy()
        opt.step(net, grads)
        second = before_second - net.params["value.0.W"]
        # second update magnitude: lr * g * (1 + momentum)
        np.testing.assert_allclose(second, 0.1 * 1.9 * np.ones_like(w0))


class TestTargetNetwork:
    def test_copy_equality_and_independence(self):
        net = ValueNetwork(seed=3)
        target = sync_target(net)
        for k in net.params:
            np.testing.assert_array_equal(net.params[k], target.params[k])
        net.params["value.0.W"] += 1.0
        assert not np.allclose(net.params["value.0.W"], target.params["value.0.W"])

    def test_repeated_sync_idempotent(self):
        net = ValueNetwork(seed=3)
        t1 = sync_target(net)
        t2 = sync_target(net)
        for k in net.params:
            np.testing.assert_array_equal(t1.params[k], t2.params[k])

    def test_divergence_after_update(self):
        net = ValueNetwork(seed=3)
        target = sync_target(net)
        rng = np.random.default_rng(9)
        joint = random_joint(rng, 2)
        _, grads = net.backward(joint, 1.0)
        MomentumSGD(lr=0.05).step(net, grads)
        assert net.forward(joint) != target.forward(joint)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        net = ValueNetwork(seed=17)
        path = tmp_path / "weights.txt"
        net.save(path)
        loaded = ValueNetwork.load(path)
        for k in net.params:
            np.testing.assert_array_equal(net.params[k], loaded.params[k])
        rng = np.random.default_rng(10)
        joint = random_joint(rng, 4)
        assert net.forward(joint) == loaded.forward(joint)
        # file-level idempotence
        path2 = tmp_path / "weights2.txt"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_rejects_bad_magic(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("not a weight file\n")
        with pytest.raises(FormatError, match="line 1"):
            ValueNetwork.load(p)

    def test_rejects_truncated_values(self, tmp_path):
        net = ValueNetwork(seed=0)
        p = tmp_path / "w.txt"
        net.save(p)
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(FormatError):
            ValueNetwork.load(p)

    def test_rejects_garbled_value(self, tmp_path):
        net = ValueNetwork(seed=0)
        p = tmp_path / "w.txt"
        net.save(p)
        lines = p.read_text().splitlines()
        parts = lines[-2].split()  # final weight matrix, many values
        parts[3] = "bogus"
        lines[-2] = " ".join(parts)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match="line"):
            ValueNetwork.load(p)

    def test_rejects_wrong_count(self, tmp_path):
        net = ValueNetwork(seed=0)
        p = tmp_path / "w.txt"
        net.save(p)
        lines = p.read_text().splitlines()
        lines[-1] = lines[-1] + " 0.5"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError, match="values"):
            ValueNetwork.load(p)

    def test_seeded_init_is_deterministic(self):
        a, b = ValueNetwork(seed=21), ValueNetwork(seed=21)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
        c = ValueNetwork(seed=22)
        assert any(not np.array_equal(a.params[k], c.params[k]) for k in a.params)
