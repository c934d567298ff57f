"""Socially attentive value approximator with exact hand-derived gradients.

Per-human pair vectors (robot state + human observation) are embedded by a
shared MLP, scored by an attention MLP that also sees the mean-pooled
embedding, and softmax-pooled into a fixed-size crowd feature consumed by
a value head alongside the raw robot state. Pooling makes the output
permutation-invariant in the humans; reductions run in a canonical
(lexicographically sorted) human order so the invariance is bit-exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .geometry import HUMAN_STATE_DIM, ROBOT_STATE_DIM, JointState

_MAGIC = "crowdnav-valuenet v1"


@dataclass(frozen=True)
class ValueNetConfig:
    embed_dims: tuple[int, ...] = (150, 100)
    attention_dims: tuple[int, ...] = (100, 100)
    feature_dim: int = 50
    value_dims: tuple[int, ...] = (150, 100, 100)


def _layer_specs(cfg: ValueNetConfig) -> list[tuple[str, int, int, str]]:
    """(name, fan_in, fan_out, activation) in construction order."""
    specs = []
    d_in = ROBOT_STATE_DIM + HUMAN_STATE_DIM
    for i, d_out in enumerate(cfg.embed_dims):
        specs.append((f"embed.{i}", d_in, d_out, "relu"))
        d_in = d_out
    embed_out = d_in
    d_in = 2 * embed_out
    for i, d_out in enumerate(cfg.attention_dims):
        specs.append((f"att.{i}", d_in, d_out, "relu"))
        d_in = d_out
    specs.append((f"att.{len(cfg.attention_dims)}", d_in, 1, "linear"))
    specs.append(("feat.0", embed_out, cfg.feature_dim, "relu"))
    d_in = ROBOT_STATE_DIM + cfg.feature_dim
    for i, d_out in enumerate(cfg.value_dims):
        specs.append((f"value.{i}", d_in, d_out, "relu"))
        d_in = d_out
    specs.append((f"value.{len(cfg.value_dims)}", d_in, 1, "linear"))
    return specs


def canonical_human_order(humans: np.ndarray) -> np.ndarray:
    """Sort each row's humans lexicographically by their observation vector
    so that every pooling reduction sees a permutation-independent order."""
    B, n, d = humans.shape
    if n <= 1:
        return humans
    flat = humans.reshape(B * n, d)
    batch_idx = np.repeat(np.arange(B), n)
    keys = tuple(flat[:, k] for k in range(d - 1, -1, -1)) + (batch_idx,)
    order = np.lexsort(keys)
    return flat[order].reshape(B, n, d)


class ValueNetwork:
    """V(J) approximator. forward-like methods are read-only; apply_step
    mutates parameters and requires exclusive access."""

    def __init__(self, config: ValueNetConfig | None = None, seed: int = 0):
        self.config = config or ValueNetConfig()
        self.seed = int(seed)
        self.specs = _layer_specs(self.config)
        rng = np.random.default_rng(self.seed)
        self.params: dict[str, np.ndarray] = {}
        for name, fan_in, fan_out, _ in self.specs:
            bound = 1.0 / math.sqrt(fan_in)
            self.params[name + ".W"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            self.params[name + ".b"] = rng.uniform(-bound, bound, fan_out)

    # ----- structure helpers -------------------------------------------------

    def _mlp(self, prefix: str, count: int):
        return [(self.params[f"{prefix}.{i}.W"], self.params[f"{prefix}.{i}.b"]) for i in range(count)]

    def copy(self) -> "ValueNetwork":
        dup = ValueNetwork.__new__(ValueNetwork)
        dup.config = self.config
        dup.seed = self.seed
        dup.specs = self.specs
        dup.params = {k: v.copy() for k, v in self.params.items()}
        return dup

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def _check_joint(self, robot: np.ndarray, humans: np.ndarray) -> None:
        if robot.ndim != 2 or robot.shape[1] != ROBOT_STATE_DIM:
            raise ConfigError(
                f"robot state width {robot.shape} does not match network input {ROBOT_STATE_DIM}"
            )
        if humans.ndim != 3 or humans.shape[2] != HUMAN_STATE_DIM:
            raise ConfigError(
                f"human state width {humans.shape} does not match network input {HUMAN_STATE_DIM}"
            )

    # ----- forward -----------------------------------------------------------

    def forward_batch(self, robot: np.ndarray, humans: np.ndarray, want_cache: bool = False):
        """Values for a batch of joint states with a shared human count.

        robot: (B, 5); humans: (B, n, 7) with n >= 0.
        """
        robot = np.asarray(robot, dtype=np.float64)
        humans = np.asarray(humans, dtype=np.float64)
        self._check_joint(robot, humans)
        B, n = humans.shape[0], humans.shape[1]
        cache: dict = {"robot": robot, "n": n, "B": B}

        n_embed = len(self.config.embed_dims)
        n_att = len(self.config.attention_dims) + 1
        n_value = len(self.config.value_dims) + 1
        embed_out = self.config.embed_dims[-1]

        if n == 0:
            crowd = np.zeros((B, self.config.feature_dim))
        else:
            humans = canonical_human_order(humans)
            cache["humans"] = humans
            x = np.concatenate(
                [np.broadcast_to(robot[:, None, :], (B, n, ROBOT_STATE_DIM)), humans], axis=2
            ).reshape(B * n, ROBOT_STATE_DIM + HUMAN_STATE_DIM)
            cache["x"] = x

            a = x
            pre_embed, post_embed = [], []
            for W, b in self._mlp("embed", n_embed):
                z = a @ W + b
                a = np.maximum(z, 0.0)
                pre_embed.append(z)
                post_embed.append(a)
            e = a  # (B*n, embed_out)
            cache["pre_embed"], cache["post_embed"] = pre_embed, post_embed

            E = e.reshape(B, n, embed_out)
            ebar = E.mean(axis=1)  # (B, embed_out)
            u = np.concatenate(
                [E, np.broadcast_to(ebar[:, None, :], (B, n, embed_out))], axis=2
            ).reshape(B * n, 2 * embed_out)
            cache["u"] = u

            a = u
            pre_att, post_att = [], []
            att_layers = self._mlp("att", n_att)
            for W, b in att_layers[:-1]:
                z = a @ W + b
                a = np.maximum(z, 0.0)
                pre_att.append(z)
                post_att.append(a)
            W, b = att_layers[-1]
            scores = (a @ W + b).reshape(B, n)
            cache["pre_att"], cache["post_att"] = pre_att, post_att

            shifted = scores - scores.max(axis=1, keepdims=True)
            expd = np.exp(shifted)
            alpha = expd / expd.sum(axis=1, keepdims=True)  # (B, n)
            cache["alpha"] = alpha

            Wf, bf = self.params["feat.0.W"], self.params["feat.0.b"]
            zf = e @ Wf + bf
            h = np.maximum(zf, 0.0)
            cache["zf"], cache["h"] = zf, h
            crowd = np.einsum("bn,bnf->bf", alpha, h.reshape(B, n, self.config.feature_dim))
        cache["crowd"] = crowd

        q = np.concatenate([robot, crowd], axis=1)
        cache["q"] = q
        a = q
        pre_value, post_value = [], []
        value_layers = self._mlp("value", n_value)
        for W, b in value_layers[:-1]:
            z = a @ W + b
            a = np.maximum(z, 0.0)
            pre_value.append(z)
            post_value.append(a)
        W, b = value_layers[-1]
        v = (a @ W + b)[:, 0]
        cache["pre_value"], cache["post_value"] = pre_value, post_value

        if want_cache:
            return v, cache
        return v

    def forward(self, joint: JointState) -> float:
        """Value of a single joint state."""
        v = self.forward_batch(joint.robot[None, :], joint.humans[None, :, :])
        return float(v[0])

    # ----- backward ----------------------------------------------------------

    def _backward_from_dv(self, dv: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        """Exact gradients of sum_i dv_i * v_i with respect to all parameters."""
        grads: dict[str, np.ndarray] = {}
        B, n = cache["B"], cache["n"]
        n_embed = len(self.config.embed_dims)
        n_att = len(self.config.attention_dims) + 1
        n_value = len(self.config.value_dims) + 1
        embed_out = self.config.embed_dims[-1]

        # value head
        d = dv[:, None]  # (B, 1)
        post = [cache["q"]] + cache["post_value"]
        for i in range(n_value - 1, -1, -1):
            name = f"value.{i}"
            grads[name + ".W"] = post[i].T @ d
            grads[name + ".b"] = d.sum(axis=0)
            d = d @ self.params[name + ".W"].T
            if i > 0:
                d = d * (cache["pre_value"][i - 1] > 0.0)
        dq = d  # (B, 5 + feature_dim)
        if n == 0:
            for name, value in self.params.items():
                if name not in grads:
                    grads[name] = np.zeros_like(value)
            return grads
        dcrowd = dq[:, ROBOT_STATE_DIM:]  # (B, F)

        alpha = cache["alpha"]
        H = cache["h"].reshape(B, n, self.config.feature_dim)
        dalpha = np.einsum("bnf,bf->bn", H, dcrowd)
        dH = alpha[:, :, None] * dcrowd[:, None, :]

        # softmax backward
        dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))

        # feature MLP backward
        dh = dH.reshape(B * n, self.config.feature_dim)
        dzf = dh * (cache["zf"] > 0.0)
        e = cache["post_embed"][-1]
        grads["feat.0.W"] = e.T @ dzf
        grads["feat.0.b"] = dzf.sum(axis=0)
        de_feat = dzf @ self.params["feat.0.W"].T

        # attention MLP backward
        d = dscores.reshape(B * n, 1)
        post = [cache["u"]] + cache["post_att"]
        for i in range(n_att - 1, -1, -1):
            name = f"att.{i}"
            grads[name + ".W"] = post[i].T @ d
            grads[name + ".b"] = d.sum(axis=0)
            d = d @ self.params[name + ".W"].T
            if i > 0:
                d = d * (cache["pre_att"][i - 1] > 0.0)
        du = d  # (B*n, 2*embed_out)
        de_att = du[:, :embed_out]
        debar = du[:, embed_out:].reshape(B, n, embed_out).sum(axis=1)  # (B, embed_out)
        de_mean = np.broadcast_to(debar[:, None, :] / n, (B, n, embed_out)).reshape(
            B * n, embed_out
        )

        # embedding MLP backward
        d = de_feat + de_att + de_mean
        post = [cache["x"]] + cache["post_embed"]
        for i in range(n_embed - 1, -1, -1):
            name = f"embed.{i}"
            d = d * (cache["pre_embed"][i] > 0.0)
            grads[name + ".W"] = post[i].T @ d
            grads[name + ".b"] = d.sum(axis=0)
            if i > 0:
                d = d @ self.params[name + ".W"].T
        return grads

    def backward(self, joint: JointState, target: float) -> tuple[float, dict[str, np.ndarray]]:
        """Squared-error loss (V(joint) - target)^2 and its exact gradients."""
        v, cache = self.forward_batch(
            joint.robot[None, :], joint.humans[None, :, :], want_cache=True
        )
        diff = v[0] - target
        grads = self._backward_from_dv(np.array([2.0 * diff]), cache)
        return float(diff * diff), grads

    def batch_loss_and_grads(
        self, robot: np.ndarray, humans: np.ndarray, targets: np.ndarray
    ) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
        """Mean squared error over a batch with exact gradients.

        Returns (loss, per-sample values, grads). Gradients are of the mean,
        so they can be weighted and summed across human-count groups.
        """
        v, cache = self.forward_batch(robot, humans, want_cache=True)
        diff = v - targets
        loss = float(np.mean(diff * diff))
        grads = self._backward_from_dv(2.0 * diff / diff.shape[0], cache)
        return loss, v, grads

    # ----- serialization -----------------------------------------------------

    def save(self, path) -> None:
        """Text weight file: header (layer, shape, activation, seed) followed
        by one row-major value line per tensor, 17 significant digits."""
        names = []
        for name, fan_in, fan_out, act in self.specs:
            names.append((name + ".W", (fan_in, fan_out), act))
            names.append((name + ".b", (fan_out,), act))
        lines = [_MAGIC, f"seed {self.seed}", f"tensors {len(names)}"]
        for pname, shape, act in names:
            shape_txt = " ".join(str(s) for s in shape)
            lines.append(f"tensor {pname} shape {shape_txt} act {act}")
        lines.append("values")
        for pname, _, _ in names:
            vals = self.params[pname].ravel()
            lines.append(" ".join(format(x, ".17g") for x in vals))
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ValueNetwork":
        with open(path, "r", encoding="utf-8") as f:
            raw = f.read().splitlines()
        if not raw or raw[0] != _MAGIC:
            raise FormatError(f"{path}: line 1: expected header '{_MAGIC}'")
        try:
            seed = int(raw[1].split()[1])
            n_tensors = int(raw[2].split()[1])
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: lines 2-3: malformed seed/tensor count") from exc
        header_rows = []
        for lineno in range(3, 3 + n_tensors):
            if lineno >= len(raw):
                raise FormatError(f"{path}: line {lineno + 1}: truncated header")
            parts = raw[lineno].split()
            if len(parts) < 6 or parts[0] != "tensor" or "shape" not in parts or "act" not in parts:
                raise FormatError(f"{path}: line {lineno + 1}: malformed tensor header")
            name = parts[1]
            si = parts.index("shape")
            ai = parts.index("act")
            try:
                shape = tuple(int(s) for s in parts[si + 1 : ai])
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno + 1}: bad shape") from exc
            header_rows.append((name, shape, parts[ai + 1], lineno + 1))
        marker = 3 + n_tensors
        if marker >= len(raw) or raw[marker] != "values":
            raise FormatError(f"{path}: line {marker + 1}: expected 'values' marker")

        config = _config_from_header(header_rows, path)
        net = cls.__new__(cls)
        net.config = config
        net.seed = seed
        net.specs = _layer_specs(config)
        net.params = {}
        for k, (name, shape, _, _) in enumerate(header_rows):
            lineno = marker + 1 + k
            if lineno >= len(raw):
                raise FormatError(f"{path}: line {lineno + 1}: missing values for {name}")
            try:
                vals = np.array([float(t) for t in raw[lineno].split()])
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno + 1}: non-numeric value") from exc
            expected = int(np.prod(shape)) if shape else 1
            if vals.size != expected:
                raise FormatError(
                    f"{path}: line {lineno + 1}: {name} expects {expected} values, got {vals.size}"
                )
            if not np.all(np.isfinite(vals)):
                raise FormatError(f"{path}: line {lineno + 1}: non-finite value in {name}")
            net.params[name] = vals.reshape(shape)
        expected_names = {n + s for n, _, _, _ in net.specs for s in (".W", ".b")}
        got_names = set(net.params)
        if expected_names != got_names:
            raise FormatError(f"{path}: tensor names do not form a valid network")
        for name, fan_in, fan_out, _ in net.specs:
            if net.params[name + ".W"].shape != (fan_in, fan_out):
                raise FormatError(
                    f"{path}: tensor {name}.W has shape "
                    f"{net.params[name + '.W'].shape}, expected ({fan_in}, {fan_out})"
                )
        return net


def _config_from_header(rows, path) -> ValueNetConfig:
    """Reconstruct the architecture from tensor shapes in the header."""
    dims: dict[str, list[int]] = {"embed": [], "att": [], "value": []}
    feature_dim = None
    for name, shape, _, lineno in rows:
        if not name.endswith(".W"):
            continue
        group, idx = name[:-2].rsplit(".", 1)
        if group == "feat":
            feature_dim = shape[1]
        elif group in dims:
            dims[group].append((int(idx), shape[1]))
        else:
            raise FormatError(f"{path}: line {lineno}: unknown tensor group '{group}'")
    if feature_dim is None or not dims["embed"] or not dims["att"] or not dims["value"]:
        raise FormatError(f"{path}: header does not describe a complete network")
    embed = tuple(d for _, d in sorted(dims["embed"]))
    att = tuple(d for _, d in sorted(dims["att"]))[:-1]
    value = tuple(d for _, d in sorted(dims["value"]))[:-1]
    return ValueNetConfig(
        embed_dims=embed, attention_dims=att, feature_dim=feature_dim, value_dims=value
    )


def sync_target(live: ValueNetwork) -> ValueNetwork:
    """Deep, independent copy of the live network for TD targets."""
    return live.copy()


class MomentumSGD:
    """SGD with classical momentum; velocity buffers persist across steps."""

    def __init__(self, lr: float, momentum: float = 0.9):
        if lr <= 0:
            raise ConfigError("learning rate must be > 0")
        self.lr = lr
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, net: ValueNetwork, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(g)
            v = self.momentum * v + g
            self.velocity[name] = v
            net.params[name] -= self.lr * v


def accumulate_grads(total: dict[str, np.ndarray], part: dict[str, np.ndarray], weight: float) -> None:
    for k, g in part.items():
        total[k] += weight * g
