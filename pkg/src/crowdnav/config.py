"""Run configuration: structured YAML files, dotted-path overrides, method
presets, and resolved-config snapshots.

A snapshot written by `save_resolved` contains every decided default and
reproduces the run bit-exactly when fed back in.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import get_type_hints

import yaml

from .env import EnvConfig, RewardMode
from .errors import ConfigError
from .training import InitPolicy, TrainConfig


class Method(enum.Enum):
    RL = "RL"
    RL_IL = "RL_IL"
    RL_HER = "RL_HER"
    RL_RS = "RL_RS"
    RL_HER_CL = "RL_HER_CL"


@dataclass(frozen=True)
class MethodSettings:
    reward_mode: RewardMode
    her: bool
    il: bool
    curriculum: bool


_METHOD_SETTINGS = {
    Method.RL: MethodSettings(RewardMode.SPARSE, her=False, il=False, curriculum=False),
    Method.RL_IL: MethodSettings(RewardMode.SPARSE, her=False, il=True, curriculum=False),
    Method.RL_HER: MethodSettings(RewardMode.SPARSE, her=True, il=False, curriculum=False),
    Method.RL_RS: MethodSettings(RewardMode.SHAPED, her=False, il=False, curriculum=False),
    Method.RL_HER_CL: MethodSettings(RewardMode.SPARSE, her=True, il=False, curriculum=True),
}


def method_settings(method: Method) -> MethodSettings:
    return _METHOD_SETTINGS[method]


@dataclass(frozen=True)
class CurriculumConfig:
    """Stage-1 shape for two-stage training; stage 2 uses the main env and
    train sections. stage1_episodes of 0 means "same as train.episodes"."""

    stage1_n_humans: int = 1
    stage1_episodes: int = 0


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    method: Method = Method.RL_HER_CL
    seed: int = 0
    output_dir: str = "runs/out"

    def resolved(self) -> "RunConfig":
        """Force the method-determined settings into the sub-configs."""
        settings = method_settings(self.method)
        env = dataclasses.replace(self.env, reward_mode=settings.reward_mode)
        train = self.train
        if settings.il and train.init_policy is not InitPolicy.DEMONSTRATION:
            train = dataclasses.replace(train, init_policy=InitPolicy.DEMONSTRATION)
        return dataclasses.replace(self, env=env, train=train)


_ENUM_FIELDS = (RewardMode, InitPolicy, Method)


def _coerce(value, typ, keypath: str):
    if isinstance(typ, type) and issubclass(typ, enum.Enum):
        if isinstance(value, typ):
            return value
        try:
            return typ(value) if not isinstance(value, str) else _enum_from_str(typ, value)
        except (KeyError, ValueError) as exc:
            valid = ", ".join(e.value for e in typ)
            raise ConfigError(f"{keypath}: '{value}' is not one of [{valid}]") from exc
    if typ is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            low = value.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
        raise ConfigError(f"{keypath}: expected a boolean, got '{value}'")
    if typ is int:
        if isinstance(value, bool):
            raise ConfigError(f"{keypath}: expected an integer, got a boolean")
        try:
            as_float = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{keypath}: expected an integer, got '{value}'") from exc
        if as_float != int(as_float):
            raise ConfigError(f"{keypath}: expected an integer, got '{value}'")
        return int(as_float)
    if typ is float:
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{keypath}: expected a number, got '{value}'") from exc
    if typ is str:
        return str(value)
    raise ConfigError(f"{keypath}: unsupported field type {typ}")


def _enum_from_str(typ, value: str):
    for member in typ:
        if value == member.value or value == member.name:
            return member
    raise ValueError(value)


def _build_dataclass(cls, data: dict, prefix: str):
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config field '{prefix}{key}'")
        kwargs[key] = _coerce(value, hints[key], prefix + key)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{prefix.rstrip('.')}': {exc}") from exc


_SECTIONS = {"env": EnvConfig, "train": TrainConfig, "curriculum": CurriculumConfig}
_SCALARS = {"method": Method, "seed": int, "output_dir": str}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section '{key}' must be a mapping")
            kwargs[key] = _build_dataclass(_SECTIONS[key], value, key + ".")
        elif key in _SCALARS:
            kwargs[key] = _coerce(value, _SCALARS[key], key)
        else:
            raise ConfigError(f"unknown config field '{key}'")
    return RunConfig(**kwargs)


def apply_overrides(data: dict, overrides: dict[str, object]) -> dict:
    """Apply dotted-path overrides ('env.n_humans': 3) onto the raw dict."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for path, value in overrides.items():
        parts = path.split(".")
        if len(parts) == 1:
            out[parts[0]] = value
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            out.setdefault(parts[0], {})
            if not isinstance(out[parts[0]], dict):
                raise ConfigError(f"section '{parts[0]}' must be a mapping")
            out[parts[0]][parts[1]] = value
        else:
            raise ConfigError(f"unknown override path '{path}'")
    return out


def load_config(path, overrides: dict[str, object] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def config_to_dict(run: RunConfig) -> dict:
    def section(obj):
        out = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else v
        return out

    return {
        "method": run.method.value,
        "seed": run.seed,
        "output_dir": run.output_dir,
        "env": section(run.env),
        "train": section(run.train),
        "curriculum": section(run.curriculum),
    }


def save_resolved(run: RunConfig, path) -> None:
    """Write the fully resolved config (all defaults explicit) so the file
    alone reproduces the run."""
    data = config_to_dict(run.resolved())
    Path(path).write_text(
        yaml.safe_dump(data, sort_keys=True, default_flow_style=False), encoding="utf-8"
    )
