"""Command-line interface.

Commands: train, evaluate, compare, demo-gen, render. Exit codes: 0 on
success, 2 for configuration errors, 3 for I/O errors, 4 for file-format
and contract errors. CROWDNAV_OUTPUT_DIR sets the default output
directory.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    CurriculumConfig,
    Method,
    RunConfig,
    config_to_dict,
    load_config,
    method_settings,
    save_resolved,
)
from .env import EnvConfig
from .errors import ConfigError, ContractViolationError, CrowdNavError, FormatError, ScenarioGenerationError
from .evaluation import MethodRow, capture_trajectory, evaluate, format_report_table
from .network import ValueNetwork
from .trajectories import read_curve, write_curve, write_trajectory
from .training import (
    InitPolicy,
    TrainConfig,
    TrainResult,
    curriculum_train,
    generate_demonstrations,
    il_pretrain,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONTRACT = 4


def _default_output_dir() -> str:
    return os.environ.get("CROWDNAV_OUTPUT_DIR", "runs")


def _add_section_flags(parser: argparse.ArgumentParser) -> None:
    """One flag per config field, e.g. --env.n-humans, --train.episodes."""
    for section, cls in (("env", EnvConfig), ("train", TrainConfig), ("curriculum", CurriculumConfig)):
        for f in dataclasses.fields(cls):
            flag = f"--{section}.{f.name.replace('_', '-')}"
            parser.add_argument(flag, dest=f"{section}.{f.name}", metavar="V", default=None)


def _collect_overrides(ns: argparse.Namespace) -> dict[str, object]:
    overrides: dict[str, object] = {}
    for key, value in vars(ns).items():
        if "." in key and value is not None:
            overrides[key] = value
    if ns.set:
        for item in ns.set:
            if "=" not in item:
                raise ConfigError(f"--set expects key.path=value, got '{item}'")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value.strip()
    if getattr(ns, "seed", None) is not None:
        overrides["seed"] = ns.seed
    if getattr(ns, "method", None) is not None:
        overrides["method"] = ns.method
    if getattr(ns, "output_dir", None) is not None:
        overrides["output_dir"] = ns.output_dir
    return overrides


def run_training(run: RunConfig, out_dir: Path) -> TrainResult:
    """Dispatch one training run per the method preset and write all
    artifacts: resolved config, curve logs, checkpoints, final weights."""
    run = run.resolved()
    out_dir.mkdir(parents=True, exist_ok=True)
    save_resolved(run, out_dir / "config_resolved.yaml")
    settings = method_settings(run.method)

    def checkpoint_hook(episode: int, net: ValueNetwork) -> None:
        net.save(out_dir / f"weights_ep{episode:06d}.txt")

    if settings.curriculum:
        stage1_episodes = run.curriculum.stage1_episodes or run.train.episodes
        cfg1 = dataclasses.replace(run.train, episodes=stage1_episodes)
        env1 = dataclasses.replace(run.env, n_humans=run.curriculum.stage1_n_humans)
        stage1, result = curriculum_train(
            cfg1, env1, run.train, run.env,
            her=settings.her, seed=run.seed, checkpoint_hook=checkpoint_hook,
        )
        write_curve(out_dir / "curve_stage1.csv", stage1.curve)
    else:
        demos = None
        initial_net = None
        if settings.il:
            demos = generate_demonstrations(run.env, run.train.init_episodes, run.seed)
            initial_net = ValueNetwork(
                seed=int(np.random.SeedSequence((run.seed, 0, 0)).generate_state(1)[0])
            )
            il_pretrain(initial_net, demos, run.train, run.env, seed=run.seed)
        result = train(
            run.train, run.env,
            her=settings.her, seed=run.seed,
            initial_net=initial_net, demos=demos,
            checkpoint_hook=checkpoint_hook,
        )
    write_curve(out_dir / "curve.csv", result.curve)
    result.net.save(out_dir / "weights_final.txt")
    return result


def cmd_train(ns: argparse.Namespace) -> int:
    run = load_config(ns.config, _collect_overrides(ns))
    out_dir = Path(run.output_dir)
    result = run_training(run, out_dir)
    rates = result.validation_success_rates()
    if rates:
        last = max(rates)
        print(f"final validation success rate: {rates[last]:.3f} (episode {last + 1})")
    print(f"artifacts written to {out_dir}")
    return EXIT_OK


def _report_paths(out_dir: Path, stem: str) -> tuple[Path, Path]:
    return out_dir / f"{stem}.json", out_dir / f"{stem}.tsv"


def cmd_evaluate(ns: argparse.Namespace) -> int:
    run = load_config(ns.config, _collect_overrides(ns)).resolved()
    net = ValueNetwork.load(ns.checkpoint)
    report = evaluate(net, run.env, ns.episodes, ns.seed_base)
    out_dir = Path(run.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path, tsv_path = _report_paths(out_dir, "eval_report")
    json_path.write_text(json.dumps(report.row(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    row = MethodRow(label=run.method.value, demo=run.train.init_policy is InitPolicy.DEMONSTRATION,
                    report=report)
    tsv_path.write_text(format_report_table([row]), encoding="utf-8")
    time_txt = "--" if math.isnan(report.mean_nav_time) else f"{report.mean_nav_time:.2f}"
    print(
        f"success {report.success_rate:.3f} collision {report.collision_rate:.3f} "
        f"danger {report.danger_freq:.2f} time {time_txt} "
        f"reward {report.mean_discounted_reward:.4f} over {report.episodes} episodes"
    )
    if ns.trajectory_seed is not None:
        rec, summary = capture_trajectory(net, run.env, ns.trajectory_seed)
        traj_path = out_dir / "trajectory.jsonl"
        write_trajectory(traj_path, rec)
        print(f"trajectory ({summary['outcome']}, {summary['path_length']:.2f} m) -> {traj_path}")
    return EXIT_OK


def cmd_compare(ns: argparse.Namespace) -> int:
    import yaml

    try:
        data = yaml.safe_load(Path(ns.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FileNotFoundError(str(exc)) from exc
    if not isinstance(data, dict) or "rows" not in data:
        raise ConfigError(f"{ns.config}: compare config needs a 'rows' list")
    from .config import config_from_dict

    env_cfg = config_from_dict({"env": data.get("env", {})}).env
    episodes = int(data.get("episodes", 500))
    seed_base = int(data.get("seed_base", 0))

    rows: list[MethodRow] = []
    for i, spec in enumerate(data["rows"]):
        label = spec.get("label", f"row{i}")
        demo = bool(spec.get("demo", False))
        try:
            if "checkpoint" in spec:
                net = ValueNetwork.load(spec["checkpoint"])
            elif "config" in spec:
                run = load_config(spec["config"])
                net = run_training(run, Path(run.output_dir)).net
            else:
                raise ConfigError(f"row '{label}': needs 'checkpoint' or 'config'")
            report = evaluate(net, env_cfg, episodes, seed_base)
            rows.append(MethodRow(label=label, demo=demo, report=report))
        except (CrowdNavError, OSError) as exc:
            rows.append(MethodRow(label=label, demo=demo, error=f"{type(exc).__name__}: {exc}"))

    out_dir = Path(ns.output_dir or _default_output_dir())
    out_dir.mkdir(parents=True, exist_ok=True)
    table = format_report_table(rows)
    (out_dir / "compare.tsv").write_text(table, encoding="utf-8")
    (out_dir / "compare.json").write_text(
        json.dumps(
            [
                {"label": r.label, "demo": r.demo,
                 "report": None if r.report is None else r.report.row(),
                 "error": r.error}
                for r in rows
            ],
            indent=2, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    print(table, end="")
    return EXIT_OK


def cmd_demo_gen(ns: argparse.Namespace) -> int:
    run = load_config(ns.config, _collect_overrides(ns)).resolved()
    records = generate_demonstrations(run.env, ns.episodes, run.seed)
    out_path = Path(ns.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_trajectory(out_path, records)
    n_success = sum(r.outcome.value == "reach_goal" for r in records)
    print(f"{len(records)} demonstration episodes ({n_success} successes) -> {out_path}")
    return EXIT_OK


def cmd_render(ns: argparse.Namespace) -> int:
    from .render import render_file

    out = ns.output or str(Path(ns.input).with_suffix(".svg"))
    render_file(ns.input, out)
    print(f"rendered {ns.input} -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdnav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", "-c", required=True, help="YAML run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--method", choices=[m.value for m in Method], default=None)
        p.add_argument("--output-dir", default=None)
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override any config field", default=[])
        _add_section_flags(p)

    p_train = sub.add_parser("train", help="train an agent per the configured method")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on seeded episodes")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=500)
    p_eval.add_argument("--seed-base", type=int, default=0)
    p_eval.add_argument("--trajectory-seed", type=int, default=None,
                        help="also export one trajectory for this scenario seed")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="evaluate several methods on one seed set")
    p_cmp.add_argument("--config", "-c", required=True, help="compare suite YAML")
    p_cmp.add_argument("--output-dir", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_demo = sub.add_parser("demo-gen", help="generate expert demonstration episodes")
    common(p_demo)
    p_demo.add_argument("--episodes", type=int, default=3000)
    p_demo.add_argument("--output", "-o", required=True)
    p_demo.set_defaults(func=cmd_demo_gen)

    p_render = sub.add_parser("render", help="render a trajectory or curve log to SVG")
    p_render.add_argument("input")
    p_render.add_argument("--output", "-o", default=None)
    p_render.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IsADirectoryError, PermissionError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FormatError, ContractViolationError, ScenarioGenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
