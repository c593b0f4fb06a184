"""``duelbench`` command line: run, sweep, plot, validate.

Exit codes: 0 success, 2 configuration/validation error, 3 runtime or I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import plotting
from .policies import POLICIES
from .simulator import (
    DEFAULT_CHECKPOINTS,
    ExperimentConfig,
    PolicySpec,
    run_experiment,
    write_instances,
    write_results_csv,
    write_summary_json,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("duelbench")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

RESOLVED_CONFIG = "config.resolved.toml"

CONFIG_KEYS = {"seed", "arms", "horizon", "games", "iterations", "policies",
               "min_gap", "checkpoints", "out", "policy"}


class ConfigError(ValueError):
    pass


@dataclass
class CliConfig:
    arms: list[int]
    horizon: int
    games: int = 1
    iterations: int = 1
    policies: list[str] = field(default_factory=lambda: ["sup-klucb"])
    policy_params: dict[str, dict] = field(default_factory=dict)
    seed: int = 0
    min_gap: float = 0.0
    checkpoints: int = DEFAULT_CHECKPOINTS
    out: str = "results"

    def experiment(self, k: int) -> ExperimentConfig:
        return ExperimentConfig(
            arms=k,
            horizon=self.horizon,
            games=self.games,
            iterations=self.iterations,
            policies=[PolicySpec(p, dict(self.policy_params.get(p, {}))) for p in self.policies],
            seed=self.seed,
            min_gap=self.min_gap,
            checkpoints=self.checkpoints,
        )

    def validate(self) -> None:
        if not self.arms:
            raise ConfigError("arms list is empty")
        unknown = [p for p in self.policies if p not in POLICIES]
        if unknown:
            raise ConfigError(f"unknown policies {unknown}; choose from {sorted(POLICIES)}")
        stray = set(self.policy_params) - set(self.policies)
        if stray:
            raise ConfigError(f"parameters given for unselected policies {sorted(stray)}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for k in self.arms:
            try:
                self.experiment(k).validate()
            except ValueError as exc:
                raise ConfigError(f"K={k}: {exc}") from exc


def _parse_arms(value) -> list[int]:
    if isinstance(value, bool):
        raise ConfigError(f"invalid arms value {value!r}")
    if isinstance(value, int):
        return [value]
    if isinstance(value, str):
        try:
            return [int(x) for x in value.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"invalid arms value {value!r}") from exc
    if isinstance(value, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        return list(value)
    raise ConfigError(f"invalid arms value {value!r}")


def _parse_policies(value) -> list[str]:
    if isinstance(value, str):
        return [p.strip() for p in value.split(",") if p.strip()]
    if isinstance(value, list) and all(isinstance(p, str) for p in value):
        return list(value)
    raise ConfigError(f"invalid policies value {value!r}")


def _typed(raw: dict, key: str, kind, default):
    if key not in raw:
        return default
    value = raw[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError(f"{key} must be of type {kind.__name__}, got {value!r}")
    return value


def config_from_mapping(raw: dict) -> CliConfig:
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if "arms" not in raw or "horizon" not in raw:
        raise ConfigError("config needs at least 'arms' and 'horizon'")
    params = raw.get("policy", {})
    if not isinstance(params, dict) or not all(isinstance(v, dict) for v in params.values()):
        raise ConfigError("[policy.<name>] sections must be tables of parameters")
    return CliConfig(
        arms=_parse_arms(raw["arms"]),
        horizon=_typed(raw, "horizon", int, None),
        games=_typed(raw, "games", int, 1),
        iterations=_typed(raw, "iterations", int, 1),
        policies=_parse_policies(raw.get("policies", ["sup-klucb"])),
        policy_params={k: dict(v) for k, v in params.items()},
        seed=_typed(raw, "seed", int, 0),
        min_gap=_typed(raw, "min_gap", float, 0.0),
        checkpoints=_typed(raw, "checkpoints", int, DEFAULT_CHECKPOINTS),
        out=_typed(raw, "out", str, "results"),
    )


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def resolve_config(args: argparse.Namespace) -> CliConfig:
    raw = load_config(args.config)
    overrides = {
        "seed": args.seed,
        "horizon": args.horizon,
        "arms": args.arms,
        "games": args.games,
        "iterations": args.iterations,
        "policies": args.policies,
        "out": args.out,
        "checkpoints": args.checkpoints,
        "min_gap": args.min_gap,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = config_from_mapping(raw)
    cfg.validate()
    return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {v!r} to TOML")


def dump_config(cfg: CliConfig) -> str:
    lines = [
        f"seed = {_toml_value(cfg.seed)}",
        f"arms = {_toml_value(cfg.arms)}",
        f"horizon = {_toml_value(cfg.horizon)}",
        f"games = {_toml_value(cfg.games)}",
        f"iterations = {_toml_value(cfg.iterations)}",
        f"policies = {_toml_value(cfg.policies)}",
        f"min_gap = {_toml_value(float(cfg.min_gap))}",
        f"checkpoints = {_toml_value(cfg.checkpoints)}",
        f"out = {_toml_value(cfg.out)}",
    ]
    for name in cfg.policies:
        params = cfg.policy_params.get(name)
        if params:
            lines.append("")
            lines.append(f'[policy."{name}"]')
            lines.extend(f"{k} = {_toml_value(v)}" for k, v in sorted(params.items()))
    return "\n".join(lines) + "\n"


def _run_one(cfg: CliConfig, k: int, out: Path, serial: bool, plot: bool) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(cfg.experiment(k), serial=serial)
    summary = result.summary()
    write_results_csv(result.runs, out / "results.csv")
    write_summary_json(summary, out / "summary.json")
    write_instances(result.instances, out / "instances")
    if plot:
        plotting.render_summary(summary, out / "regret.svg")
    for name, stats in summary.items():
        log.info("K=%d %-10s final mean regret %.1f  winner accuracy %.2f",
                 k, name, stats["mean"][-1], stats["final_winner_accuracy"])
    return summary


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if len(cfg.arms) != 1:
        raise ConfigError("run takes a single arm count; use sweep for a list")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(dump_config(cfg))
    _run_one(cfg, cfg.arms[0], out, args.serial, not args.no_plot)
    return EXIT_OK


def sweep_summary(per_k: dict[int, dict]) -> dict:
    entries = []
    for k, summary in per_k.items():
        for name, stats in summary.items():
            entries.append({
                "policy": name,
                "arms": k,
                "mean": stats["mean"][-1],
                "p25": stats["p25"][-1],
                "p75": stats["p75"][-1],
                "final_winner_accuracy": stats["final_winner_accuracy"],
            })
    return {"kind": "sweep", "arms": list(per_k), "final_regret": entries}


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(dump_config(cfg))
    per_k = {}
    for k in cfg.arms:
        per_k[k] = _run_one(cfg, k, out / f"k{k}", args.serial, not args.no_plot)
    summary = sweep_summary(per_k)
    write_summary_json(summary, out / "summary.json")
    if not args.no_plot:
        plotting.render_summary(summary, out / "regret_vs_arms.svg")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    summary = plotting.load_summary(args.summary)
    plotting.render_summary(summary, args.output)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--horizon", type=int, help="rounds per run")
    p.add_argument("--arms", help="arm count, or comma-separated list for sweep")
    p.add_argument("--games", type=int, help="random instances")
    p.add_argument("--iterations", type=int, help="repeats per instance")
    p.add_argument("--policies", help="comma-separated policy names")
    p.add_argument("--out", help="output directory")
    p.add_argument("--checkpoints", type=int, help="log-spaced checkpoint count")
    p.add_argument("--min-gap", type=float, dest="min_gap",
                   help="minimum top-two Copeland score gap of generated instances")
    p.add_argument("--serial", action="store_true", help="run in-process, no workers")
    p.add_argument("--no-plot", action="store_true", dest="no_plot", help="skip figure output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="duelbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one experiment per arm count")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render a summary JSON file")
    p.add_argument("summary")
    p.add_argument("output")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("validate", help="check a config and print it resolved")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, plotting.MalformedSummary) as exc:
        print(f"duelbench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError) as exc:
        print(f"duelbench: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
