"""Command-line pipeline driver.

Every subcommand takes `--config <json>` and `--out <dir>`; steps read the
artifacts earlier steps left in the output directory. Config precedence is
`--set` flags over the `XMIXUP_SEED` environment override over the file.

Exit codes: 0 success, 2 configuration error, 3 data/artifact error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericError
from .harness import (
    ExperimentConfig,
    config_from_json,
    step_ablate,
    step_eval,
    step_finetune,
    step_gen_data,
    step_pair,
    step_pretrain,
    step_randomize_aux,
    step_report,
    step_sweep_alpha,
    step_sweep_size,
)
from .training import StrategyKind


def _apply_set(raw: dict, assignment: str) -> None:
    key, eq, value = assignment.partition("=")
    if not eq or not key:
        raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part} is not an object")
    node[parts[-1]] = parsed


def _load_config(path: str, overrides: list[str]) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    env = os.environ.get("XMIXUP_SEED")
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"XMIXUP_SEED must be an integer, got {env!r}") from None
        raw.setdefault("data", {})["seed"] = seed
        raw.setdefault("pretrain", {})["seed"] = seed
        raw["seeds"] = [seed]
    for assignment in overrides:
        _apply_set(raw, assignment)
    return config_from_json(raw)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmixup",
        description="Cross-domain mixup transfer-learning pipeline on synthetic data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, jobs: bool = False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True, type=Path, help="artifact directory")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            dest="overrides",
            metavar="KEY=VALUE",
            help="override a (dotted) config key, e.g. data.noise=0.2",
        )
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel runs")
        return p

    add("gen-data", "generate and save the synthetic source/target datasets")
    add("pretrain", "train the source model from scratch")
    add("pair", "pair target classes to source classes via feature centroids")
    p = add("finetune", "run fine-tuning strategies across seeds", jobs=True)
    p.add_argument(
        "--strategy",
        action="append",
        dest="strategies",
        choices=[k.value for k in StrategyKind],
        help="restrict to one strategy (repeatable); default: all configured",
    )
    p = add("eval", "evaluate a saved checkpoint on the target test set")
    p.add_argument("--params", required=True, help="checkpoint file to evaluate")
    add("sweep-alpha", "accuracy across the mixing-strength grid", jobs=True)
    add("sweep-size", "accuracy across auxiliary-budget thresholds", jobs=True)
    add("randomize-aux", "compare centroid pairing against random pairing", jobs=True)
    add("ablate", "run the mixing ablations (cross-domain/in-domain/no-label)", jobs=True)
    add("report", "join run records into comparison CSVs and a chart")
    return parser


def _dispatch(args) -> None:
    cfg = _load_config(args.config, args.overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "gen-data":
        counts = step_gen_data(cfg, out)
        for name, count in counts.items():
            print(f"{name}: {count} samples")
    elif cmd == "pretrain":
        info = step_pretrain(cfg, out)
        print(f"source test accuracy {info['source_test_accuracy']:.4f}")
    elif cmd == "pair":
        info = step_pair(cfg, out)
        print(
            f"selected {len(info['selected_sources'])} source classes "
            f"in {info['rounds']} round(s) (threshold {info['threshold']})"
        )
    elif cmd == "finetune":
        kinds = (
            tuple(StrategyKind(s) for s in args.strategies)
            if args.strategies
            else None
        )
        for r in step_finetune(cfg, out, strategies=kinds, jobs=args.jobs):
            print(f"{r['strategy']} seed {r['seed']}: accuracy {r['accuracy']:.4f}")
    elif cmd == "eval":
        info = step_eval(cfg, out, args.params)
        print(f"accuracy {info['accuracy']:.4f}")
    elif cmd == "sweep-alpha":
        rows = step_sweep_alpha(cfg, out, jobs=args.jobs)
        print(f"wrote sweep_alpha.csv ({len(rows)} runs)")
    elif cmd == "sweep-size":
        rows = step_sweep_size(cfg, out, jobs=args.jobs)
        print(f"wrote sweep_size.csv ({len(rows)} runs)")
    elif cmd == "randomize-aux":
        rows = step_randomize_aux(cfg, out, jobs=args.jobs)
        print(f"wrote randomize_aux.csv ({len(rows)} runs)")
    elif cmd == "ablate":
        records = step_ablate(cfg, out, jobs=args.jobs)
        print(f"wrote ablate.csv ({len(records)} runs)")
    elif cmd == "report":
        for row in step_report(cfg, out):
            print(
                f"{row['strategy']}: {row['accuracy_mean']:.4f} "
                f"± {row['accuracy_std']:.4f} over {row['runs']} run(s)"
            )
    else:  # pragma: no cover - argparse rejects unknown subcommands
        raise ConfigError(f"unknown subcommand {cmd!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
