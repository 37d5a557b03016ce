"""Command-line entry point: ``hsgas <subcommand> [--config PATH] [--set k=v ...] [--workers N] [--out DIR]``.

Without ``--config`` each subcommand runs its desk-scale acceptance
configuration.  The exit code is 0 iff every criterion in the report passes.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .acceptance import CONFIGS, SUBCOMMANDS, default_config
from .errors import ConfigInvalid, HsgasError
from .harness import ExperimentConfig, apply_overrides, run_experiment

SUBCOMMAND_DEFAULTS = {
    "kac": {"params": {"stationarity": False, "md": False}},
    "simulate": {},
}


def _merge(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def build_config(command: str, config_path: str | None, overrides) -> ExperimentConfig:
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {config_path}: {exc}") from exc
    else:
        data = _merge(default_config(SUBCOMMANDS[command]), SUBCOMMAND_DEFAULTS.get(command, {}))
    return ExperimentConfig.from_dict(apply_overrides(data, overrides or []))


def _print(report) -> None:
    for line in report.lines():
        print(line)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hsgas", description="Hard-sphere gas experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*SUBCOMMANDS, "report"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, value parsed as JSON")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
        sp.add_argument("--out", help="output directory")
        if name == "report":
            sp.add_argument("--kinds", nargs="*", default=None,
                            help="with no --config/--out source: acceptance kinds to run (default all)")
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return _report(args)
        cfg = build_config(args.command, args.config, args.set)
        report = run_experiment(cfg, workers=args.workers, out=args.out)
    except HsgasError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _print(report)
    return 0 if report.passed else 1


def _report(args) -> int:
    """Re-run from a stored output directory (records are reloaded) or run the acceptance suite."""
    if args.config or (args.out and (Path(args.out) / "config.json").exists() and not args.kinds):
        path = args.config or str(Path(args.out) / "config.json")
        cfg = build_config("report", path, args.set)
        report = run_experiment(cfg, workers=args.workers, out=args.out)
        _print(report)
        return 0 if report.passed else 1
    ok = True
    for kind in args.kinds or list(CONFIGS):
        cfg = ExperimentConfig.from_dict(apply_overrides(default_config(kind), args.set))
        out = str(Path(args.out) / kind) if args.out else None
        report = run_experiment(cfg, workers=args.workers, out=out)
        _print(report)
        ok &= report.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
