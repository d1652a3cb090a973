"""Command-line entry point: ``delphi run|cubegame|verify``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import DelphiError, InvalidConfig
from .experiment import ExperimentConfig, apply_override, run_experiment, verify_run

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delphi", description="Expert-guided linear RL experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "cubegame"):
        p = sub.add_parser(name, help=f"{name} experiment from a JSON config")
        p.add_argument("config", help="path to the JSON config")
        p.add_argument("--seed", type=int, action="append", help="run only this seed (repeatable)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--workers", type=int, default=1, help="parallel seed workers")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a config field; dotted keys reach nested objects")
    v = sub.add_parser("verify", help="re-check a finished run directory with exact computations")
    v.add_argument("run_dir")
    return ap


def _prepare(args) -> tuple[ExperimentConfig, Path]:
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidConfig("config must be a JSON object")
    for item in args.override:
        apply_override(doc, item)
    if args.seed:
        doc["seeds"] = list(args.seed)
        doc["repeat"] = None
    if args.command == "cubegame":
        doc["mode"] = "cubegame"
    elif doc.get("mode") == "cubegame":
        raise InvalidConfig("use 'delphi cubegame' for cubegame configs")
    if args.out:
        doc["out"] = args.out
    cfg = ExperimentConfig.from_dict(doc)
    if not cfg.out:
        raise InvalidConfig("no output directory: set 'out' in the config or pass --out")
    return cfg, Path(cfg.out)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "verify":
        try:
            checks = verify_run(args.run_dir)
        except (DelphiError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for seed, name, ok, detail in checks:
            print(f"seed {seed:>5}  {name:<20} {'PASS' if ok else 'FAIL'}  {detail}")
        return EXIT_OK if all(c[2] for c in checks) else EXIT_FAILURES
    try:
        cfg, out = _prepare(args)
    except (DelphiError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    agg = run_experiment(cfg, out, workers=args.workers)
    print(json.dumps(agg, indent=2, sort_keys=True))
    return EXIT_OK if agg["failed"] == 0 else EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
