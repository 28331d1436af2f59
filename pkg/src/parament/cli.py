"""Command-line entry point.

Exit codes: 0 success, 2 completed with flagged (non-converged or failed)
points, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .experiments import (
    KINDS,
    OUT_ENV,
    ConfigError,
    OutputConfig,
    load_config,
    preset_names,
    run,
)

log = logging.getLogger("parament")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON file or preset name")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    common.add_argument("--workers", type=int, help="parallel point evaluations")
    common.add_argument("--seed", type=int, help="seed for Monte-Carlo checks")
    common.add_argument("--format", choices=("csv", "json"), help="table format")
    common.add_argument("--plot", action="store_true", help="also write SVG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="parament", description="Modulated-coupling entanglement experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=f"run a {kind} experiment from --config")
    pre = sub.add_parser("preset", parents=[common], help="run a built-in preset")
    pre.add_argument("name", nargs="?", help="preset name; omit to list them")
    return ap


def _apply_overrides(cfg, args):
    out = cfg.outputs
    directory = args.out or os.environ.get(OUT_ENV) or out.directory
    formats = (args.format,) if args.format else out.formats
    plot = out.plot or args.plot
    changes = {"outputs": OutputConfig(directory, formats, plot)}
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        changes["workers"] = args.workers
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    return cfg.with_overrides(**changes)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "preset":
            if not args.name:
                print("\n".join(preset_names()))
                return 0
            cfg = load_config(args.name)
        else:
            if not args.config:
                raise ConfigError("--config", "required for this subcommand")
            cfg = load_config(args.config)
            if cfg.kind != args.command:
                raise ConfigError("kind", f"config is a {cfg.kind!r} experiment, not {args.command!r}")
        cfg = _apply_overrides(cfg, args)
        log.info("running %s (%s) into %s", cfg.name, cfg.kind, cfg.outputs.directory)
        report = run(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for f in report.files:
        print(f)
    if report.kind != "compare":
        print(json.dumps(_plain(report.summary), sort_keys=True), file=sys.stderr)
    if report.partial:
        print("warning: some points were flagged, see the status column", file=sys.stderr)
    return report.exit_code


def _plain(x):
    from .experiments import _jsonable

    return _jsonable(x)


if __name__ == "__main__":
    sys.exit(main())
