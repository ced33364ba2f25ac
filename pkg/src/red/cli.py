"""Command line entry point: ``red fit|score|train|experiment|report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from red.config import RunConfig, load_config
from red.errors import ConfigError, RedError

log = logging.getLogger("red")


def _setup_logging() -> None:
    level = os.environ.get("RED_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="red", description="Imitation learning by expert support estimation.")
    p.add_argument("command", choices=["fit", "score", "train", "experiment", "report"])
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, help="master seed (overrides config 'seed')")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    p.add_argument("--smooth", type=int, default=1,
                   help="report only: moving-average window over evaluation points (1 = raw)")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.out:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes).validate() if changes else cfg


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": {"kind": kind, "message": message}}), file=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            from red.report import cmd_report

            run_dir = args.out or (load_config(args.config).out if args.config else None)
            if not run_dir:
                raise ConfigError("report needs --out <run dir> or a config")
            lines, written = cmd_report(run_dir, args.smooth)
            print("\n".join(lines))
            for path in written:
                print(f"wrote {path}")
            return 0

        from red import harness

        if not args.config and args.command != "train":
            raise ConfigError(f"`red {args.command}` needs --config")
        cfg = _config(args)
        if args.command == "fit":
            stats = harness.cmd_fit(cfg)
            print(json.dumps({"out": cfg.out, "sigma1": stats["sigma1"], **stats["quantiles"]}))
        elif args.command == "score":
            print(harness.cmd_score(cfg))
        elif args.command == "train":
            record = harness.cmd_train(cfg)
            print(json.dumps({"out": cfg.out, "final": record["final"]}))
        else:
            if args.jobs < 1:
                raise ConfigError("--jobs must be >= 1")
            rows, ok = harness.cmd_experiment(cfg, jobs=args.jobs)
            print(json.dumps({"out": cfg.out, "cells": len(rows), "all_ok": ok}))
            return 0 if ok else 3
        return 0
    except RedError as exc:
        _emit_error(exc.kind, str(exc))
        return exc.exit_code
    except Exception as exc:  # anything unexpected is a runtime failure
        log.debug("unhandled error", exc_info=True)
        _emit_error("RuntimeFailure", repr(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
