"""Command line entry point: ``cpbid <stage> --out DIR [--config FILE] [--seed N] [--json]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, dump_config, parse_config, validate_config
from .pipeline import STAGES, StageError, Workspace, run_all, run_stage, write_config

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpbid", description="Conformal PV forecasting and day-ahead bidding.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="global seed (0 <= seed < 2**64), overrides the config")
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    for name in STAGES + ("run",):
        sp = sub.add_parser(name, parents=[common], help="all stages" if name == "run" else f"{name} stage")
        sp.add_argument("--out", type=Path, help="output directory (overrides the config)")
    vp = sub.add_parser("validate", parents=[common], help="print the normalized configuration")
    vp.add_argument("--out", type=Path, help=argparse.SUPPRESS)
    return p


def resolve_config(args) -> RunConfig:
    """Config from ``--config``, else the one stored in the output dir, else defaults."""
    if args.config is not None:
        cfg = validate_config(args.config)
    elif args.command not in ("run", "validate") and args.out and (args.out / "config.yaml").exists():
        cfg = validate_config(args.out / "config.yaml")
    else:
        cfg = parse_config({})
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = str(args.out)
    if updates:
        cfg = parse_config({**cfg.to_dict(), **updates})
    return cfg


def _emit(args, payload: dict) -> None:
    if args.json:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=str)
        sys.stdout.write("\n")
    else:
        for key, val in payload.items():
            print(f"{key}: {val}")


def _stage_cmd(args, cfg: RunConfig) -> dict:
    ws = Workspace(cfg.out)
    stored = ws.root / "config.yaml"
    if stored.exists():
        if stored.read_text() != dump_config(cfg):
            raise ConfigError(f"{stored} differs from the requested config; use a fresh --out")
    else:
        write_config(cfg, ws)
    return {args.command: run_stage(args.command, cfg, ws)}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "validate":
        if args.json:
            _emit(args, cfg.to_dict())
        else:
            sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if cfg.out is None:
        print("error: no output directory; pass --out or set 'out' in the config", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            result = run_all(cfg, cfg.out)
        else:
            result = _stage_cmd(args, cfg)
    except (ConfigError, StageError) as err:
        status = EXIT_USAGE if isinstance(err, ConfigError) else EXIT_FAILED
        _emit(args, {"status": "error", "error": str(err), "out": cfg.out})
        print(f"error: {err}", file=sys.stderr)
        return status
    except Exception as err:  # a stage crashed; the marker already records it
        _emit(args, {"status": "failed", "error": f"{type(err).__name__}: {err}", "out": cfg.out,
                     "stages": Workspace(cfg.out).status()})
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FAILED
    _emit(args, {"status": "ok", "out": cfg.out, "stages": result})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
