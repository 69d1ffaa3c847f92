#!/usr/bin/env python3
"""
FourNet command-line front end.

Subcommands:
    fit             sample the Fourier grid, train, write theta/history/diagnostics
    price           European price table from a trained theta.json
    bermudan        Bermudan put convergence table
    compare-cos     FourNet vs COS densities
    export-density  recovered density on a grid

Exit codes: 0 success (a missed loss threshold is only flagged in diagnostics),
2 invalid configuration or stale theta, 3 numeric failure.

Usage:
    fournet fit --config configs/tables/merton.yaml --out artifacts/merton --deterministic
    fournet price --config configs/tables/merton.yaml --theta artifacts/merton/theta.json
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import structlog
from pydantic import ValidationError

from app.common.config import get_settings
from app.common.logging import setup_logging
from app.fournet.errors import EXIT_CONFIG, EXIT_NUMERIC, ConfigError, FourNetError
from app.schemas.run import RunConfig

from . import commands
from .artifacts import load_run_config, read_theta

logger = structlog.get_logger()

COMMANDS = ("fit", "price", "bermudan", "compare-cos", "export-density")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fournet", description="Fourier-domain density networks for option pricing")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", help="YAML run configuration")
        sub.add_argument("--theta", help="theta.json (default: <out>/theta.json)")
        sub.add_argument("--out", help="Output directory (default: config output_dir)")
        sub.add_argument("--seed", type=int, help="Override train.seed")
        sub.add_argument("--deterministic", action="store_true", help="Index-ordered reductions")
        sub.add_argument("--workers", type=int, help="Worker threads for gradients and Bermudan steps")
        sub.add_argument("--log-format", choices=["json", "console"], help="Log renderer")
        if name == "export-density":
            sub.add_argument("--grid", help="x_min:x_max:n (default: the config's export section)")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    settings = get_settings()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.deterministic or settings.deterministic:
        updates["deterministic"] = True
    workers = args.workers
    if workers is None and settings.workers > 1:
        workers = settings.workers
    if workers is not None:
        updates["workers"] = workers
    if not updates:
        return config
    train = config.train.model_validate({**config.train.model_dump(), **updates})
    return config.model_copy(update={"train": train})


def _output_dir(args: argparse.Namespace, config: Optional[RunConfig]) -> Path:
    if args.out:
        return Path(args.out)
    if config is not None:
        return Path(config.output_dir)
    return Path(get_settings().output_dir)


def run(args: argparse.Namespace) -> int:
    config = None
    if args.config:
        config = _apply_overrides(load_run_config(args.config), args)
    elif args.command != "export-density":
        raise ConfigError(f"{args.command} needs --config")
    out_dir = _output_dir(args, config)

    if args.command == "fit":
        paths = commands.cmd_fit(config, out_dir)
    else:
        theta_path = Path(args.theta) if args.theta else out_dir / "theta.json"
        doc = read_theta(theta_path)
        if args.command == "price":
            paths = commands.cmd_price(config, doc, out_dir)
        elif args.command == "bermudan":
            paths = commands.cmd_bermudan(config, doc, out_dir, config.train.workers)
        elif args.command == "compare-cos":
            paths = commands.cmd_compare_cos(config, doc, out_dir)
        else:
            if args.grid:
                grid = commands.parse_grid(args.grid)
            elif config is not None and config.export is not None:
                grid = (config.export.x_min, config.export.x_max, config.export.points)
            else:
                raise ConfigError("export-density needs --grid or an 'export' config section")
            paths = commands.cmd_export_density(doc, grid, out_dir)

    for kind, path in paths.items():
        logger.info("Artifact written", kind=kind, path=str(path))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(log_format=args.log_format)
    try:
        return run(args)
    except FourNetError as exc:
        logger.error("Command failed", command=args.command, error=str(exc), error_type=type(exc).__name__)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("Invalid parameters", command=args.command, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("Numeric failure", command=args.command, error=str(exc), error_type=type(exc).__name__)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
