"""Command line entry point: ``hmm <subcommand> --config FILE [--out DIR] [--key VALUE ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from .config import EXPERIMENTS, ExperimentConfig, load_config
from .errors import HmmError
from .experiments import run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value configuration file")
        for f in fields(ExperimentConfig):
            if f.name == "experiment":
                continue
            p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, metavar="VALUE",
                           help=f"override '{f.name}' (default {getattr(ExperimentConfig(), f.name)!s})")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)
                 if f.name != "experiment" and getattr(args, f.name, None) is not None}
    try:
        cfg = load_config(args.config, args.command, overrides)
        result = run(cfg)
    except HmmError as exc:
        print(f"error code={exc.code} message={str(exc)!r}", file=sys.stderr)
        return 2
    for name, table in result.tables.items():
        print(f"{cfg.out}/{name}.csv: {len(table.rows)} rows")
    for key, val in result.summary.items():
        if key in ("sweep", "crossings"):
            continue
        print(f"{key}: {val}")
    for c in result.summary.get("crossings", []):
        print(f"Re(mu_eff) sign change ({c.direction}) at k = {c.k:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
