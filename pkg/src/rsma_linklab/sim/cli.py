"""Command-line entry point ``rsma-linklab``."""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError
from . import presets
from .config import load_config, to_toml
from .harness import run
from .records import emit, to_csv, to_json

EXPERIMENTS = ("rates", "cdf", "ber")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="TOML configuration file")
    src.add_argument("--preset", help="named preset (see `preset --list`)")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--n-blocks", type=int, help="override the number of draws/blocks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsma-linklab", description="Rate-splitting link-level simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="run the experiment named in the config"))
    for name in EXPERIMENTS:
        _add_run_args(sub.add_parser(name, help=f"run a {name} experiment"))
    pre = sub.add_parser("preset", help="list presets or print one as TOML")
    grp = pre.add_mutually_exclusive_group(required=True)
    grp.add_argument("--list", action="store_true")
    grp.add_argument("--name")
    pre.add_argument("--out", help="write the config here instead of stdout")
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else presets.preset(args.preset)
    if args.command in EXPERIMENTS and cfg.experiment != args.command:
        raise ConfigError(f"config describes a {cfg.experiment!r} experiment, not {args.command!r}")
    return cfg.with_overrides(seed=args.seed, n_blocks=args.n_blocks)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "preset":
            if args.list:
                print("\n".join(presets.names()))
                return 0
            text = to_toml(presets.preset(args.name))
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            return 0
        cfg = _config(args)
        records = run(cfg, workers=max(1, args.workers))
        if args.out:
            emit(records, args.out, args.format)
        else:
            sys.stdout.write(to_csv(records) if args.format == "csv" else to_json(records))
        return 0
    except (ConfigError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
