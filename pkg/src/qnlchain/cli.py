"""Command-line entry point: one subcommand per experiment."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .potentials import POTENTIALS

log = logging.getLogger("qnlchain")

# (flag, config field, parser)
SCALAR_FLAGS = [
    ("--potential", "potential", str),
    ("--s", "s", int),
    ("--K", "K", int),
    ("--K-fraction", "K_fraction", float),
    ("--load", "load", str),
    ("--amplitude", "amplitude", float),
    ("--output", "output", str),
    ("--seed", "seed", int),
    ("--workers", "workers", int),
    ("--trials", "trials", int),
    ("--deformation-amplitude", "deformation_amplitude", float),
]
LIST_FLAGS = [
    ("--N", "N", int),
    ("--F", "F", float),
    ("--segments", "segments", int),
    ("--bracket", "bracket", float),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnlchain",
        description="Atomistic/continuum coupling experiments on a periodic 1D chain.")
    parser.add_argument("--list-potentials", action="store_true",
                        help="print the available potentials and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    for name in ex.EXPERIMENTS:
        doc = (ex.RUNNERS[name].__doc__ or "").strip().splitlines()
        sp = sub.add_parser(name, help=doc[0] if doc else None)
        sp.add_argument("--config", help="INI experiment config")
        sp.add_argument("--dry-run", action="store_true", help="validate the config and exit")
        for flag, dest, kind in SCALAR_FLAGS:
            sp.add_argument(flag, dest=dest, type=kind, default=None)
        for flag, dest, kind in LIST_FLAGS:
            sp.add_argument(flag, dest=dest, type=kind, nargs="+", default=None)
    return parser


def resolve_config(args) -> ex.ExperimentConfig:
    if args.config:
        config = ex.load_config(args.config, args.experiment)
    else:
        config = ex.default_config(args.experiment)
    overrides = {}
    for _, dest, _ in SCALAR_FLAGS + LIST_FLAGS:
        value = getattr(args, dest)
        if value is not None:
            overrides[dest] = tuple(value) if isinstance(value, list) else value
    if "potential" in overrides and overrides["potential"] != config.potential:
        overrides["potential_params"] = ()
    return config.replace(**overrides) if overrides else config


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.list_potentials:
        for name in sorted(POTENTIALS):
            print(name)
        return 0
    if not args.experiment:
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = resolve_config(args)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        print(f"{config.experiment}: config ok (hash {config.config_hash()})")
        return 0
    log.info("running %s with N=%s", config.experiment, config.N)
    result = ex.run(config)
    path = result.write()
    if path is None:
        sys.stdout.write(result.to_csv())
    else:
        log.info("wrote %s", path)
    print(result.summary(), file=sys.stderr)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
