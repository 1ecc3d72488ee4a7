"""``oscistrip <suite> --config <path> [--out DIR] [--seed N] [--threads N]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from ..errors import ConfigError
from .config import load_config, shipped_config
from .suites import SUITES, run_suite


def build_parser():
    p = argparse.ArgumentParser(prog="oscistrip", description=__doc__.split("\n")[0])
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--config", default=None,
                   help="INI file; 'default' or 'smoke' select a shipped config")
    p.add_argument("--out", default=None, help="output directory (overrides [run] out)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads; falls back to OSCISTRIP_THREADS")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("OSCISTRIP_THREADS")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"OSCISTRIP_THREADS must be an integer, got {env!r}") from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config in (None, "default", "smoke"):
            cfg = shipped_config(args.config or "default")
        else:
            cfg = load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        threads = _threads(args.threads)
        if threads is not None:
            changes["threads"] = threads
        if args.out is not None:
            changes["out"] = args.out
        cfg = dataclasses.replace(cfg, **changes).validate()
    except ConfigError as exc:
        print(f"oscistrip: {exc}", file=sys.stderr)
        return 2
    rep = run_suite(cfg, args.suite)
    print(rep.summary(), end="")
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
