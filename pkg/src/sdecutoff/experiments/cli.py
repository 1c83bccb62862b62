"""``sdecutoff`` command line.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 engine error.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError
from . import config as config_mod
from .runner import EXPERIMENTS, run

HELP = {
    "constants": "limit constants of the deterministic flow",
    "profile": "closed-form linearized and first-order distance curves",
    "fp": "density-engine distance curves at t*_eps(b)",
    "mc": "coupled path ensembles and pathwise bound checks",
    "doublewell": "local cut-off inside one well of a multi-well potential",
    "compare": "pairwise agreement of the selected engines",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdecutoff", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", metavar="PATH",
                        help="TOML config (defaults apply when omitted)")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--seed", type=int, metavar="N",
                        help="overrides [mc].seed")
        sp.add_argument("--force", action="store_true",
                        help="overwrite existing outputs")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = config_mod.load(args.config, seed=args.seed)
        else:
            cfg = config_mod.from_dict({}, seed=args.seed)
        man = run(cfg, (args.command,), out=args.out, force=args.force)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return 1
    for w in man.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if man.errors:
        for name, msg in man.errors.items():
            print(f"engine error in {name}: {msg}", file=sys.stderr)
        return 2
    for path in man.outputs:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
