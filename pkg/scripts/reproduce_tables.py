#!/usr/bin/env python3
"""Run the full comparison grid and write the per-sample PRE tables.

At the default full resolution (128x128, 10 trials per cell) this is a long
run; budget roughly an hour on a laptop with --jobs 1, much less with more
workers.  Pass --size 32 for the reduced mode that finishes in about a
minute.

Usage:
    python scripts/reproduce_tables.py --out results/full_grid --jobs 4
    python scripts/reproduce_tables.py --out results/quick --size 32
"""

import argparse
import sys

from straintc.cli import main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-maps", action="store_true",
                   help="also write TC maps per cell (CSV + PGM)")
    return p.parse_args()


if __name__ == "__main__":
    args = parse_args()
    argv = ["grid", "--out", args.out, "--size", str(args.size),
            "--trials", str(args.trials), "--seed", str(args.seed),
            "--jobs", str(args.jobs)]
    if args.emit_maps:
        argv.append("--emit-maps")
    sys.exit(main(argv))
