#!/usr/bin/env python3
"""Write the four-arm curve comparison for one pixel (clean, noisy, Kalman,
spline) plus the fitted model curves, ready for external plotting.

Usage:
    python scripts/demo_curves.py --out results/demo
    python scripts/demo_curves.py --out results/demo --snr-db 30 --pixel 40,64
"""

import argparse
import sys

from straintc.cli import main


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--preset", default="A", choices=("A", "B", "C"))
    p.add_argument("--snr-db", type=float, default=60.0)
    p.add_argument("--good-fraction", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pixel", help="row,col (default: image center)")
    return p.parse_args()


if __name__ == "__main__":
    args = parse_args()
    argv = ["demo", "--out", args.out, "--preset", args.preset,
            "--snr-db", str(args.snr_db), "--good-fraction", str(args.good_fraction),
            "--seed", str(args.seed)]
    if args.pixel:
        argv += ["--pixel", args.pixel]
    sys.exit(main(argv))
