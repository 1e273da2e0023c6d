#!/usr/bin/env python3
"""Desk-scale end-to-end experiment: calibrate, then reproduce cost tables.

Runs the shape and resilience campaigns at reduced scale (1e5 burn-in) and
then the four-cell predicted-vs-sampled table with the naive constant-speed
comparison rows. Expect roughly 15 minutes on two cores.

    python3 scripts/run_desk_scale_tables.py --out results/desk [--seed 1]
"""

import argparse
import sys
from pathlib import Path

from execlab.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/desk")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=0)
    parser.add_argument("--runs", type=int, default=100, help="samples per table cell")
    args = parser.parse_args(argv)

    out = Path(args.out)
    config = str(ROOT / "configs" / "desk_scale.json")
    common = ["--config", config, "--jobs", str(args.jobs), "--desk-scale"]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]

    steps = [
        ["calibrate-shape", "--out", str(out / "calibration"), "--snapshots", "100"] + common,
        ["calibrate-resilience", "--out", str(out / "calibration"),
         "--impacts", "5:20:3", "--runs", "160", "--horizon", "5000",
         "--taus", "5,10,50,100"] + common,
        ["reproduce-tables", "--out", str(out / "tables"),
         "--calibration", str(out / "calibration"),
         "--cells", "40x400,40x4000,80x400,80x4000", "--x0", "200",
         "--runs", str(args.runs), "--table2"] + common,
    ]
    for step in steps:
        print(f"\n=== execlab {' '.join(step)}")
        code = cli(step)
        if code != 0:
            return code
    print(f"\nartifacts under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(run())
