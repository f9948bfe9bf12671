#!/usr/bin/env python3
"""Desk-scale benchmark: sweep + report in one go.

Runs the synthetic comparison grid (surrogate methods vs Monte Carlo
baselines) and prints the aggregate tables. Pass --full-scale for the
100-trial version; everything else mirrors `bqselect sweep`.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from bqselect.cli import main as cli_main  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="benchmark_results.csv")
    parser.add_argument("--d", type=int, nargs="+", default=[1, 2])
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--quad-nodes", type=int, default=2000)
    parser.add_argument("--z-samples", type=int, default=2000)
    parser.add_argument("--refit-every", type=int, default=3)
    parser.add_argument("--full-scale", action="store_true")
    args = parser.parse_args()

    sweep_args = [
        "sweep",
        "--d", *map(str, args.d),
        "--trials", str(args.trials),
        "--methods", "mi-z1", "mi-model-choice", "round-robin-us", "bridge", "rjmcmc",
        "--seed", str(args.seed),
        "--out", args.out,
        "--jobs", str(args.jobs),
        "--quad-nodes", str(args.quad_nodes),
        "--z-samples", str(args.z_samples),
        "--refit-every", str(args.refit_every),
    ]
    if args.full_scale:
        sweep_args.append("--full-scale")
    code = cli_main(sweep_args)
    if code == 1:
        return code
    report_code = cli_main([
        "report", "--input", args.out,
        "--out", str(Path(args.out).with_suffix(".summary.json")),
    ])
    return max(code, report_code)


if __name__ == "__main__":
    sys.exit(main())
