"""Desk-scale end-to-end run: corpus, alignment training, calibration.

Usage:
    python scripts/run_pipeline.py [--out runs/pipeline] [--seed 0] [extra --set overrides]
"""

import argparse
import sys

from textcost.cli import main as cli_main


def run(argv):
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/pipeline")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--set", action="append", default=[])
    args = parser.parse_args(argv)
    common = ["--seed", str(args.seed), "--set", f"out_dir={args.out}"]
    for assignment in args.set:
        common += ["--set", assignment]
    for command in ("gen-corpus", "train-ttct", "calibrate"):
        code = cli_main([command, *common])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
