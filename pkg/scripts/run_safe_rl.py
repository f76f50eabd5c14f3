"""Safe-RL comparison: train CP, GC, and PPO_only policies over several seeds
against one frozen alignment checkpoint, then build the evaluation bundle
(Pareto frontier, zero-shot transfer, per-step cost tables).

Expects a completed pipeline run directory (see run_pipeline.py).

Usage:
    python scripts/run_safe_rl.py --out runs/pipeline [--seeds 0 1 2] [--set rl.iterations=50]
"""

import argparse
import sys

from textcost.cli import main as cli_main


def run(argv):
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="runs/pipeline")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--set", action="append", default=[])
    args = parser.parse_args(argv)
    common = ["--set", f"out_dir={args.out}", "--set", f"rl.seeds={list(args.seeds)}"]
    for assignment in args.set:
        common += ["--set", assignment]
    for mode in ("CP", "GC", "PPO_only"):
        code = cli_main(["train-policy", *common, "--set", f"rl.mode={mode}"])
        if code != 0:
            return code
    return cli_main(["eval", *common])


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
