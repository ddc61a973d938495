"""Regenerate every figure and table bundle under one output root."""

import argparse
import sys
from pathlib import Path

from duopoly.cli import FIGURES, main


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--replicates", type=int, default=20)
    return ap.parse_args()


if __name__ == "__main__":
    args = parse_args()
    worst = 0
    for fig in FIGURES:
        code = main(["reproduce", fig, "--out", str(args.out / fig), "--seed", str(args.seed),
                     "--replicates", str(args.replicates)])
        worst = max(worst, code)
    sys.exit(worst)
