"""Landing points of the four cross-influence cases and their separations."""

import argparse
from dataclasses import replace

from duopoly.bass_core import BassParams
from duopoly.equilibrium import FIG2_CASES, landing_point


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs=2, default=(0.03, 0.06), metavar=("P1", "P2"))
    ap.add_argument("--q", type=float, nargs=2, default=(0.38, 0.68), metavar=("Q11", "Q22"))
    return ap.parse_args()


if __name__ == "__main__":
    args = parse_args()
    base = BassParams(args.p[0], args.p[1], args.q[0], args.q[1])
    ref = None
    print("case   q12   q21      n1        n2     |n1-n2|   n2 change vs A")
    for label, (q12, q21) in FIG2_CASES.items():
        pt = landing_point(replace(base, q12=q12, q21=q21))
        ref = pt if ref is None else ref
        print(f"{label:>4} {q12:5.2f} {q21:5.2f} {pt.n1:9.5f} {pt.n2:9.5f} "
              f"{abs(pt.n1 - pt.n2):9.5f} {pt.n2 - ref.n2:+10.5f}")
