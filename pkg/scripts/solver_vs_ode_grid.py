"""Compare the implicit landing-point root with integrated runs over a parameter grid."""

import argparse
import itertools
import time

import numpy as np

from duopoly.bass_core import BassParams, MarketState, final_state
from duopoly.equilibrium import solve_within_brand_equilibrium


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=5, help="grid points per axis")
    ap.add_argument("--dt", type=float, default=0.01)
    return ap.parse_args()


if __name__ == "__main__":
    args = parse_args()
    ps = np.linspace(0.01, 0.1, args.points)
    qs = np.linspace(0.1, 0.8, args.points)
    t0 = time.perf_counter()
    errs = []
    for p1, p2, q11, q22 in itertools.product(ps, ps, qs, qs):
        root = solve_within_brand_equilibrium(p1, p2, q11, q22)
        st, _ = final_state(BassParams(p1, p2, q11, q22), MarketState(0.0, 0.0, 0.0),
                            dt=args.dt, t_max=1e4, gap=1e-12)
        errs.append(abs(root.n1 - st.n1 / (st.n1 + st.n2)))
    errs = np.array(errs)
    print(f"{errs.size} points, max error {errs.max():.3e}, median {np.median(errs):.3e}, "
          f"{time.perf_counter() - t0:.2f}s")
