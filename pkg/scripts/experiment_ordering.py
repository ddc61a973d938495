"""Run the four macro-vs-micro experiments for several ABM seeds and tabulate the areas."""

import argparse

from duopoly import abm, fitting
from duopoly.bass_core import BassParams
from duopoly.cli import monopoly_fits


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--n-agents", type=int, default=10_000)
    ap.add_argument("--p-rewire", type=float, default=0.0)
    return ap.parse_args()


if __name__ == "__main__":
    args = parse_args()
    print("seed   exp1%    exp2%    exp3%    exp4%   exp4 r2      tied c   ordered")
    for seed in args.seeds:
        base = abm.AbmConfig(n_agents=args.n_agents, p_rewire=args.p_rewire, rng_seed=seed)
        _, _, f1, f2 = monopoly_fits(base, args.replicates)
        bass = BassParams(f1.params.p, f2.params.p, f1.params.q, f2.params.q)
        exps = fitting.run_experiments(abm.ensemble(base, args.replicates), bass)
        a = [e.area_diff_pct for e in exps]
        ordered = a[0] > a[1] > a[2] > a[3]
        print(f"{seed:4d} " + " ".join(f"{x:8.3f}" for x in a)
              + f"  ({exps[3].r2[0]:.4f},{exps[3].r2[1]:.4f}) {exps[1].params.q12:8.5f}   {ordered}")
