"""Rejection rate of the joint pre-trends test as the pre-period slope gap grows."""

import argparse
import dataclasses

import numpy as np

from sdid import DgpSpec, SubgroupContrast
from sdid.simlab import pretrends_monte_carlo


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="scripts/dgp_example.json")
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--n-pre", type=int, default=3)
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--gaps", default="0,0.05,0.1,0.2,0.5", help="pre-period slope gaps in noise SD units")
    args = ap.parse_args()

    base = dataclasses.replace(DgpSpec.load(args.config), n=args.n)
    a, b = base.levels
    sd = base.noise.sd_pre
    for gap in map(float, args.gaps.split(",")):
        dgp = dataclasses.replace(base, levels=(dataclasses.replace(a, pre_delta=gap * sd), b))
        res = pretrends_monte_carlo(dgp, SubgroupContrast("A", "B"), n_pre=args.n_pre, reps=args.reps,
                                    master_seed=args.seed, alpha=args.alpha)
        half = 1.96 * np.sqrt(res.rejection_rate * (1 - res.rejection_rate) / res.reps)
        print(f"gap={gap:<5} reject={res.rejection_rate:.3f} +- {half:.3f}  (df={res.df})")


if __name__ == "__main__":
    main()
