"""Coverage of normal and percentile-bootstrap intervals over a grid of sample sizes."""

import argparse
import dataclasses
import time

from sdid import DgpSpec, SubgroupContrast, monte_carlo


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="scripts/dgp_example.json")
    ap.add_argument("--sizes", default="100,500,5000")
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--bootstrap", type=int, default=1000)
    ap.add_argument("--level", type=float, default=0.95)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--stratified", action="store_true")
    args = ap.parse_args()

    base = DgpSpec.load(args.config)
    print(f"{'n':>6} {'normal':>8} {'boot':>8} {'failed':>7} {'secs':>6}")
    for n in map(int, args.sizes.split(",")):
        t0 = time.perf_counter()
        s = monte_carlo(
            dataclasses.replace(base, n=n),
            SubgroupContrast("A", "B"),
            reps=args.reps,
            master_seed=args.seed,
            level=args.level,
            bootstrap_B=args.bootstrap,
            stratified=args.stratified,
        )
        print(f"{n:>6} {s.coverage_normal:>8.3f} {s.coverage_bootstrap:>8.3f} {s.n_failed:>7} "
              f"{time.perf_counter() - t0:>6.1f}")


if __name__ == "__main__":
    main()
