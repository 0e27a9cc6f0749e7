"""Success rate of the extremal pipeline on noisy stable instances.

    python3 scripts/extremal_rates.py --k 2 --ns 400 800 --seeds 30 --c 10
"""

import argparse
import math
import time
from fractions import Fraction

from perturb_lab.extremal import run_extremal_pipeline
from perturb_lab.generators import stable_instance


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--alpha", type=Fraction, default=None, help="default 1/(k+1)")
    ap.add_argument("--beta", type=Fraction, default=Fraction(1, 100))
    ap.add_argument("--noise", type=Fraction, default=Fraction(1, 1000))
    ap.add_argument("--ns", type=int, nargs="+", default=[400, 800])
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--c", type=float, default=10.0, help="p = c n^(-(k-1)/(2k-3)) (log n)^(1/(2k-3))")
    args = ap.parse_args()
    k = args.k
    alpha = args.alpha or Fraction(1, k + 1)
    for n in args.ns:
        p = min(1.0, args.c * n ** (-(k - 1) / (2 * k - 3)) * math.log(n) ** (1 / (2 * k - 3)))
        wins, failures = 0, {}
        start = time.perf_counter()
        for seed in range(args.seeds):
            g, wit = stable_instance(alpha, args.beta, n, args.noise, seed)
            res = run_extremal_pipeline(g, k, p, seed, witness=wit)
            wins += res.success
            if not res.success:
                failures[res.failed_stage] = failures.get(res.failed_stage, 0) + 1
        print(f"k={k} n={n} p={p:.5f}: {wins}/{args.seeds} succeeded, failures by stage {failures}, "
              f"{time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
