"""Bisect the 50% point of extremal-pipeline success on stable instances and fit log p_hat against log n.

Writes an n,p_hat CSV that ``perturb-lab fit --in`` also accepts.

    python3 scripts/exponent_fit.py --alpha 1/3 --ns 256 512 1024 2048 --trials 40 --out points.csv
"""

import argparse
import csv
import math
import sys
import time
from fractions import Fraction

from perturb_lab.generators import PerturbedModel, stable_instance
from perturb_lab.threshold import ExtremalPipelineDecider, bisect_critical_p, fit_exponent, predicted_threshold


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=Fraction, default=Fraction(1, 3))
    ap.add_argument("--ns", type=int, nargs="+", default=[256, 512, 1024, 2048])
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    pred = predicted_threshold(args.alpha, 2)
    points = []
    for n in args.ns:
        start = time.perf_counter()
        g, wit = stable_instance(args.alpha, Fraction(1, 100), n, Fraction(1, 1000), n)
        model = PerturbedModel(g, 0.0, args.alpha)
        res = bisect_critical_p(
            model, ExtremalPipelineDecider(pred.k, wit), 0.2 / n, min(1.0, 100 / n), args.trials, n, jobs=args.jobs
        )
        points.append((n, res.p_hat))
        print(f"n={n}: p_hat={res.p_hat:.5f} (p_hat*n={res.p_hat * n:.1f}, {len(res.probes)} probes, "
              f"{time.perf_counter() - start:.0f}s)", file=sys.stderr)
    fit = fit_exponent(points)
    logfit = fit_exponent([(n, p / math.log(n)) for n, p in points])
    print(f"algorithmic-threshold slope {fit.slope:.3f} +- {fit.stderr:.3f}; "
          f"predicted containment exponent {float(pred.exponent):.3f}; slope of p_hat/log n {logfit.slope:.3f}",
          file=sys.stderr)
    dest = open(args.out, "w", newline="") if args.out else sys.stdout
    with dest:
        w = csv.writer(dest)
        w.writerow(["n", "p_hat"])
        w.writerows(points)


if __name__ == "__main__":
    main()
