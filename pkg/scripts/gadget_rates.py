"""Success rate of the absorbing pipelines on generated super-regular instances.

    python3 scripts/gadget_rates.py --mode multipartite --n 2000 --p-scale 40
    python3 scripts/gadget_rates.py --mode bipartite --n 2000 --p-scale 60 --split-c 0.72
"""

import argparse
import time

from perturb_lab.gadgets import (
    gen_bipartite_instance,
    gen_super_regular_instance,
    run_bipartite_pipeline,
    run_multipartite_pipeline,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=["multipartite", "bipartite"], default="multipartite")
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=float, default=0.3)
    ap.add_argument("--p-scale", type=float, default=40.0, help="p = scale * n^(-(k-1)/(2k-3)), scale/n for bipartite")
    ap.add_argument("--split-c", type=float, default=None)
    ap.add_argument("--seeds", type=int, default=30)
    args = ap.parse_args()
    n, k = args.n, args.k
    wins, failures = 0, {}
    start = time.perf_counter()
    for seed in range(args.seeds):
        if args.mode == "multipartite":
            p = min(1.0, args.p_scale * n ** (-(k - 1) / (2 * k - 3)))
            inst = gen_super_regular_instance(k, n, args.d, 0.3, 0.1, seed)
            res = run_multipartite_pipeline(inst, p, seed)
        else:
            p = min(1.0, args.p_scale / n)
            bi = gen_bipartite_instance(n, n, args.d, seed)
            res = run_bipartite_pipeline(
                bi.u_set, bi.v_set, bi.graph, p, seed,
                x_tuple=bi.x_tuple, y_tuple=bi.y_tuple, d=args.d, split_c=args.split_c,
            )
        wins += res.success
        if not res.success:
            failures[res.failed_stage] = failures.get(res.failed_stage, 0) + 1
        print(seed, res.success, res.failed_stage, flush=True)
    print(f"{args.mode} k={k} n={n} p={p:.5f}: {wins}/{args.seeds} succeeded, failures {failures}, "
          f"{time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
