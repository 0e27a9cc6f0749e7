"""Edge ratio of the sampled hypergraph and the degree floor of F on k=2 instances.

    python3 scripts/hypergraph_stats.py --n 2000 --p-scale 40 --instances 30
"""

import argparse

from perturb_lab.gadgets import build_F, gen_super_regular_instance, sample_F_tilde


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=float, default=0.3)
    ap.add_argument("--p-scale", type=float, default=40.0)
    ap.add_argument("--eps", type=float, default=0.02)
    ap.add_argument("--instances", type=int, default=30)
    args = ap.parse_args()
    p = args.p_scale / args.n
    print("seed,m,e_F,e_F_tilde,ratio_over_p,min_degree,floor")
    for seed in range(args.instances):
        inst = gen_super_regular_instance(2, args.n, args.d, 0.3, 0.1, seed)
        f = build_F(inst)
        e_f, e_ft = f.edge_count(), sample_F_tilde(inst, p, seed).edge_count()
        floor = (1 - 2 * args.eps) * inst.m
        print(f"{seed},{inst.m},{e_f},{e_ft},{e_ft / e_f / p:.4f},{f.degrees_k2().min()},{floor:.1f}")


if __name__ == "__main__":
    main()
