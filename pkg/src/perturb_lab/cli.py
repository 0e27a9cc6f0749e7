"""Command line harness: ``perturb-lab <command> ...``.

Mathematical outcomes (found, absent, certificate, pipeline failure) are data and exit 0.
Usage, file and parse errors exit 2.  Every JSON document echoes version, seed and parameters.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .graph import DiGraph, Graph, format_edge_list, full_set, read_edge_list, vertex_set

EXIT_USAGE = 2


class UsageError(Exception):
    """Bad input file or argument value; reported on stderr with exit 2."""


# argument helpers


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers: {text!r}") from exc


def _p_grid(text: str) -> list[float]:
    """``lo:hi:count`` -> count evenly spaced values including both ends."""
    try:
        lo, hi, count = text.split(":")
        lo_f, hi_f, num = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo:hi:count, got {text!r}") from exc
    if num < 1 or not 0 <= lo_f <= hi_f <= 1:
        raise argparse.ArgumentTypeError("need 0 <= lo <= hi <= 1 and count >= 1")
    if num == 1:
        return [lo_f]
    step = (Fraction(hi) - Fraction(lo)) / (num - 1)
    return [float(Fraction(lo) + i * step) for i in range(num)]


def _default_jobs() -> int:
    raw = os.environ.get("PERTURB_LAB_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_graph(path: str) -> Graph:
    try:
        g = read_edge_list(sys.stdin if path == "-" else path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc
    if isinstance(g, DiGraph):
        raise UsageError(f"{path} holds a digraph; an undirected graph is required")
    return g


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc


def _params(args: argparse.Namespace) -> dict:
    skip = {"func", "command", "seed", "jobs"}
    out = {}
    for key, val in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(val, Fraction):
            val = str(val)
        out[key] = val
    return out


def _envelope(args: argparse.Namespace, **body) -> dict:
    doc = {"version": __version__, "command": args.command, "seed": args.seed, "params": _params(args)}
    doc.update(body)
    return doc


def _emit_json(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")


def _write_text(dest: str | None, text: str) -> None:
    if dest is None or dest == "-":
        sys.stdout.write(text)
        return
    try:
        Path(dest).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {dest}: {exc.strerror or exc}") from exc


# gen


def _generate(args: argparse.Namespace):
    from .generators import extremal_bipartite, gnp, gnp_directed, gnp_multipartite, stable_instance

    fam = args.family
    witness = None
    if fam == "gnp":
        g = gnp(args.n, args.p, args.seed)
    elif fam == "gnp-digraph":
        g = gnp_directed(args.n, args.p, args.seed)
    elif fam == "gnp-multi":
        parts = args.parts or [args.n // args.k + (1 if i < args.n % args.k else 0) for i in range(args.k)]
        if sum(parts) != args.n:
            raise UsageError(f"--parts sum to {sum(parts)}, not --n {args.n}")
        g = gnp_multipartite(parts, args.p, args.seed)
    elif fam == "extremal":
        if args.alpha is None:
            raise UsageError("--alpha is required for family extremal")
        g, _, _ = extremal_bipartite(args.alpha, args.n)
    else:
        if args.alpha is None:
            raise UsageError("--alpha is required for family stable")
        g, witness = stable_instance(args.alpha, args.beta, args.n, args.noise, args.seed)
    return g, witness


def cmd_gen(args: argparse.Namespace) -> int:
    fam = args.family
    if fam in ("gnp", "gnp-multi", "gnp-digraph") and args.p is None:
        raise UsageError(f"--p is required for family {fam}")
    try:
        g, witness = _generate(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _write_text(args.out, format_edge_list(g))
    if witness is not None:
        dest = args.witness_out or (f"{args.out}.witness.json" if args.out not in (None, "-") else None)
        if dest is None:
            raise UsageError("family stable writing to stdout needs --witness-out")
        _write_text(dest, json.dumps(witness.to_json(), indent=2, sort_keys=True) + "\n")
    return 0


# solve


def cmd_solve(args: argparse.Namespace) -> int:
    from .oracle import find_square_ham_cycle, find_square_path, is_2_universal

    g = _load_graph(args.input)
    if args.target == "cycle":
        res = find_square_ham_cycle(g, args.budget)
        _emit_json(_envelope(args, n=g.n, status=res.status.value, ordering=res.value, expansions=res.expansions))
    elif args.target == "path":
        if args.left is None or args.right is None:
            raise UsageError("--target path needs --left a,b and --right c,d")
        if len(args.left) != 2 or len(args.right) != 2:
            raise UsageError("--left and --right take exactly two vertices")
        try:
            res = find_square_path(g, tuple(args.left), tuple(args.right), full_set(g.n), budget=args.budget)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        _emit_json(_envelope(args, n=g.n, status=res.status.value, ordering=res.value, expansions=res.expansions))
    else:
        uni = is_2_universal(g, args.budget)
        witness = uni.witness.label() if uni.witness is not None else None
        _emit_json(_envelope(args, n=g.n, status=uni.status.value, checked=uni.checked, non_embeddable=witness))
    return 0


# certify


def cmd_certify(args: argparse.Namespace) -> int:
    from .certificates import AbsenceCertificate, any_certificate, packing_obstruction, small_gap_obstruction

    g = _load_graph(args.input)
    if any(not 0 <= v < g.n for v in args.A):
        raise UsageError(f"--A lists a vertex outside 0..{g.n - 1}")
    a = vertex_set(args.A)
    b = full_set(g.n) & ~a
    try:
        if args.kind == "packing":
            res = packing_obstruction(g, a, b, args.k, mode=args.mode)
        elif args.kind == "small-gap":
            res = small_gap_obstruction(g, a, b, args.k)
        else:
            res = any_certificate(g, a, b, args.k)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    body = res.to_json()
    if isinstance(res, AbsenceCertificate):
        body["recheck"] = res.recheck(g)
    _emit_json(_envelope(args, n=g.n, **{"result": body, "status": body["status"]}))
    return 0


# embed


def cmd_embed(args: argparse.Namespace) -> int:
    from .extremal import ExtremalConfig, run_extremal_pipeline
    from .stability import StabilityWitness

    g = _load_graph(args.input)
    witness = None
    if args.witness is not None:
        data = _load_json(args.witness)
        try:
            witness = StabilityWitness.from_json(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad witness file {args.witness}: {exc}") from exc
    config = ExtremalConfig(beta=args.beta, aux_rounds=args.aux_rounds)
    res = run_extremal_pipeline(g, args.k, args.p, args.seed, witness=witness, config=config)
    body = res.to_json()
    body.pop("seed")
    status = "found" if res.success else "pipeline_failed"
    _emit_json(_envelope(args, status=status, result=body))
    return 0


# gadget


def cmd_gadget(args: argparse.Namespace) -> int:
    from .gadgets import gen_bipartite_instance, gen_super_regular_instance, run_bipartite_pipeline, run_multipartite_pipeline

    if args.p is None and args.p_scale is None:
        raise UsageError("give --p or --p-scale")
    if args.mode == "multipartite":
        try:
            inst = gen_super_regular_instance(args.k, args.n, args.d, args.delta0, args.delta1, args.seed, m=args.m)
        except (ValueError, RuntimeError) as exc:
            raise UsageError(str(exc)) from exc
        size = inst.size_v
        p = args.p if args.p is not None else min(1.0, args.p_scale * size ** (-(args.k - 1) / (2 * args.k - 3)))
        res = run_multipartite_pipeline(inst, p, args.seed)
        instance = {"k": inst.k, "n": inst.n, "m": inst.m, "vertices": inst.graph.n}
    else:
        m = args.m if args.m is not None else args.n
        try:
            inst = gen_bipartite_instance(args.n, m, args.d, args.seed)
        except (ValueError, RuntimeError) as exc:
            raise UsageError(str(exc)) from exc
        p = args.p if args.p is not None else min(1.0, args.p_scale / args.n)
        res = run_bipartite_pipeline(
            inst.u_set,
            inst.v_set,
            inst.graph,
            p,
            args.seed,
            x_tuple=inst.x_tuple,
            y_tuple=inst.y_tuple,
            d=args.d,
            delta0=args.delta0,
            delta1=args.delta1,
            split_c=args.split_c,
        )
        instance = {"n": args.n, "m": m, "vertices": inst.graph.n}
    status = "found" if res.success else "pipeline_failed"
    _emit_json(_envelope(args, status=status, p_used=p, instance=instance, result=res.to_json()))
    return 0


# sweep


def _decider_for(args: argparse.Namespace, dense: Graph, a: int, b: int):
    from .stability import StabilityWitness
    from .threshold import CertificateRefuterDecider, ExactOracleDecider, ExtremalPipelineDecider

    if args.decider == "exact":
        return ExactOracleDecider(budget=args.budget)
    if args.decider == "certificate":
        return CertificateRefuterDecider(a, args.k)
    from .extremal import ExtremalConfig

    witness = StabilityWitness(a, b, args.alpha, Fraction(1, 100))
    return ExtremalPipelineDecider(args.k, witness, ExtremalConfig())


def _model_for(args: argparse.Namespace, n: int):
    from .generators import PerturbedModel, extremal_bipartite, stable_instance

    if args.dense == "stable":
        g, w = stable_instance(args.alpha, Fraction(1, 100), n, 0.001, args.seed)
        a, b = w.a, w.b
    else:
        g, a, b = extremal_bipartite(args.alpha, n)
    return PerturbedModel(g, 0.0, args.alpha), a, b


def _check_decider_size(args: argparse.Namespace, n: int) -> None:
    from .threshold import ExactOracleDecider

    if args.decider == "exact" and n > ExactOracleDecider.max_n:
        raise UsageError(f"exact decider is limited to n <= {ExactOracleDecider.max_n}")


def cmd_sweep(args: argparse.Namespace) -> int:
    from .threshold import SweepResult, estimate_success_prob

    _check_decider_size(args, args.n)
    model, a, b = _model_for(args, args.n)
    decider = _decider_for(args, model.dense_part, a, b)
    result = SweepResult(args.alpha, args.n, label=args.decider)
    for p in args.p_grid:
        result.points.append(estimate_success_prob(model.with_p(p), decider, args.trials, args.seed, args.jobs))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SweepResult.CSV_HEADER)
    writer.writerows(result.csv_rows())
    _write_text(args.out, buf.getvalue())
    return 0


# fit


def _points_from_csv(path: str, target: float) -> list[tuple[float, float]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise UsageError(f"{path} has no data rows")
    fields = set(rows[0])
    try:
        if {"n", "p_hat"} <= fields:
            return [(float(r["n"]), float(r["p_hat"])) for r in rows]
        if {"n", "p", "trials", "successes"} <= fields:
            return _crossings(rows, target)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc
    raise UsageError(f"{path}: expected columns n,p_hat or a sweep CSV")


def _crossings(rows: list[dict], target: float) -> list[tuple[float, float]]:
    """Per n, the first p where the success rate reaches target, interpolated on log p."""
    by_n: dict[int, list[tuple[float, float]]] = {}
    for r in rows:
        trials = int(r["trials"])
        by_n.setdefault(int(r["n"]), []).append((float(r["p"]), int(r["successes"]) / trials))
    out = []
    for n, pts in sorted(by_n.items()):
        pts.sort()
        prev = None
        for p, rate in pts:
            if rate >= target:
                if prev is None or prev[0] <= 0:
                    out.append((float(n), p))
                else:
                    p0, t = prev[0], (target - prev[1]) / (rate - prev[1])
                    out.append((float(n), math.exp(math.log(p0) + t * (math.log(p) - math.log(p0)))))
                break
            prev = (p, rate)
        else:
            raise UsageError(f"sweep for n={n} never reaches success rate {target}")
    return out


def cmd_fit(args: argparse.Namespace) -> int:
    from .threshold import bisect_critical_p, fit_exponent, predicted_threshold

    probes = None
    if args.input is not None:
        points = _points_from_csv(args.input, args.target)
    else:
        if args.ns is None or args.alpha is None:
            raise UsageError("fit needs --in FILE or both --ns and --alpha")
        points, probes = [], []
        for n in args.ns:
            _check_decider_size(args, n)
            model, a, b = _model_for(args, n)
            decider = _decider_for(args, model.dense_part, a, b)
            lo = args.p_lo_scale * math.log(n) / n if args.p_lo is None else args.p_lo
            hi = min(1.0, args.p_hi_scale * math.log(n) / n) if args.p_hi is None else args.p_hi
            try:
                res = bisect_critical_p(model, decider, lo, hi, args.trials, args.seed, target=args.target, jobs=args.jobs)
            except ValueError as exc:
                raise UsageError(f"n={n}: {exc}") from exc
            points.append((float(n), res.p_hat))
            probes.append({"n": n, "p_hat": res.p_hat, "converged": res.converged, "probes": len(res.probes)})
    try:
        fit = fit_exponent(points)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    body = fit.to_json()
    if args.alpha is not None:
        pred = predicted_threshold(args.alpha, int(points[-1][0]))
        body["predicted_exponent"] = None if pred.zero else float(pred.exponent)
        body["predicted_log_exponent"] = float(pred.log_exponent)
    if probes is not None:
        body["bisection"] = probes
        body["label"] = f"{args.decider} threshold"
    _emit_json(_envelope(args, status="fitted", **body))
    return 0


# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perturb-lab", description="Square Hamilton cycles in randomly perturbed graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="base seed; all randomness derives from it")

    g = sub.add_parser("gen", help="write a graph in edge-list format")
    common(g)
    g.add_argument("--family", required=True, choices=["gnp", "gnp-multi", "gnp-digraph", "extremal", "stable"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=float)
    g.add_argument("--alpha", type=_fraction)
    g.add_argument("--beta", type=_fraction, default=Fraction(1, 100))
    g.add_argument("--noise", type=_fraction, default=Fraction(1, 1000))
    g.add_argument("--k", type=int, default=2, help="number of parts for gnp-multi")
    g.add_argument("--parts", type=_int_list, help="explicit part sizes for gnp-multi")
    g.add_argument("--out", default=None, help="output path (default stdout)")
    g.add_argument("--witness-out", default=None, help="witness JSON path for family stable")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="exact search for a square Hamilton cycle, path or 2-universality")
    common(s)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--target", choices=["cycle", "path", "universal"], default="cycle")
    s.add_argument("--left", type=_int_list)
    s.add_argument("--right", type=_int_list)
    s.add_argument("--budget", type=int, default=None, help="node expansion limit")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("certify", help="evaluate absence certificates for a partition (A, V - A)")
    common(c)
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--A", type=_int_list, required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--kind", choices=["any", "packing", "small-gap"], default="any")
    c.add_argument("--mode", choices=["count", "disjoint"], default="count")
    c.set_defaults(func=cmd_certify)

    e = sub.add_parser("embed", help="run the extremal embedding pipeline on a dense graph")
    common(e)
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--p", type=float, required=True)
    e.add_argument("--witness", default=None, help="stability witness JSON (searched for if absent)")
    e.add_argument("--beta", type=_fraction, default=Fraction(1, 100))
    e.add_argument("--aux-rounds", choices=["all", "round4"], default="all")
    e.set_defaults(func=cmd_embed)

    d = sub.add_parser("gadget", help="run the absorbing pipeline on a generated super-regular instance")
    common(d)
    d.add_argument("--mode", choices=["multipartite", "bipartite"], default="multipartite")
    d.add_argument("--k", type=int, default=2)
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--m", type=int, default=None)
    d.add_argument("--d", type=float, default=0.3)
    d.add_argument("--delta0", type=float, default=0.3)
    d.add_argument("--delta1", type=float, default=0.1)
    d.add_argument("--p", type=float, default=None)
    d.add_argument("--p-scale", type=float, default=None, help="p = scale * N^(-(k-1)/(2k-3)), or scale/n for bipartite")
    d.add_argument("--split-c", type=float, default=None)
    d.set_defaults(func=cmd_gadget)

    def experiment(p: argparse.ArgumentParser) -> None:
        p.add_argument("--decider", choices=["exact", "certificate", "extremal"], default="exact")
        p.add_argument("--dense", choices=["extremal", "stable"], default="extremal")
        p.add_argument("--k", type=int, default=2)
        p.add_argument("--trials", type=int, default=100)
        p.add_argument("--budget", type=int, default=None)
        p.add_argument("--jobs", type=int, default=_default_jobs(), help="worker processes (default $PERTURB_LAB_JOBS or 1)")

    w = sub.add_parser("sweep", help="success-probability sweep over a grid of p, CSV output")
    common(w)
    w.add_argument("--alpha", type=_fraction, required=True)
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--p-grid", type=_p_grid, required=True, help="lo:hi:count")
    w.add_argument("--out", default=None)
    experiment(w)
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="fit the exponent of p_hat against n")
    common(f)
    f.add_argument("--in", dest="input", default=None, help="CSV with n,p_hat or a sweep CSV")
    f.add_argument("--alpha", type=_fraction, default=None)
    f.add_argument("--ns", type=_int_list, default=None, help="run bisection at these n")
    f.add_argument("--target", type=float, default=0.5)
    f.add_argument("--p-lo", type=float, default=None)
    f.add_argument("--p-hi", type=float, default=None)
    f.add_argument("--p-lo-scale", type=float, default=0.05, help="p_lo = scale * ln n / n")
    f.add_argument("--p-hi-scale", type=float, default=20.0, help="p_hi = scale * ln n / n")
    experiment(f)
    f.set_defaults(func=cmd_fit)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be positive")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"perturb-lab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
