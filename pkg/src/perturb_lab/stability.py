"""The (alpha, beta)-stability predicate, a partition finder, and noisy stable fixtures."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .generators import as_fraction, extremal_bipartite, make_rng
from .graph import Graph, GraphBuilder, VertexSet, full_set, members

__all__ = [
    "StabilityWitness",
    "StabilityReport",
    "check_stable",
    "verify_stable",
    "find_stable_partition",
    "stable_instance",
]


@dataclass(frozen=True)
class StabilityWitness:
    a: VertexSet
    b: VertexSet
    alpha: Fraction
    beta: Fraction

    def to_json(self) -> dict:
        return {
            "A": members(self.a),
            "B": members(self.b),
            "alpha": str(self.alpha),
            "beta": str(self.beta),
        }

    @classmethod
    def from_json(cls, data: dict) -> "StabilityWitness":
        a = sum(1 << v for v in data["A"])
        b = sum(1 << v for v in data["B"])
        return cls(a, b, Fraction(data["alpha"]), Fraction(data["beta"]))


@dataclass(frozen=True)
class StabilityReport:
    """Per-condition outcome of the stability check."""

    sizes_ok: bool
    cross_min_degree_ok: bool
    low_a_ok: bool
    low_b_ok: bool
    b_edges_ok: bool
    low_a: int
    low_b: int
    b_edges: int
    cross_min_degree: int

    @property
    def ok(self) -> bool:
        return (
            self.sizes_ok
            and self.cross_min_degree_ok
            and self.low_a_ok
            and self.low_b_ok
            and self.b_edges_ok
        )


def check_stable(g: Graph, w: StabilityWitness) -> StabilityReport:
    n = g.n
    a, b = w.a, w.b
    if a & b or (a | b) != full_set(n):
        raise ValueError("witness must partition the vertex set")
    alpha, beta = as_fraction(w.alpha), as_fraction(w.beta)
    na, nb = a.bit_count(), b.bit_count()
    sizes_ok = (alpha - beta) * n <= na <= (alpha + beta) * n and (
        1 - alpha - beta
    ) * n <= nb <= (1 - alpha + beta) * n
    quarter = alpha * n / 4
    cross_min = n
    low_a = low_b = 0
    for v in members(a):
        d = (g.rows[v] & b).bit_count()
        cross_min = min(cross_min, d)
        if d < nb - beta * n:
            low_a += 1
    for v in members(b):
        d = (g.rows[v] & a).bit_count()
        cross_min = min(cross_min, d)
        if d < na - beta * n:
            low_b += 1
    b_edges = g.edges_within(b)
    return StabilityReport(
        sizes_ok=bool(sizes_ok),
        cross_min_degree_ok=cross_min >= quarter,
        low_a_ok=low_a <= beta * n,
        low_b_ok=low_b <= beta * n,
        b_edges_ok=b_edges <= beta * n * n,
        low_a=low_a,
        low_b=low_b,
        b_edges=b_edges,
        cross_min_degree=cross_min if n else 0,
    )


def verify_stable(g: Graph, w: StabilityWitness) -> bool:
    return check_stable(g, w).ok


def _size_range(alpha: Fraction, beta: Fraction, n: int) -> range:
    lo = max(0, math.ceil((alpha - beta) * n), n - math.floor((1 - alpha + beta) * n))
    hi = min(n, math.floor((alpha + beta) * n), n - math.ceil((1 - alpha - beta) * n))
    return range(lo, hi + 1)


def find_stable_partition(
    g: Graph, alpha, beta, budget: int = 10_000, exhaustive_limit: int = 16
) -> StabilityWitness | None:
    """Search for a stability witness; ``None`` is not a proof of instability."""
    alpha, beta = as_fraction(alpha), as_fraction(beta)
    n = g.n
    sizes = sorted(_size_range(alpha, beta, n), key=lambda s: abs(s - alpha * n))
    if not sizes:
        return None
    full = full_set(n)
    if n <= exhaustive_limit:
        for size in sizes:
            for combo in itertools.combinations(range(n), size):
                a = sum(1 << v for v in combo)
                w = StabilityWitness(a, full & ~a, alpha, beta)
                if verify_stable(g, w):
                    return w
        return None
    size = sizes[0]
    # A is the sparse side of a near-complete bipartite graph, so its vertices carry the
    # large degrees (about (1 - alpha) n); the low-degree seed is kept as a fallback
    by_degree = sorted(range(n), key=lambda v: (g.degree(v), v))
    for order in (by_degree[::-1], by_degree):
        w = _local_search(g, sum(1 << v for v in order[:size]), alpha, beta, budget)
        if w is not None:
            return w
    return None


def _local_search(g: Graph, a: VertexSet, alpha: Fraction, beta: Fraction, budget: int) -> StabilityWitness | None:
    full = full_set(g.n)
    b = full & ~a
    for _ in range(budget):
        w = StabilityWitness(a, b, alpha, beta)
        if verify_stable(g, w):
            return w
        # swap the pair whose move most reduces edges inside both sides
        best_a = max(members(a), key=lambda v: (g.rows[v] & a).bit_count() - (g.rows[v] & b).bit_count())
        best_b = max(members(b), key=lambda v: (g.rows[v] & b).bit_count() - (g.rows[v] & a).bit_count())
        gain_a = (g.rows[best_a] & a).bit_count() - (g.rows[best_a] & b).bit_count()
        gain_b = (g.rows[best_b] & b).bit_count() - (g.rows[best_b] & a).bit_count()
        if gain_a + gain_b + 2 * g.has_edge(best_a, best_b) <= 0:
            break
        a = (a & ~(1 << best_a)) | (1 << best_b)
        b = full & ~a
    w = StabilityWitness(a, b, alpha, beta)
    return w if verify_stable(g, w) else None


def stable_instance(alpha, beta, n: int, noise, seed: int) -> tuple[Graph, StabilityWitness]:
    """H_alpha plus random B-internal edges and guarded cross-edge deletions.

    The edge budget is round(noise n^2) for both steps (B-internal additions are
    further capped at floor(beta n^2)).  A deletion of cross edge ab is kept only
    if both endpoints keep degree >= |A|, the cross minimum degree stays >= alpha n/4,
    and the count of low-degree vertices on each side stays <= beta n.  The result
    therefore always passes :func:`verify_stable`; noise = 0 returns H_alpha exactly.
    """
    alpha, beta, noise = as_fraction(alpha), as_fraction(beta), as_fraction(noise)
    if not (0 < beta < alpha / 4):
        raise ValueError("need 0 < beta < alpha/4")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    h, a, b = extremal_bipartite(alpha, n)
    witness = StabilityWitness(a, b, alpha, beta)
    if not verify_stable(h, witness):
        raise ValueError("H_alpha itself violates the size condition for these parameters")
    budget = round(noise * n * n)
    if budget == 0:
        return h, witness
    rng = make_rng(seed, "stable_instance", n)
    builder = GraphBuilder.from_graph(h)
    a_list, b_list = members(a), members(b)
    na, nb = len(a_list), len(b_list)
    in_b = min(budget, math.floor(beta * n * n), nb * (nb - 1) // 2)
    added = 0
    while added < in_b:
        u, v = rng.sample(b_list, 2)
        if not builder.has_edge(u, v):
            builder.add_edge(u, v)
            added += 1
    cross = {v: (builder.row(v) & (b if (a >> v) & 1 else a)).bit_count() for v in range(n)}
    low_a_cut, low_b_cut = nb - beta * n, na - beta * n
    low_a = sum(1 for v in a_list if cross[v] < low_a_cut)
    low_b = sum(1 for v in b_list if cross[v] < low_b_cut)
    quarter = alpha * n / 4
    for _ in range(budget):
        u, v = rng.choice(a_list), rng.choice(b_list)
        if not builder.has_edge(u, v):
            continue
        if builder.degree(u) - 1 < na or builder.degree(v) - 1 < na:
            continue
        if cross[u] - 1 < quarter or cross[v] - 1 < quarter:
            continue
        new_low_a = low_a + (cross[u] >= low_a_cut and cross[u] - 1 < low_a_cut)
        new_low_b = low_b + (cross[v] >= low_b_cut and cross[v] - 1 < low_b_cut)
        if new_low_a > beta * n or new_low_b > beta * n:
            continue
        builder.remove_edge(u, v)
        cross[u] -= 1
        cross[v] -= 1
        low_a, low_b = new_low_a, new_low_b
    g = builder.build()
    assert verify_stable(g, witness)
    return g, witness
