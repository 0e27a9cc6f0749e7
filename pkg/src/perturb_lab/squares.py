"""Randomized searches for short square paths inside sampled random graphs.

These are the constructive counterparts of "a.a.s. the random graph contains
X inside every large set": each search runs on the actual sample and reports
failure explicitly.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .generators import derive_seed, gnp, make_rng
from .graph import Graph, VertexSet, full_set, members, union
from .powers import SquarePathPiece, square_path_pairs

__all__ = [
    "StageReport",
    "SearchBudget",
    "find_sequence",
    "linked_square_constraints",
    "is_linked_squares",
    "find_linked_squares",
    "search_linked_squares",
    "local_max_cut",
    "sublinear_regime_small",
    "find_sublinear_square_paths",
]


@dataclass
class StageReport:
    """Outcome of one pipeline stage; ``requirement`` names what was unmet on failure."""

    stage: str
    success: bool
    stats: dict = field(default_factory=dict)
    requirement: str | None = None
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "success": self.success,
            "stats": self.stats,
            "requirement": self.requirement,
            "seconds": round(self.seconds, 4),
        }


class SearchBudget:
    """Shared node-expansion allowance for a family of searches."""

    def __init__(self, limit: int | None):
        self.limit = limit
        self.used = 0

    def spend(self) -> bool:
        self.used += 1
        return self.limit is None or self.used <= self.limit


def find_sequence(
    rows: Sequence[int],
    allowed: Sequence[int],
    back: Sequence[Sequence[int]],
    rng: random.Random | None = None,
    budget: SearchBudget | int | None = None,
    forbidden: int = 0,
) -> list[int] | None:
    """Distinct vertices s_0..s_{L-1} with s_i in allowed[i] and s_i ~ s_j (in rows) for j in back[i]."""
    length = len(allowed)
    if not isinstance(budget, SearchBudget):
        budget = SearchBudget(budget)
    seq: list[int] = []

    def rec(used: int) -> bool | None:
        i = len(seq)
        if i == length:
            return True
        if not budget.spend():
            return None
        cands = allowed[i] & ~used
        for j in back[i]:
            cands &= rows[seq[j]]
        if not cands:
            return False
        order = members(cands)
        if rng is not None:
            rng.shuffle(order)
        for v in order:
            seq.append(v)
            res = rec(used | (1 << v))
            if res:
                return True
            seq.pop()
            if res is None:
                return None
        return False

    return list(seq) if rec(forbidden) else None


def linked_square_constraints(k: int, s: int, masks: Sequence[int]) -> tuple[list[int], list[list[int]]]:
    """Position constraints for s linked copies of P_k^2 with block i drawn from masks[i]."""
    if len(masks) != s:
        raise ValueError("one mask per block")
    allowed, back = [], []
    for i in range(s):
        for j in range(k):
            pos = i * k + j
            allowed.append(masks[i])
            if j == 0:
                back.append([pos - 1] if i > 0 else [])
            elif j == 1:
                back.append([pos - 1])
            else:
                back.append([pos - 1, pos - 2])
    return allowed, back


def is_linked_squares(sampled: Graph, seq: Sequence[int], k: int) -> bool:
    if len(seq) % k or len(set(seq)) != len(seq):
        return False
    s = len(seq) // k
    for i in range(s):
        block = seq[i * k:(i + 1) * k]
        for a, b in square_path_pairs(k):
            if not sampled.has_edge(block[a], block[b]):
                return False
        if i + 1 < s and not sampled.has_edge(block[-1], seq[(i + 1) * k]):
            return False
    return True


def find_linked_squares(
    tuple_collection: Iterable[Sequence[int]], sampled: Graph, k: int, seed: int | None = None, shuffle_limit: int = 100_000
) -> tuple[int, ...] | None:
    """First candidate tuple realizing s linked copies of P_k^2 in ``sampled``.

    With a seed, up to ``shuffle_limit`` candidates are drawn and scanned in random order.
    ``None`` means absent in this sample (not a structural impossibility).
    """
    if seed is not None:
        pool = []
        for cand in tuple_collection:
            pool.append(tuple(cand))
            if len(pool) >= shuffle_limit:
                break
        make_rng(seed, "linked_squares").shuffle(pool)
        tuple_collection = pool
    for cand in tuple_collection:
        if is_linked_squares(sampled, cand, k):
            return tuple(cand)
    return None


def search_linked_squares(
    sampled: Graph,
    k: int,
    s: int,
    masks: Sequence[int],
    rng: random.Random | None = None,
    budget: SearchBudget | int | None = 50_000,
) -> list[int] | None:
    """Backtracking version of :func:`find_linked_squares` over product-of-sets collections."""
    allowed, back = linked_square_constraints(k, s, masks)
    seq = find_sequence(sampled.rows, allowed, back, rng, budget)
    if seq is not None:
        assert is_linked_squares(sampled, seq, k)
    return seq


def local_max_cut(g: Graph, within: VertexSet, rng: random.Random) -> tuple[VertexSet, VertexSet]:
    """Partition of ``within`` where no single vertex move increases the cut."""
    verts = members(within)
    a = 0
    for v in verts:
        if rng.random() < 0.5:
            a |= 1 << v
    b = within & ~a
    improved = True
    while improved:
        improved = False
        for v in verts:
            own, other = (a, b) if (a >> v) & 1 else (b, a)
            if (g.rows[v] & own).bit_count() > (g.rows[v] & other).bit_count():
                bit = 1 << v
                a ^= bit
                b ^= bit
                improved = True
    return a, b


def sublinear_regime_small(n: int, k: int, m: int) -> bool:
    """True when m <= (log n)^(2/(2k-3)) n^((2k-4)/(2k-3)): pure random copies suffice."""
    return m <= math.log(n) ** (2 / (2 * k - 3)) * n ** ((2 * k - 4) / (2 * k - 3))


def _hub_constraints(k: int, hub_nbrs: int, rest: int) -> tuple[list[int], list[list[int]]]:
    """Sequence b1..bk of random edges for the hub construction b1, b2, v, b3, ..., bk."""
    allowed, back = [], []
    for i in range(k):
        allowed.append(hub_nbrs if i < 4 else rest)
        req = [i - 1] if i >= 1 else []
        # b_i b_{i+2} for i = 3..k-2 (1-indexed) means position j >= 4 links back two
        if i >= 4:
            req.append(i - 2)
        back.append(req)
    return allowed, back


def _hub_sequence(k: int, v: int, bs: Sequence[int]) -> list[int]:
    if k == 2:
        return [bs[0], v, bs[1]]
    return [bs[0], bs[1], v] + list(bs[2:])


def find_sublinear_square_paths(
    g: Graph,
    k: int,
    t: int,
    p: float,
    seed: int,
    *,
    within: VertexSet | None = None,
    count: int | None = None,
    random_graph: Graph | None = None,
    budget: int = 200_000,
) -> list[SquarePathPiece] | StageReport:
    """Find t*m + t (or ``count``) disjoint copies of P_{k+1}^2 in (g u G(n,p))[within].

    m is the minimum degree of g[within].  Small m: copies use random edges only.
    Large m: one vertex v of each copy is a hub whose edges come from g across a
    locally maximal cut, the remaining edges are random.
    """
    n = g.n
    within = full_set(n) if within is None else within
    verts = members(within)
    if not verts:
        return StageReport("sublinear_square_paths", False, {}, "empty vertex set")
    m = min((g.rows[v] & within).bit_count() for v in verts)
    need = t * m + t if count is None else count
    rng = make_rng(seed, "sublinear", k)
    rnd = random_graph if random_graph is not None else gnp(n, p, derive_seed(seed, "sublinear_random", 0))
    shared = SearchBudget(budget)
    pieces: list[SquarePathPiece] = []
    used = 0
    small = sublinear_regime_small(max(n, 2), k, max(m, 1))
    stats = {"m": m, "needed": need, "regime": "random" if small else "hub"}
    if need == 0:
        return pieces
    layers = [("deterministic", g), ("random", rnd)]
    if small:
        pairs = square_path_pairs(k + 1)
        back = [[i for i, j in pairs if j == pos] for pos in range(k + 1)]
        while len(pieces) < need:
            free = within & ~used
            seq = find_sequence(rnd.rows, [free] * (k + 1), back, rng, shared)
            if seq is None:
                stats.update(found=len(pieces), expansions=shared.used)
                return StageReport("sublinear_square_paths", False, stats, "no random P_{k+1}^2 in the unused vertices")
            pieces.append(SquarePathPiece(seq))
            for v in seq:
                used |= 1 << v
    else:
        side_a, side_b = local_max_cut(g, within, rng)
        if side_a.bit_count() > side_b.bit_count():
            side_a, side_b = side_b, side_a
        hub_failed = 0
        while len(pieces) < need:
            free_a = side_a & ~used & ~hub_failed
            free_b = side_b & ~used
            if not free_a:
                stats.update(found=len(pieces), expansions=shared.used)
                return StageReport("sublinear_square_paths", False, stats, "no hub vertex admits a random completion")
            v = max(members(free_a), key=lambda u: ((g.rows[u] & free_b).bit_count(), -u))
            nbrs = g.rows[v] & free_b
            if k == 2:
                allowed, back = [nbrs, nbrs], [[], [0]]
            elif k == 3:
                allowed, back = [nbrs] * 3, [[], [0], [1]]
            else:
                allowed, back = _hub_constraints(k, nbrs, free_b)
            bs = find_sequence(rnd.rows, allowed, back, rng, shared)
            if bs is None:
                if shared.limit is not None and shared.used > shared.limit:
                    stats.update(found=len(pieces), expansions=shared.used)
                    return StageReport("sublinear_square_paths", False, stats, "search budget exhausted")
                hub_failed |= 1 << v
                continue
            seq = _hub_sequence(k, v, bs)
            pieces.append(SquarePathPiece(seq))
            for u in seq:
                used |= 1 << u
    host = union(g, rnd)
    for piece in pieces:
        assert piece.verify(host)
        piece.tag_edges(layers)
    return pieces
