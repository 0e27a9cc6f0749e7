"""Square Hamilton paths through super-regular multipartite configurations.

Layout of an instance: V occupies vertices 0..n+3, followed by the classes
U_1..U_k as consecutive blocks of size m.  The deterministic graph only has
edges between V and each U_i.  Random edges come in three rounds: G0 and G1
inside U_1 u ... u U_k (k-partite, p/2 each) and G2 inside V.

The constructed path reads

    x', x, H_x, [a b z c d], H', [a b z c d], H_x', v, H_2, v, ..., H_y',
    [a b z c d], ..., [a b z c d], H_y, y, y'

where each H is a transversal P_k^2 copy in a random round, each v is a
V-vertex assigned by a matching, and each bracket absorbs one uncovered
U-vertex z with a random 4-vertex path a-b-c-d inside V.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .generators import dense_bipartite, derive_seed, gnp_multipartite, gnp_on_set, make_rng
from .graph import Graph, VertexSet, members, union
from .matching import hall_violator, hopcroft_karp
from .powers import square_path_pairs, verify_square_path
from .squares import (
    SearchBudget,
    StageReport,
    find_linked_squares,
    find_sequence,
    find_sublinear_square_paths,
)

__all__ = [
    "SuperRegularInstance",
    "gen_super_regular_instance",
    "admissible_sizes",
    "Bookkeeping",
    "bookkeeping",
    "AuxHypergraphF",
    "build_F",
    "sample_F_tilde",
    "Rounds",
    "sample_rounds",
    "TransversalFamily",
    "random_greedy_transversal",
    "LinkGraphs",
    "build_linkgraphs",
    "DFSResult",
    "dfs_random_greedy_path",
    "Absorption",
    "absorb_leftover",
    "final_matching",
    "MultipartiteResult",
    "run_multipartite_pipeline",
    "split_probabilities",
    "BipartiteInstance",
    "gen_bipartite_instance",
    "run_bipartite_pipeline",
    "find_linked_squares",
    "find_sublinear_square_paths",
]


# instances


def admissible_sizes(k: int, n: int, delta0: float, delta1: float) -> list[int]:
    """Sizes m with (1-delta0)n <= m <= (1-delta1)n that balance the construction exactly."""
    lo = math.ceil((1 - delta0) * n - 1e-9)
    hi = math.floor((1 - delta1) * n + 1e-9)
    return [m for m in range(max(lo, 1), hi + 1) if (n - m + 1) % (3 * k - 1) == 0 and k * (n - m + 1) // (3 * k - 1) >= 3]


@dataclass(frozen=True)
class SuperRegularInstance:
    k: int
    n: int
    m: int
    d: float
    delta0: float
    delta1: float
    graph: Graph
    x_tuple: tuple[int, int]
    y_tuple: tuple[int, int]
    seed: int = 0

    @property
    def size_v(self) -> int:
        return self.n + 4

    @property
    def v_mask(self) -> VertexSet:
        return (1 << self.size_v) - 1

    def u_start(self, i: int) -> int:
        """First vertex of U_{i+1} (0-indexed class i)."""
        return self.size_v + i * self.m

    def u_mask(self, i: int) -> VertexSet:
        return ((1 << self.m) - 1) << self.u_start(i)

    @property
    def u_all(self) -> VertexSet:
        return ((1 << (self.k * self.m)) - 1) << self.size_v

    def class_of(self, v: int) -> int:
        """-1 for V, otherwise the 0-indexed U class."""
        if v < self.size_v:
            return -1
        return (v - self.size_v) // self.m

    def common_v(self, vs) -> VertexSet:
        out = self.v_mask
        for v in vs:
            out &= self.graph.rows[v]
        return out

    def min_degree_ok(self) -> bool:
        g = self.graph
        for i in range(self.k):
            um = self.u_mask(i)
            floor_u = self.d * self.m - 1e-9
            floor_v = self.d * self.size_v - 1e-9
            if any((g.rows[v] & um).bit_count() < floor_u for v in range(self.size_v)):
                return False
            if any((g.rows[u] & self.v_mask).bit_count() < floor_v for u in members(um)):
                return False
        return True

    def tuples_ok(self) -> bool:
        need = self.d * self.d * self.n / 2
        for a, b in (self.x_tuple, self.y_tuple):
            common = self.graph.rows[a] & self.graph.rows[b]
            if any((common & self.u_mask(i)).bit_count() < need for i in range(self.k)):
                return False
        return True

    def density_diagnostic(self, samples: int = 100, seed: int = 0) -> float:
        """Smallest edge density seen over random sub-pairs of half size (a cheap proxy for regularity)."""
        rng = make_rng(seed, "density_diag", self.n)
        worst = 1.0
        vs = list(range(self.size_v))
        for _ in range(samples):
            i = rng.randrange(self.k)
            us = members(self.u_mask(i))
            a = rng.sample(vs, max(1, len(vs) // 2))
            b = sum(1 << u for u in rng.sample(us, max(1, len(us) // 2)))
            e = sum((self.graph.rows[v] & b).bit_count() for v in a)
            worst = min(worst, e / (len(a) * b.bit_count()))
        return worst


def gen_super_regular_instance(
    k: int,
    n: int,
    d: float,
    delta0: float,
    delta1: float,
    seed: int,
    m: int | None = None,
    max_resample: int = 20,
) -> SuperRegularInstance:
    """Random bipartite pairs (V, U_i) of density min(2d, 1) with degree floors enforced by resampling.

    Without an explicit m the smallest admissible size is used.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if not 0 < d <= 1:
        raise ValueError("d must lie in (0, 1]")
    if not (0 < delta1 and 2 * delta1 < delta0 < 1):
        raise ValueError("need 0 < 2*delta1 < delta0 < 1")
    sizes = admissible_sizes(k, n, delta0, delta1)
    if m is None:
        if not sizes:
            raise ValueError("no admissible size for these parameters")
        m = sizes[0]
    elif m not in sizes:
        raise ValueError(f"m = {m} is not admissible")
    density = min(2 * d, 1.0)
    size_v = n + 4
    total = size_v + k * m
    for attempt in range(max_resample):
        rows = [0] * total
        for i in range(k):
            part = dense_bipartite(total, range(size_v), size_v + i * m, m, density, derive_seed(seed, f"pair{i}", attempt))
            for v in range(total):
                rows[v] |= part[v]
        g = Graph(total, tuple(rows))
        inst = SuperRegularInstance(k, n, m, d, delta0, delta1, g, (0, 1), (2, 3), seed)
        if not inst.min_degree_ok():
            continue
        tuples = _pick_end_tuples(inst, make_rng(seed, "end_tuples", attempt))
        if tuples is None:
            continue
        return SuperRegularInstance(k, n, m, d, delta0, delta1, g, tuples[0], tuples[1], seed)
    raise RuntimeError("resample limit exceeded")


def _pick_end_tuples(inst: SuperRegularInstance, rng: random.Random):
    need = inst.d * inst.d * inst.n / 2
    g = inst.graph
    vs = list(range(inst.size_v))
    chosen: list[tuple[int, int]] = []
    used: set[int] = set()
    for _ in range(200):
        a, b = rng.sample(vs, 2)
        if a in used or b in used:
            continue
        common = g.rows[a] & g.rows[b]
        if all((common & inst.u_mask(i)).bit_count() >= need for i in range(inst.k)):
            chosen.append((a, b))
            used.update((a, b))
            if len(chosen) == 2:
                return chosen
    return None


# bookkeeping


@dataclass(frozen=True)
class Bookkeeping:
    """Exact set sizes: m0 copies, t of them on the path D, |Z| absorbed vertices."""

    k: int
    n: int
    m: int
    z_per_class: int
    m0: int
    t: int
    leftover_copies: int
    z_total: int

    def check(self) -> None:
        k, n, m = self.k, self.n, self.m
        assert (3 * k - 1) * self.z_per_class == n - m + 1
        assert self.m0 == m - 2 - self.z_per_class
        assert self.z_total == k * self.z_per_class
        assert self.leftover_copies == self.m0 - self.t == self.z_total - 2
        # V = {x, x', y, y'} + four per absorbed vertex + one per arc of D
        assert 4 + 4 * self.z_total + (self.t - 1) == n + 4
        # U = anchors + copies + absorbed vertices
        assert k * (2 + self.m0) + self.z_total == k * m

    def to_json(self) -> dict:
        return {
            "m0": self.m0,
            "t": self.t,
            "s": self.leftover_copies,
            "|Z|": self.z_total,
            "z_per_class": self.z_per_class,
        }


def bookkeeping(k: int, n: int, m: int) -> Bookkeeping:
    if (n - m + 1) % (3 * k - 1):
        raise ValueError("n - m + 1 must be divisible by 3k - 1")
    z = (n - m + 1) // (3 * k - 1)
    m0 = m - 2 - z
    t = m - (k + 1) * z
    bk = Bookkeeping(k, n, m, z, m0, t, m0 - t, k * z)
    bk.check()
    return bk


# auxiliary hypergraphs


@dataclass
class AuxHypergraphF:
    """Membership oracle for F (and optionally F tilde) over U_1 x ... x U_k."""

    inst: SuperRegularInstance
    sampled: Graph | None = None
    good_for: VertexSet | None = None

    @property
    def threshold(self) -> float:
        return 0.5 * self.inst.d ** self.inst.k * self.inst.size_v

    def in_F(self, tup: Sequence[int]) -> bool:
        inst = self.inst
        common = inst.common_v(tup)
        if common.bit_count() < self.threshold:
            return False
        if self.good_for is not None:
            x = self.good_for
            if (common & x).bit_count() < 0.5 * inst.d ** inst.k * x.bit_count():
                return False
        return True

    def spans_pattern(self, tup: Sequence[int]) -> bool:
        if self.sampled is None:
            return True
        rows = self.sampled.rows
        return all((rows[tup[a]] >> tup[b]) & 1 for a, b in square_path_pairs(len(tup)))

    def __contains__(self, tup: Sequence[int]) -> bool:
        if len(tup) != self.inst.k:
            return False
        for i, u in enumerate(tup):
            if self.inst.class_of(u) != i:
                return False
        return self.spans_pattern(tup) and self.in_F(tup)

    def edges(self, allowed: Sequence[VertexSet] | None = None):
        """Iterate F tilde edges (requires a sample); allowed[i] restricts class i."""
        if self.sampled is None:
            raise ValueError("enumeration is only supported for F tilde")
        k = self.inst.k
        allowed = [self.inst.u_mask(i) for i in range(k)] if allowed is None else allowed
        rows = self.sampled.rows
        back = [[j for j in (i - 1, i - 2) if j >= 0] for i in range(k)]
        seq: list[int] = []

        def rec(i: int):
            if i == k:
                if self.in_F(seq):
                    yield tuple(seq)
                return
            cands = allowed[i]
            for j in back[i]:
                cands &= rows[seq[j]]
            for v in members(cands):
                seq.append(v)
                yield from rec(i + 1)
                seq.pop()

        yield from rec(0)

    def edge_count(self) -> int:
        """Exact number of edges; F itself is counted only for k = 2."""
        if self.sampled is not None:
            return sum(1 for _ in self.edges())
        if self.inst.k != 2 or self.good_for is not None:
            raise ValueError("exact e(F) is implemented for plain k = 2 only")
        counts = _pair_common_counts(self.inst)
        return int((counts >= self.threshold).sum())

    def degrees_k2(self) -> np.ndarray:
        """Degree in F of every vertex of U_1 then U_2 (k = 2, plain F)."""
        if self.inst.k != 2 or self.sampled is not None:
            raise ValueError("degrees are computed for plain F with k = 2")
        ok = _pair_common_counts(self.inst) >= self.threshold
        return np.concatenate([ok.sum(axis=1), ok.sum(axis=0)])


def _v_matrix(inst: SuperRegularInstance, i: int) -> np.ndarray:
    size_v = inst.size_v
    out = np.zeros((inst.m, size_v), dtype=np.float32)
    for r, u in enumerate(members(inst.u_mask(i))):
        row = inst.graph.rows[u] & inst.v_mask
        bits = np.frombuffer(row.to_bytes((size_v + 7) // 8, "little"), dtype=np.uint8)
        out[r] = np.unpackbits(bits, bitorder="little")[:size_v]
    return out


def _pair_common_counts(inst: SuperRegularInstance) -> np.ndarray:
    a, b = _v_matrix(inst, 0), _v_matrix(inst, 1)
    return a @ b.T


def build_F(inst: SuperRegularInstance, good_for: VertexSet | None = None) -> AuxHypergraphF:
    return AuxHypergraphF(inst, None, good_for)


def sample_F_tilde(inst: SuperRegularInstance, p: float, seed: int) -> AuxHypergraphF:
    """F tilde supported by a fresh k-partite G(U_1, ..., U_k, p)."""
    return AuxHypergraphF(inst, _multipartite_round(inst, p, seed, "F_tilde"))


# random rounds


def _multipartite_round(inst: SuperRegularInstance, p: float, seed: int, label: str) -> Graph:
    parts = gnp_multipartite([inst.m] * inst.k, p, derive_seed(seed, label, 0))
    return _shift(parts, inst.size_v, inst.graph.n)


def _shift(g: Graph, offset: int, n: int) -> Graph:
    rows = [0] * n
    for v, r in enumerate(g.rows):
        rows[v + offset] = r << offset
    return Graph(n, tuple(rows))


@dataclass(frozen=True)
class Rounds:
    g0: Graph  # anchors H_x, H_y
    g1: Graph  # transversal family and the arcs of D
    g2: Graph  # 4-vertex paths inside V


def sample_rounds(inst: SuperRegularInstance, p: float, seed: int) -> Rounds:
    g0 = _multipartite_round(inst, p / 2, seed, "round0")
    g1 = _multipartite_round(inst, p / 2, seed, "round1")
    g2 = gnp_on_set(inst.graph.n, inst.v_mask, p, derive_seed(seed, "round2", 0))
    return Rounds(g0, g1, g2)


# transversal family


@dataclass
class TransversalFamily:
    copies: list[tuple[int, ...]]
    t_rows: list[VertexSet]  # common V-neighbourhood of each copy (its row in T)
    target: int
    available: int = 0

    def __len__(self) -> int:
        return len(self.copies)

    @property
    def mask(self) -> VertexSet:
        out = 0
        for c in self.copies:
            for v in c:
                out |= 1 << v
        return out

    def t_degree_floor(self, inst: SuperRegularInstance) -> float:
        h = inst.k
        return inst.d ** (h + 1) * 2.0 ** (-h - 3) * inst.size_v

    def t_degrees_ok(self, inst: SuperRegularInstance) -> bool:
        floor = self.t_degree_floor(inst)
        return all(r.bit_count() >= floor for r in self.t_rows)


def random_greedy_transversal(
    inst: SuperRegularInstance,
    p: float,
    target_fraction: float,
    seed: int,
    *,
    sampled: Graph | None = None,
    exclude: VertexSet = 0,
    target: int | None = None,
) -> TransversalFamily | StageReport:
    """Uniform random greedy choice of disjoint F tilde edges.

    Processing all F tilde edges in a uniformly random order and keeping those
    disjoint from earlier choices picks, at every step, a uniform edge among
    those still available.
    """
    sampled = sampled if sampled is not None else _multipartite_round(inst, p, seed, "family")
    aux = AuxHypergraphF(inst, sampled)
    allowed = [inst.u_mask(i) & ~exclude for i in range(inst.k)]
    size = min(a.bit_count() for a in allowed)
    goal = target if target is not None else math.floor(target_fraction * size)
    edges = list(aux.edges(allowed))
    make_rng(seed, "greedy_transversal").shuffle(edges)
    used = 0
    copies: list[tuple[int, ...]] = []
    for e in edges:
        if len(copies) >= goal:
            break
        mask = sum(1 << v for v in e)
        if not mask & used:
            copies.append(e)
            used |= mask
    if len(copies) < goal:
        return StageReport(
            "transversal_family",
            False,
            {"achieved": len(copies), "target": goal, "available_edges": len(edges)},
            "random greedy starved before reaching the target",
        )
    return TransversalFamily(copies, [inst.common_v(c) for c in copies], goal, len(edges))


# link graphs and the directed path


@dataclass
class LinkGraphs:
    inst: SuperRegularInstance
    family: TransversalFamily
    sampled: Graph
    threshold: float
    _first_index: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._first_index = {c[0]: i for i, c in enumerate(self.family.copies)}

    def fstar_edge(self, i: int, j: int) -> bool:
        rows = self.family.t_rows
        return i != j and (rows[i] & rows[j]).bit_count() >= self.threshold

    def arc(self, i: int, j: int) -> bool:
        ci, cj = self.family.copies[i], self.family.copies[j]
        return self.fstar_edge(i, j) and self.sampled.has_edge(ci[-1], cj[0])

    def out_arcs(self, i: int) -> list[int]:
        last = self.family.copies[i][-1]
        out = []
        for u in members(self.sampled.rows[last] & self.inst.u_mask(0)):
            j = self._first_index.get(u)
            if j is not None and self.fstar_edge(i, j):
                out.append(j)
        return out

    def fstar_degrees(self) -> np.ndarray:
        size_v = self.inst.size_v
        mat = np.zeros((len(self.family), size_v), dtype=np.float32)
        for r, row in enumerate(self.family.t_rows):
            bits = np.frombuffer(row.to_bytes((size_v + 7) // 8, "little"), dtype=np.uint8)
            mat[r] = np.unpackbits(bits, bitorder="little")[:size_v]
        ok = (mat @ mat.T) >= self.threshold
        np.fill_diagonal(ok, False)
        return ok.sum(axis=1)


def build_linkgraphs(
    family: TransversalFamily, inst: SuperRegularInstance, p: float, seed: int, sampled: Graph | None = None
) -> LinkGraphs:
    """F* by common-neighbourhood counts; arcs of F bar use the edge u_k u'_1 of a round at p/2."""
    if not family.copies:
        raise ValueError("family is empty")
    k = inst.k
    sampled = sampled if sampled is not None else _multipartite_round(inst, p / 2, seed, "link")
    thr = inst.d ** (2 * k + 2) * 2.0 ** (-2 * k - 7) * inst.n
    return LinkGraphs(inst, family, sampled, thr)


@dataclass
class DFSResult:
    path: list[int] | None
    dead_ends: int
    length_at_stop: int
    steps: int

    @property
    def success(self) -> bool:
        return self.path is not None


def dfs_random_greedy_path(links: LinkGraphs, t: int, seed: int, eps_prime: float = 0.02) -> DFSResult:
    """Depth-first random greedy exploration of F bar, revealing arcs only when needed."""
    size = len(links.family)
    if t > size:
        raise ValueError("t exceeds the family size")
    rng = make_rng(seed, "dfs_path")
    limit = eps_prime * links.inst.n
    path: list[int] = []
    on_path = [False] * size
    dead = [False] * size
    revisited = [False] * size
    revealed: dict[int, list[int]] = {}
    dead_count = 0
    steps = 0
    order = list(range(size))
    rng.shuffle(order)
    while len(path) < t and dead_count < limit:
        steps += 1
        if not path:
            start = next((h for h in order if not dead[h]), None)
            if start is None:
                break
            path.append(start)
            on_path[start] = True
            continue
        cur = path[-1]
        if not revisited[cur]:
            succ = [j for j in links.out_arcs(cur) if not on_path[j] and not dead[j]]
            revealed[cur] = succ
            nxt = rng.choice(succ) if succ else None
        else:
            nxt = next((j for j in revealed.get(cur, ()) if not on_path[j] and not dead[j]), None)
        if nxt is None:
            path.pop()
            on_path[cur] = False
            dead[cur] = True
            dead_count += 1
            if path:
                revisited[path[-1]] = True
            continue
        path.append(nxt)
        on_path[nxt] = True
    if len(path) < t:
        return DFSResult(None, dead_count, len(path), steps)
    for a, b in zip(path, path[1:]):
        assert links.arc(a, b), "path arc violates the F bar rule"
    return DFSResult(path, dead_count, len(path), steps)


# absorption


@dataclass
class Absorption:
    x_segment: list[int]  # from the first vertex of H_x up to just before H_x'
    y_segment: list[int]  # from just after H_y' through the last vertex of H_y
    used_v: VertexSet
    absorbed: int


def _p4_in(g2: Graph, allowed: VertexSet, rng: random.Random, budget: SearchBudget) -> list[int] | None:
    return find_sequence(g2.rows, [allowed] * 4, [[], [0], [1], [2]], rng, budget)


def absorb_leftover(
    inst: SuperRegularInstance,
    anchors: tuple[tuple[int, ...], tuple[int, ...]],
    family: TransversalFamily,
    path: Sequence[int],
    z_set: VertexSet,
    g2: Graph,
    seed: int,
    threshold: float | None = None,
    budget: int = 200_000,
) -> Absorption | StageReport:
    """Two connectors: H_x -> H' -> H_x' absorbing two vertices of Z, and H_y' -> ... -> H_y absorbing the rest."""
    rng = make_rng(seed, "absorb")
    k = inst.k
    reserved = inst.v_mask & ~(
        (1 << inst.x_tuple[0]) | (1 << inst.x_tuple[1]) | (1 << inst.y_tuple[0]) | (1 << inst.y_tuple[1])
    )
    # measured against V minus the end tuples, which connectors may never use
    thr = inst.d ** (2 * k + 1) * reserved.bit_count() if threshold is None else threshold
    thr = max(thr, 4)
    h_x, h_y = anchors
    copies = family.copies
    on_path = set(path)
    leftover = [i for i in range(len(copies)) if i not in on_path]
    zs = members(z_set)
    if len(leftover) != len(zs) - 2:
        raise ValueError(f"{len(leftover)} leftover copies but |Z| = {len(zs)}")
    free_v = reserved
    shared = SearchBudget(budget)
    stats = {"|Z|": len(zs), "leftover": len(leftover), "threshold": thr}

    def common(*groups) -> VertexSet:
        out = free_v
        for grp in groups:
            for v in grp:
                out &= inst.graph.rows[v]
        return out

    h_first, h_last = copies[path[0]], copies[path[-1]]
    # x side: pick H' and two z's maximising the free common neighbourhoods
    best = None
    for li in leftover:
        hp = copies[li]
        scored = sorted(zs, key=lambda z: -common(h_x, (z,), hp).bit_count())
        for zx in scored[:5]:
            for zx2 in sorted((z for z in zs if z != zx), key=lambda z: -common(hp, (z,), h_first).bit_count())[:5]:
                score = min(common(h_x, (zx,), hp).bit_count(), common(hp, (zx2,), h_first).bit_count())
                if best is None or score > best[0]:
                    best = (score, li, zx, zx2)
    if best is None or best[0] < thr:
        return StageReport("absorb", False, stats, "no H' and z pair with a large common neighbourhood")
    _, li_x, zx, zx2 = best
    x_segment: list[int] = list(h_x)
    for left, z, right in ((h_x, zx, copies[li_x]), (copies[li_x], zx2, h_first)):
        p4 = _p4_in(g2, common(left, (z,), right), rng, shared)
        if p4 is None:
            return StageReport("absorb", False, stats, "no random 4-vertex path in V for the x connector")
        a, b, c, d = p4
        free_v &= ~sum(1 << v for v in p4)
        x_segment.extend([a, b, z, c, d])
        if right is not h_first:
            x_segment.extend(right)
    # y side chain H_y', ..., H_y with consecutive pairs linked in F*
    rest = [i for i in leftover if i != li_x]
    chain = _order_chain(inst, h_last, [copies[i] for i in rest], h_y, rng)
    if chain is None:
        return StageReport("absorb", False, stats, "could not order the leftover copies")
    gaps = list(zip(chain, chain[1:]))
    z_rest = [z for z in zs if z not in (zx, zx2)]
    sizes = []
    for left, right in gaps:
        base = common(left, right)
        sizes.append([(base & inst.graph.rows[z]).bit_count() for z in z_rest])

    def match_at(level: float):
        adj = [[j for j, c in enumerate(row) if c >= level] for row in sizes]
        return adj, hopcroft_karp(len(gaps), len(z_rest), adj)

    adj, match = match_at(thr)
    if -1 in match:
        bad = hall_violator(len(gaps), adj, match, len(z_rest))
        stats["hall_set_size"] = len(bad)
        return StageReport("absorb", False, stats, "no matching of absorbed vertices to chain gaps")
    # raise the level as far as a perfect matching survives (bottleneck matching)
    levels = sorted({c for row in sizes for c in row if c > thr})
    lo, hi = 0, len(levels) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        adj_m, match_m = match_at(levels[mid])
        if -1 in match_m:
            hi = mid - 1
        else:
            match, lo = match_m, mid + 1
            stats["level"] = levels[mid]
    placed: dict[int, list[int]] = {}
    # embed the tightest gaps first while V is still mostly free
    order = sorted(range(len(gaps)), key=lambda gi: sizes[gi][match[gi]])
    level = stats.get("level", thr)
    swaps = 0
    for pos, gi in enumerate(order):
        left, right = gaps[gi]
        z = z_rest[match[gi]]
        p4 = _p4_in(g2, common(left, (z,), right), rng, shared)
        if p4 is None:
            # repair: trade z with a vertex assigned to a gap that is not embedded yet
            for gj in order[pos + 1:]:
                zj = match[gj]
                if sizes[gi][zj] < level or sizes[gj][match[gi]] < level:
                    continue
                p4 = _p4_in(g2, common(left, (z_rest[zj],), right), rng, shared)
                if p4 is not None:
                    match[gi], match[gj] = zj, match[gi]
                    swaps += 1
                    break
        if p4 is None:
            stats.update(gap=gi, embedded=len(placed), swaps=swaps)
            return StageReport("absorb", False, stats, "no random 4-vertex path in V for a chain gap")
        free_v &= ~sum(1 << v for v in p4)
        placed[gi] = p4
    stats["swaps"] = swaps
    y_segment: list[int] = []
    for gi, (left, right) in enumerate(gaps):
        a, b, c, d = placed[gi]
        y_segment.extend([a, b, z_rest[match[gi]], c, d])
        y_segment.extend(right)
    used_v = reserved & ~free_v
    return Absorption(x_segment, y_segment, used_v, len(zs))


def _order_chain(inst, start, middle, end, rng: random.Random, attempts: int = 50):
    """Order ``middle`` between start and end so consecutive copies share enough V-neighbours."""
    thr = inst.d ** (2 * inst.k + 2) * 2.0 ** (-2 * inst.k - 7) * inst.n

    def ok(a, b) -> bool:
        return inst.common_v(tuple(a) + tuple(b)).bit_count() >= thr

    for _ in range(attempts):
        remaining = list(middle)
        rng.shuffle(remaining)
        chain = [start]
        stuck = False
        while remaining:
            for idx, c in enumerate(remaining):
                if ok(chain[-1], c) and (len(remaining) > 1 or ok(c, end)):
                    chain.append(remaining.pop(idx))
                    break
            else:
                stuck = True
                break
        if not stuck and ok(chain[-1], end):
            return chain + [end]
    return None


def final_matching(
    inst: SuperRegularInstance, family: TransversalFamily, path: Sequence[int], v_remaining: VertexSet
) -> dict[int, int] | StageReport:
    """Assign to each arc (H, H') of D a V-vertex adjacent to every vertex of H and H'."""
    arcs = list(zip(path, path[1:]))
    vs = members(v_remaining)
    if len(vs) != len(arcs):
        raise ValueError(f"{len(vs)} remaining V-vertices but {len(arcs)} arcs")
    index = {v: i for i, v in enumerate(vs)}
    rows = family.t_rows
    adj = [[index[v] for v in members(rows[a] & rows[b] & v_remaining)] for a, b in arcs]
    match = hopcroft_karp(len(arcs), len(vs), adj)
    if -1 in match:
        bad = hall_violator(len(arcs), adj, match, len(vs))
        return StageReport("final_matching", False, {"hall_set": bad[:50], "hall_set_size": len(bad)}, "no perfect matching")
    out = {}
    g = inst.graph
    for i, (a, b) in enumerate(arcs):
        v = vs[match[i]]
        ca, cb = family.copies[a], family.copies[b]
        assert all(g.has_edge(v, u) for u in (ca[-2], ca[-1], cb[0], cb[1]))
        out[i] = v
    return out


# the multipartite pipeline


@dataclass
class MultipartiteResult:
    success: bool
    sequence: list[int] | None
    reports: list[StageReport]
    bookkeeping: Bookkeeping | None = None

    @property
    def failed_stage(self) -> str | None:
        return next((r.stage for r in self.reports if not r.success), None)

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "failed_stage": self.failed_stage,
            "bookkeeping": self.bookkeeping.to_json() if self.bookkeeping else None,
            "stages": [r.to_json() for r in self.reports],
            "length": len(self.sequence) if self.sequence else 0,
        }


def _find_anchor(inst, aux: AuxHypergraphF, allowed: Sequence[VertexSet], rng, budget: SearchBudget):
    k = inst.k
    rows = aux.sampled.rows
    back = [[j for j in (i - 1, i - 2) if j >= 0] for i in range(k)]
    for _ in range(20):
        seq = find_sequence(rows, allowed, back, rng, budget)
        if seq is None:
            return None
        if aux.in_F(seq):
            return tuple(seq)
        allowed = [a & ~(1 << v) if i == 0 else a for i, (a, v) in enumerate(zip(allowed, seq))]
    return None


def run_multipartite_pipeline(
    inst: SuperRegularInstance,
    p: float,
    seed: int,
    *,
    rounds: Rounds | None = None,
    eps_prime: float = 0.02,
    absorb_threshold: float | None = None,
) -> MultipartiteResult:
    """Square Hamilton path covering V u U_1 u ... u U_k with end tuples (x, x') and (y, y')."""
    import time

    k = inst.k
    reports: list[StageReport] = []
    result = MultipartiteResult(False, None, reports)
    bk = bookkeeping(k, inst.n, inst.m)
    result.bookkeeping = bk
    rounds = rounds if rounds is not None else sample_rounds(inst, p, seed)
    rng = make_rng(seed, "multipartite")
    g = inst.graph

    t0 = time.perf_counter()
    aux0 = AuxHypergraphF(inst, rounds.g0)
    budget = SearchBudget(100_000)
    anchors = []
    taken = 0
    for a, b in (inst.x_tuple, inst.y_tuple):
        common = g.rows[a] & g.rows[b] & ~taken
        allowed = [common & inst.u_mask(i) for i in range(k)]
        h = _find_anchor(inst, aux0, allowed, rng, budget)
        if h is None:
            reports.append(StageReport("anchors", False, {}, "no F tilde edge inside an end tuple's neighbourhood", time.perf_counter() - t0))
            return result
        anchors.append(h)
        taken |= sum(1 << v for v in h)
    reports.append(StageReport("anchors", True, {"H_x": anchors[0], "H_y": anchors[1]}, None, time.perf_counter() - t0))

    t0 = time.perf_counter()
    fam = random_greedy_transversal(inst, p / 2, 1.0, seed, sampled=rounds.g1, exclude=taken, target=bk.m0)
    if isinstance(fam, StageReport):
        fam.seconds = time.perf_counter() - t0
        reports.append(fam)
        return result
    assert len(fam) == bk.m0
    reports.append(
        StageReport(
            "transversal_family",
            True,
            {"size": len(fam), "available_edges": fam.available, "T_degree_floor_ok": fam.t_degrees_ok(inst)},
            None,
            time.perf_counter() - t0,
        )
    )

    t0 = time.perf_counter()
    links = build_linkgraphs(fam, inst, p, seed, sampled=rounds.g1)
    dfs = dfs_random_greedy_path(links, bk.t, seed, eps_prime)
    if not dfs.success:
        reports.append(
            StageReport("directed_path", False, {"dead_ends": dfs.dead_ends, "length": dfs.length_at_stop, "t": bk.t}, "dead-end set reached eps' n", time.perf_counter() - t0)
        )
        return result
    reports.append(StageReport("directed_path", True, {"t": bk.t, "dead_ends": dfs.dead_ends, "steps": dfs.steps}, None, time.perf_counter() - t0))

    t0 = time.perf_counter()
    z_set = inst.u_all & ~fam.mask & ~taken
    assert z_set.bit_count() == bk.z_total
    absorption = absorb_leftover(inst, (anchors[0], anchors[1]), fam, dfs.path, z_set, rounds.g2, seed, absorb_threshold)
    if isinstance(absorption, StageReport):
        absorption.seconds = time.perf_counter() - t0
        reports.append(absorption)
        return result
    assert absorption.used_v.bit_count() == 4 * bk.z_total
    reports.append(StageReport("absorb", True, {"absorbed": absorption.absorbed}, None, time.perf_counter() - t0))

    t0 = time.perf_counter()
    ends = {*inst.x_tuple, *inst.y_tuple}
    v_rest = inst.v_mask & ~absorption.used_v & ~sum(1 << v for v in ends)
    assert v_rest.bit_count() == bk.t - 1
    matched = final_matching(inst, fam, dfs.path, v_rest)
    if isinstance(matched, StageReport):
        matched.seconds = time.perf_counter() - t0
        reports.append(matched)
        return result
    reports.append(StageReport("final_matching", True, {"matched": len(matched)}, None, time.perf_counter() - t0))

    seq = [inst.x_tuple[1], inst.x_tuple[0]]
    seq.extend(absorption.x_segment)
    for i, ci in enumerate(dfs.path):
        seq.extend(fam.copies[ci])
        if i < len(matched):
            seq.append(matched[i])
    seq.extend(absorption.y_segment)
    seq.extend([inst.y_tuple[0], inst.y_tuple[1]])
    host = union(g, rounds.g0, rounds.g1, rounds.g2)
    assert len(seq) == g.n and len(set(seq)) == g.n, "sequence does not cover the instance exactly"
    assert verify_square_path(host, seq, relax_end_edges=True), "assembled path failed verification"
    result.success = True
    result.sequence = seq
    reports.append(StageReport("assembly", True, {"length": len(seq)}))
    return result


# the bipartite pipeline


def split_probabilities(n: int, m: int, delta0: float, delta1: float, c: float | None = None) -> tuple[float, float]:
    """q1, q2 with q2*m = c(1-2q1)n and q1*n = c(1-2q2)m, where by default c = 1 - (delta0+delta1)/2."""
    c = 1 - (delta0 + delta1) / 2 if c is None else c
    # unknowns (q1, q2):  2cn q1 + m q2 = cn ;  n q1 + 2cm q2 = cm
    a = np.array([[2 * c * n, m], [n, 2 * c * m]], dtype=float)
    rhs = np.array([c * n, c * m], dtype=float)
    q1, q2 = np.linalg.solve(a, rhs)
    return float(q1), float(q2)


@dataclass
class BipartiteResult:
    success: bool
    sequence: list[int] | None
    reports: list[StageReport]

    @property
    def failed_stage(self) -> str | None:
        return next((r.stage for r in self.reports if not r.success), None)

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "failed_stage": self.failed_stage,
            "stages": [r.to_json() for r in self.reports],
            "length": len(self.sequence) if self.sequence else 0,
        }


def _sub_instance(g: Graph, centre: list[int], leaves: list[list[int]], x_tuple, y_tuple, d, delta0, delta1, seed):
    """Relabel (centre; leaves) into the standard layout.  Returns (instance, relabel list)."""
    order = list(x_tuple) + list(y_tuple) + [v for v in centre if v not in (*x_tuple, *y_tuple)]
    for leaf in leaves:
        order.extend(leaf)
    sub = g.relabel(order)
    n = len(centre) - 4
    m = len(leaves[0])
    inst = SuperRegularInstance(len(leaves), n, m, d, delta0, delta1, sub, (0, 1), (2, 3), seed)
    return inst, order


@dataclass(frozen=True)
class BipartiteInstance:
    graph: Graph
    u_set: VertexSet
    v_set: VertexSet
    x_tuple: tuple[int, int]
    y_tuple: tuple[int, int]
    d: float


def gen_bipartite_instance(n: int, m: int, d: float, seed: int) -> BipartiteInstance:
    """V = 0..n-1, U = n..n+m-1, random bipartite graph of density min(2d, 1); tuples chosen with d^2 n/2 common neighbours."""
    if not 3 * n <= 4 * m <= 4 * n:
        raise ValueError("need 3n/4 <= m <= n")
    total = n + m
    rows = dense_bipartite(total, range(n), n, m, min(2 * d, 1.0), derive_seed(seed, "bipartite_pair", 0))
    g = Graph(total, tuple(rows))
    v_set, u_set = (1 << n) - 1, ((1 << m) - 1) << n
    rng = make_rng(seed, "bipartite_tuples")
    need = d * d * n / 2

    def pick(side: VertexSet, other: VertexSet):
        verts = members(side)
        for _ in range(500):
            a, b = rng.sample(verts, 2)
            if (g.rows[a] & g.rows[b] & other).bit_count() >= need:
                return (a, b)
        raise RuntimeError("no end tuple with enough common neighbours")

    return BipartiteInstance(g, u_set, v_set, pick(v_set, u_set), pick(u_set, v_set), d)


def run_bipartite_pipeline(
    u_set: VertexSet,
    v_set: VertexSet,
    g: Graph,
    p: float,
    seed: int,
    *,
    x_tuple: tuple[int, int],
    y_tuple: tuple[int, int],
    d: float,
    delta0: float = 0.3,
    delta1: float = 0.1,
    split_c: float | None = None,
) -> BipartiteResult:
    """Square Hamilton path of G[U, V] u G(U, p) u G(V, p) with end tuples (x, x') in V and (y, y') in U.

    V splits into V_1, U_2, W_2 and U into V_2, U_1, W_1; the two halves are
    joined through a K_4 on (z, z', w, w') and each half is a k = 2 instance.
    Random edges inside each side come in rounds of p/16 (bridge, anchors) and 7p/8 (family, paths).
    ``split_c`` overrides the target ratio |U_i| / |V_i| (default 1 - (delta0 + delta1)/2).
    """
    reports: list[StageReport] = []
    result = BipartiteResult(False, None, reports)
    n_v, n_u = v_set.bit_count(), u_set.bit_count()
    if not 3 * n_v <= 4 * n_u <= 4 * n_v:
        raise ValueError("need 3|V|/4 <= |U| <= |V|")
    rng = make_rng(seed, "bipartite")
    total = g.n
    q1, q2 = split_probabilities(n_v, n_u, delta0, delta1, split_c)
    split = _split_sides(g, u_set, v_set, x_tuple, y_tuple, q1, q2, d, delta0, delta1, rng)
    if isinstance(split, StageReport):
        reports.append(split)
        return result
    v1, u1, w1, v2, u2, w2 = split
    reports.append(StageReport("split", True, {"q1": q1, "q2": q2, "|V1|": len(v1), "|U1|": len(u1), "|V2|": len(v2), "|U2|": len(u2)}))

    side_rounds = _side_rounds(total, u_set, v_set, p, seed)
    bridge_v = side_rounds[v_set]["bridge"]
    bridge_u = side_rounds[u_set]["bridge"]
    need1 = 0.5 * (d / 8) ** 2 * n_v
    v1_mask = sum(1 << v for v in v1) & ~((1 << x_tuple[0]) | (1 << x_tuple[1]))
    v2_mask = sum(1 << v for v in v2) & ~((1 << y_tuple[0]) | (1 << y_tuple[1]))
    u1m, w1m = sum(1 << v for v in u1), sum(1 << v for v in w1)
    u2m, w2m = sum(1 << v for v in u2), sum(1 << v for v in w2)
    bridge = None
    for bz in rng.sample(members(v1_mask), min(200, v1_mask.bit_count())):
        for bz2 in members(bridge_v.rows[bz] & v1_mask):
            cz = g.rows[bz] & g.rows[bz2]
            if (cz & u1m).bit_count() < need1 or (cz & w1m).bit_count() < need1:
                continue
            # w, w' in V_2 adjacent to both z, z' and joined by a random edge
            cands = cz & v2_mask
            for bw in members(cands):
                for bw2 in members(bridge_u.rows[bw] & cands):
                    cw = g.rows[bw] & g.rows[bw2]
                    if (cw & u2m).bit_count() >= need1 and (cw & w2m).bit_count() >= need1:
                        bridge = (bz, bz2, bw, bw2)
                        break
                if bridge:
                    break
            if bridge:
                break
        if bridge:
            break
    if bridge is None:
        reports.append(StageReport("bridge", False, {}, "no K4 bridge between V_1 and V_2"))
        return result
    bz, bz2, bw, bw2 = bridge
    reports.append(StageReport("bridge", True, {"K4": bridge}))

    halves = []
    for idx, (centre, leaves, start, end) in enumerate(
        ((v1, [u1, w1], x_tuple, (bz, bz2)), (v2, [u2, w2], y_tuple, (bw, bw2)))
    ):
        inst, order = _sub_instance(g, centre, leaves, start, end, d, delta0, delta1, derive_seed(seed, "half", idx))
        sub_p = p * total / max(inst.n, 1)
        leaf_side = u_set if idx == 0 else v_set
        centre_side = v_set if idx == 0 else u_set
        r_anchor = side_rounds[leaf_side]["anchor"].relabel(order)
        r_family = side_rounds[leaf_side]["main"].relabel(order)
        r_paths = side_rounds[centre_side]["main"].relabel(order)
        rounds = Rounds(_leaf_cross(inst, r_anchor), _leaf_cross(inst, r_family), _restrict(r_paths, inst.v_mask))
        res = run_multipartite_pipeline(inst, sub_p, derive_seed(seed, "half_run", idx), rounds=rounds)
        for r in res.reports:
            r.stage = f"half{idx + 1}:{r.stage}"
        reports.extend(res.reports)
        if not res.success:
            return result
        halves.append([order[v] for v in res.sequence])
    first, second = halves
    # first ends (z, z'), second ends (w, w'); reversing the second gives w', w, ...
    seq = first + second[::-1]
    host = union(g, *(r for side in side_rounds.values() for r in side.values()))
    assert len(seq) == total and len(set(seq)) == total
    assert verify_square_path(host, seq, relax_end_edges=True), "bipartite path failed verification"
    reports.append(StageReport("assembly", True, {"length": len(seq)}))
    result.success = True
    result.sequence = seq
    return result


def _side_rounds(total: int, u_set: VertexSet, v_set: VertexSet, p: float, seed: int) -> dict:
    """Per side: bridge and anchor rounds at p/16 and a main round at 7p/8 (their union is dominated by G(., p)).

    The main round serves the family of one half (on its leaves) and the
    4-vertex paths of the other half (on its centre); these vertex sets are disjoint.
    """
    out = {}
    for name, side in (("U", u_set), ("V", v_set)):
        out[side] = {
            "bridge": gnp_on_set(total, side, p / 16, derive_seed(seed, f"bridge_{name}", 0)),
            "anchor": gnp_on_set(total, side, p / 16, derive_seed(seed, f"anchor_{name}", 0)),
            "main": gnp_on_set(total, side, 7 * p / 8, derive_seed(seed, f"main_{name}", 0)),
        }
    return out


def _restrict(r: Graph, mask: VertexSet) -> Graph:
    return Graph(r.n, tuple((row & mask) if (mask >> v) & 1 else 0 for v, row in enumerate(r.rows)))


def _leaf_cross(inst: SuperRegularInstance, r: Graph) -> Graph:
    """Keep only edges between different U classes (the k-partite random graph)."""
    rows = [0] * r.n
    for i in range(inst.k):
        others = inst.u_all & ~inst.u_mask(i)
        for v in members(inst.u_mask(i)):
            rows[v] = r.rows[v] & others
    return Graph(r.n, tuple(rows))


def _half_ok(c: int, m: int, delta0: float, delta1: float) -> bool:
    n_c = c - 4
    return (1 - delta0) * n_c <= m <= (1 - delta1) * n_c and (n_c - m + 1) % 5 == 0 and n_c - m + 1 >= 10


def _target_sizes(n_v: int, n_u: int, m1_hint: int, m2_hint: int, delta0, delta1) -> tuple[int, int] | None:
    """Sizes (m1, m2) closest to the hints with |V_1| = n_v - 2 m2 and |V_2| = n_u - 2 m1 admissible."""
    best = None
    for m1 in range(max(1, m1_hint - 60), m1_hint + 61):
        for m2 in range(max(1, m2_hint - 60), m2_hint + 61):
            if _half_ok(n_v - 2 * m2, m1, delta0, delta1) and _half_ok(n_u - 2 * m1, m2, delta0, delta1):
                cost = abs(m1 - m1_hint) + abs(m2 - m2_hint)
                if best is None or cost < best[0]:
                    best = (cost, m1, m2)
    return None if best is None else (best[1], best[2])


def _resize(side: list[int], protect, m: int, rng: random.Random) -> tuple[list, list, list]:
    """Random split of ``side`` into (centre, a, b) with |a| = |b| = m and ``protect`` in the centre."""
    free = [v for v in side if v not in protect]
    rng.shuffle(free)
    a, b = free[:m], free[m:2 * m]
    centre = list(protect) + free[2 * m:]
    return sorted(centre), sorted(a), sorted(b)


def _split_sides(g, u_set, v_set, x_tuple, y_tuple, q1, q2, d, delta0, delta1, rng: random.Random, tries: int = 50):
    """Random split with sizes snapped to the nearest admissible pair, then degree floors checked."""
    n_v, n_u = v_set.bit_count(), u_set.bit_count()
    for _ in range(tries):
        # sample the binomial sizes as the random split would, then snap to admissible sizes
        m2_hint = sum(1 for _ in range(n_v - 2) if rng.random() < q1)
        m1_hint = sum(1 for _ in range(n_u - 2) if rng.random() < q2)
        sizes = _target_sizes(n_v, n_u, m1_hint, m2_hint, delta0, delta1)
        if sizes is None:
            return StageReport("split", False, {"q1": q1, "q2": q2}, "no admissible part sizes near the expected split")
        m1, m2 = sizes
        v1, u2, w2 = _resize(members(v_set), x_tuple, m2, rng)
        v2, u1, w1 = _resize(members(u_set), y_tuple, m1, rng)
        if not _degrees_ok(g, v1, [u1, w1], d / 8) or not _degrees_ok(g, v2, [u2, w2], d / 8):
            continue
        return v1, u1, w1, v2, u2, w2
    return StageReport("split", False, {}, "no split met the degree floors")


def _degrees_ok(g: Graph, centre: list, leaves: list[list], frac: float) -> bool:
    cm = sum(1 << v for v in centre)
    for leaf in leaves:
        lm = sum(1 << v for v in leaf)
        if any((g.rows[v] & lm).bit_count() < frac * len(leaf) for v in centre):
            return False
        if any((g.rows[u] & cm).bit_count() < frac * len(centre) for u in leaf):
            return False
    return True
