"""Exact backtracking searches for square cycles, square paths and small patterns.

``ABSENT`` is only ever reported after an exhaustive search; running out of
budget is reported as ``BUDGET_EXHAUSTED``.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Any

from .graph import Graph, VertexSet, full_set, members
from .powers import (
    MaxDeg2Graph,
    enumerate_maxdeg2,
    square_path_aut_order,
    verify_square_cycle,
    verify_square_path,
)

__all__ = [
    "Status",
    "SearchResult",
    "find_square_ham_cycle",
    "find_square_path",
    "count_pk2_copies",
    "pk2_sequences",
    "pk2_copy_masks",
    "vertices_in_pk2_copies",
    "max_disjoint_pk2_packing",
    "find_embedding",
    "is_2_universal",
]


class Status(str, enum.Enum):
    FOUND = "found"
    ABSENT = "absent"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class SearchResult:
    status: Status
    value: Any = None
    expansions: int = 0

    @property
    def found(self) -> bool:
        return self.status is Status.FOUND

    @property
    def absent(self) -> bool:
        return self.status is Status.ABSENT


class _Budget(Exception):
    pass


@dataclass
class _Counter:
    limit: int | None
    used: int = 0

    def tick(self) -> None:
        self.used += 1
        if self.limit is not None and self.used > self.limit:
            raise _Budget


def find_square_ham_cycle(g: Graph, budget: int | None = None) -> SearchResult:
    """Search for a Hamilton ordering whose cyclic square lies in g."""
    n = g.n
    rows = g.rows
    full = full_set(n)
    if n < 3:
        return SearchResult(Status.ABSENT)
    if n <= 4:
        if all(r == full & ~(1 << v) for v, r in enumerate(rows)):
            return SearchResult(Status.FOUND, list(range(n)))
        return SearchResult(Status.ABSENT)
    if g.min_degree() < 4:
        return SearchResult(Status.ABSENT)

    counter = _Counter(budget)
    v0 = min(range(n), key=lambda v: (rows[v].bit_count(), v))
    order = [v0]

    def degrees_ok(unplaced: int, frontier: int) -> bool:
        pool = unplaced | frontier
        for u in members(unplaced):
            if (rows[u] & pool).bit_count() < 4:
                return False
        return True

    def extend(unplaced: int) -> bool:
        counter.tick()
        if not unplaced:
            last, prev = order[-1], order[-2]
            v1 = order[1]
            return (
                v1 < last
                and (rows[v0] >> last) & 1
                and (rows[v0] >> prev) & 1
                and (rows[v1] >> last) & 1
            )
        v1 = order[1]
        # the closing vertex must be an unplaced common neighbour of v0, v1 above v1
        closers = rows[v0] & rows[v1] & unplaced & ~((1 << (v1 + 1)) - 1)
        if not closers:
            return False
        frontier = (1 << v0) | (1 << v1) | (1 << order[-1]) | (1 << order[-2])
        if not degrees_ok(unplaced, frontier):
            return False
        cands = rows[order[-1]] & rows[order[-2]] & unplaced
        while cands:
            low = cands & -cands
            cands ^= low
            v = low.bit_length() - 1
            order.append(v)
            if extend(unplaced & ~low):
                return True
            order.pop()
        return False

    try:
        rest = full & ~(1 << v0)
        for v1 in members(rows[v0]):
            order.append(v1)
            if _extend_second(order, rows, rest & ~(1 << v1), extend, counter):
                assert verify_square_cycle(g, order)
                return SearchResult(Status.FOUND, list(order), counter.used)
            order.pop()
    except _Budget:
        return SearchResult(Status.BUDGET_EXHAUSTED, None, counter.used)
    return SearchResult(Status.ABSENT, None, counter.used)


def _extend_second(order, rows, unplaced, extend, counter) -> bool:
    v0, v1 = order
    counter.tick()
    cands = rows[v0] & rows[v1] & unplaced
    while cands:
        low = cands & -cands
        cands ^= low
        order.append(low.bit_length() - 1)
        if extend(unplaced & ~low):
            return True
        order.pop()
    return False


def find_square_path(
    g: Graph,
    left: tuple[int, int],
    right: tuple[int, int],
    cover: VertexSet,
    relax_end_edges: bool = False,
    budget: int | None = None,
) -> SearchResult:
    """Square path spanning ``cover`` starting b, a for left=(a, b) and ending c, d for right=(c, d)."""
    a, b = left
    c, d = right
    ends = [a, b, c, d]
    if len(set(ends)) != 4:
        raise ValueError("end tuples must be disjoint with distinct entries")
    for v in ends:
        if not (cover >> v) & 1:
            raise ValueError(f"end vertex {v} outside cover")
    rows = g.rows
    if not relax_end_edges and not ((rows[a] >> b) & 1 and (rows[c] >> d) & 1):
        return SearchResult(Status.ABSENT)
    middle = cover & ~((1 << a) | (1 << b) | (1 << c) | (1 << d))
    seq = [b, a]
    counter = _Counter(budget)
    tail = (1 << c) | (1 << d)

    def closes() -> bool:
        x, y = seq[-2], seq[-1]
        return bool((rows[x] >> c) & 1 and (rows[y] >> c) & 1 and (rows[y] >> d) & 1)

    def extend(unplaced: int) -> bool:
        counter.tick()
        if not unplaced:
            return closes()
        pool = unplaced | tail | (1 << seq[-1]) | (1 << seq[-2])
        for u in members(unplaced):
            if (rows[u] & pool).bit_count() < 4:
                return False
        cands = rows[seq[-1]] & rows[seq[-2]] & unplaced
        while cands:
            low = cands & -cands
            cands ^= low
            seq.append(low.bit_length() - 1)
            if extend(unplaced & ~low):
                return True
            seq.pop()
        return False

    try:
        ok = extend(middle)
    except _Budget:
        return SearchResult(Status.BUDGET_EXHAUSTED, None, counter.used)
    if not ok:
        return SearchResult(Status.ABSENT, None, counter.used)
    seq.extend([c, d])
    assert verify_square_path(g, seq, relax_end_edges)
    return SearchResult(Status.FOUND, list(seq), counter.used)


def pk2_sequences(g: Graph, k: int, within: VertexSet):
    """Yield every labeled square-path sequence of length k inside ``within``."""
    rows = g.rows
    seq: list[int] = []

    def rec(used: int, cands: int):
        if len(seq) == k:
            yield tuple(seq)
            return
        while cands:
            low = cands & -cands
            cands ^= low
            v = low.bit_length() - 1
            seq.append(v)
            nused = used | low
            if len(seq) == 1:
                nxt = rows[v] & within & ~nused
            else:
                nxt = rows[v] & rows[seq[-2]] & within & ~nused
            yield from rec(nused, nxt)
            seq.pop()

    if k < 1:
        raise ValueError("k must be >= 1")
    yield from rec(0, within & full_set(g.n))


def count_pk2_copies(g: Graph, k: int, within: VertexSet | None = None, limit: int | None = None) -> int:
    """Unlabeled copies of P_k^2 inside ``within``; stops early once ``limit`` is exceeded."""
    if k < 2:
        raise ValueError("k must be >= 2")
    within = full_set(g.n) if within is None else within
    if k == 2:
        return g.edges_within(within)
    aut = square_path_aut_order(k)
    cap = None if limit is None else (limit + 1) * aut
    labeled = 0
    for _ in pk2_sequences(g, k, within):
        labeled += 1
        if cap is not None and labeled >= cap:
            return labeled // aut
    assert labeled % aut == 0
    return labeled // aut


def pk2_copy_masks(g: Graph, k: int, within: VertexSet | None = None, cap: int | None = None) -> list[int]:
    """Distinct vertex sets of P_k^2 copies (at most ``cap`` of them)."""
    within = full_set(g.n) if within is None else within
    seen: set[int] = set()
    for seq in pk2_sequences(g, k, within):
        if seq[0] > seq[-1]:
            continue
        mask = 0
        for v in seq:
            mask |= 1 << v
        seen.add(mask)
        if cap is not None and len(seen) >= cap:
            break
    return sorted(seen)


def vertices_in_pk2_copies(g: Graph, k: int, within: VertexSet) -> VertexSet:
    """Union of the vertex sets of all P_k^2 copies inside ``within``."""
    rows = g.rows
    covered = 0
    # a vertex is covered as soon as one sequence through it is found
    for v in members(within):
        if (covered >> v) & 1:
            continue
        for pos in range((k + 1) // 2):
            seq = _sequence_through(rows, k, within, v, pos)
            if seq is not None:
                for u in seq:
                    covered |= 1 << u
                break
    return covered


def _sequence_through(rows, k: int, within: int, v: int, pos: int) -> list[int] | None:
    """A square-path sequence of length k inside ``within`` with v at index pos."""
    # grow rightwards from v to length k - pos, then leftwards to total k
    right_len = k - pos
    seq = [v]

    def grow_left(used: int) -> bool:
        if len(seq) == k:
            return True
        if len(seq) == 1:
            cands = rows[seq[0]] & within & ~used
        else:
            cands = rows[seq[0]] & rows[seq[1]] & within & ~used
        while cands:
            low = cands & -cands
            cands ^= low
            seq.insert(0, low.bit_length() - 1)
            if grow_left(used | low):
                return True
            seq.pop(0)
        return False

    def grow_right(used: int) -> bool:
        if len(seq) == right_len:
            return grow_left(used)
        if len(seq) == 1:
            cands = rows[seq[-1]] & within & ~used
        else:
            cands = rows[seq[-1]] & rows[seq[-2]] & within & ~used
        while cands:
            low = cands & -cands
            cands ^= low
            seq.append(low.bit_length() - 1)
            if grow_right(used | low):
                return True
            seq.pop()
        return False

    if not (within >> v) & 1:
        return None
    return list(seq) if grow_right(1 << v) else None


def max_disjoint_pk2_packing(
    g: Graph, k: int, within: VertexSet | None = None, budget: int | None = 200_000
) -> tuple[int, bool]:
    """Maximum number of vertex-disjoint P_k^2 copies inside ``within``.

    Returns (value, exact).  When the budget runs out, value is the best packing
    found so far (a certified lower bound) and exact is False.
    """
    within = full_set(g.n) if within is None else within
    masks = pk2_copy_masks(g, k, within)
    if not masks:
        return 0, True
    by_vertex: dict[int, list[int]] = {}
    for m in masks:
        for v in members(m):
            by_vertex.setdefault(v, []).append(m)
    universe = 0
    for m in masks:
        universe |= m
    best = 0
    counter = _Counter(budget)

    def rec(avail: int, used: int) -> None:
        nonlocal best
        counter.tick()
        if used + avail.bit_count() // k <= best:
            return
        # lowest available vertex still lying in some usable copy
        while avail:
            low = avail & -avail
            v = low.bit_length() - 1
            options = [m for m in by_vertex.get(v, ()) if m & avail == m]
            if options:
                break
            avail ^= low
        else:
            best = max(best, used)
            return
        if used + avail.bit_count() // k <= best:
            return
        for m in options:
            rec(avail & ~m, used + 1)
        rec(avail & ~low, used)

    try:
        rec(universe, 0)
    except _Budget:
        return best, False
    return best, True


def find_embedding(
    pattern: Graph,
    host: Graph,
    allowed: VertexSet | None = None,
    budget: int | None = None,
    rng: random.Random | None = None,
) -> SearchResult:
    """Injective edge-preserving map pattern -> host (into ``allowed``) by backtracking."""
    allowed = full_set(host.n) if allowed is None else allowed
    if pattern.n > allowed.bit_count():
        return SearchResult(Status.ABSENT)
    prow, hrow = pattern.rows, host.rows
    # order pattern vertices so each has many already-placed neighbours
    order: list[int] = []
    placed = 0
    remaining = set(range(pattern.n))
    while remaining:
        v = max(remaining, key=lambda u: ((prow[u] & placed).bit_count(), prow[u].bit_count(), -u))
        order.append(v)
        placed |= 1 << v
        remaining.discard(v)
    pdeg = [r.bit_count() for r in prow]
    back = [[u for u in order[:i] if (prow[order[i]] >> u) & 1] for i in range(len(order))]
    image = [-1] * pattern.n
    counter = _Counter(budget)

    def rec(i: int, used: int) -> bool:
        counter.tick()
        if i == len(order):
            return True
        v = order[i]
        cands = allowed & ~used
        for u in back[i]:
            cands &= hrow[image[u]]
        cand_list = [c for c in members(cands) if hrow[c].bit_count() >= pdeg[v]]
        if rng is not None:
            rng.shuffle(cand_list)
        for c in cand_list:
            image[v] = c
            if rec(i + 1, used | (1 << c)):
                return True
        image[v] = -1
        return False

    try:
        ok = rec(0, 0)
    except _Budget:
        return SearchResult(Status.BUDGET_EXHAUSTED, None, counter.used)
    if not ok:
        return SearchResult(Status.ABSENT, None, counter.used)
    for u, v in pattern.edges():
        assert host.has_edge(image[u], image[v])
    return SearchResult(Status.FOUND, list(image), counter.used)


@dataclass
class UniversalityResult:
    status: Status
    witness: MaxDeg2Graph | None = None
    checked: int = 0
    embeddings: dict[str, list[int]] = field(default_factory=dict)

    @property
    def universal(self) -> bool | None:
        if self.status is Status.BUDGET_EXHAUSTED:
            return None
        return self.status is Status.FOUND


def is_2_universal(g: Graph, budget: int | None = None) -> UniversalityResult:
    """Does g contain every graph of maximum degree two on g.n vertices?

    FOUND means universal, ABSENT carries a non-embeddable witness.
    """
    if g.n < 1:
        raise ValueError("empty graph")
    checked = 0
    embeddings: dict[str, list[int]] = {}
    exhausted = False
    for f in enumerate_maxdeg2(g.n):
        res = find_embedding(f.to_graph(), g, budget=budget)
        checked += 1
        if res.absent:
            return UniversalityResult(Status.ABSENT, f, checked, embeddings)
        if res.status is Status.BUDGET_EXHAUSTED:
            exhausted = True
            continue
        embeddings[f.label()] = res.value
    status = Status.BUDGET_EXHAUSTED if exhausted else Status.FOUND
    return UniversalityResult(status, None, checked, embeddings)
