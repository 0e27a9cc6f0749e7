"""Graph powers, square paths and cycles, 1-density, and embedding verifiers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .graph import Graph, GraphBuilder, members

__all__ = [
    "EXACT_DENSITY_LIMIT",
    "DETERMINISTIC",
    "random_round",
    "path_graph",
    "cycle_graph",
    "rth_power",
    "square_of_path",
    "square_of_cycle",
    "square_path_pairs",
    "one_density",
    "is_strictly_1_balanced",
    "verify_square_cycle",
    "verify_square_path",
    "square_path_aut_order",
    "SquarePathPiece",
    "MaxDeg2Graph",
    "enumerate_maxdeg2",
    "MAXDEG2_LIMIT",
]

EXACT_DENSITY_LIMIT = 12
MAXDEG2_LIMIT = 14
DETERMINISTIC = "deterministic"


def random_round(i: int) -> str:
    return f"random_round_{i}"


def path_graph(k: int) -> Graph:
    return Graph.from_edges(k, ((i, i + 1) for i in range(k - 1)))


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise ValueError("cycles need n >= 3")
    return Graph.from_edges(n, ((i, (i + 1) % n) if i < n - 1 else (0, n - 1) for i in range(n)))


def rth_power(g: Graph, r: int) -> Graph:
    """Join every pair at graph distance between 1 and r."""
    if r < 1:
        raise ValueError("r must be >= 1")
    rows = []
    for v in range(g.n):
        seen = 1 << v
        frontier = 1 << v
        for _ in range(r):
            nxt = 0
            for u in members(frontier):
                nxt |= g.rows[u]
            frontier = nxt & ~seen
            if not frontier:
                break
            seen |= frontier
        rows.append(seen & ~(1 << v))
    return Graph(g.n, tuple(rows))


def square_path_pairs(k: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i < j, at distance 1 or 2 along a k-vertex sequence."""
    return [(i, j) for i in range(k) for j in (i + 1, i + 2) if j < k]


def square_of_path(k: int) -> Graph:
    if k < 1:
        raise ValueError("k must be >= 1")
    return Graph.from_edges(k, square_path_pairs(k))


def square_of_cycle(n: int) -> Graph:
    if n < 3:
        raise ValueError("n must be >= 3")
    return rth_power(cycle_graph(n), 2)


def one_density(f: Graph) -> Fraction:
    """max e(F')/(v(F')-1) over subgraphs F' with at least two vertices (exact)."""
    if f.n < 2:
        raise ValueError("1-density needs at least two vertices")
    if f.n > EXACT_DENSITY_LIMIT:
        raise ValueError(f"exact 1-density limited to {EXACT_DENSITY_LIMIT} vertices")
    best = Fraction(0)
    for mask in range(1, 1 << f.n):
        size = mask.bit_count()
        if size < 2:
            continue
        d = Fraction(f.edges_within(mask), size - 1)
        if d > best:
            best = d
    return best


def is_strictly_1_balanced(f: Graph) -> bool:
    """True iff every proper subgraph on >= 2 vertices has smaller e/(v-1) than f."""
    if f.n < 2:
        raise ValueError("needs at least two vertices")
    if f.n > EXACT_DENSITY_LIMIT:
        raise ValueError(f"exact mode limited to {EXACT_DENSITY_LIMIT} vertices")
    whole = Fraction(f.m, f.n - 1)
    full = (1 << f.n) - 1
    for mask in range(1, full):
        size = mask.bit_count()
        if size >= 2 and Fraction(f.edges_within(mask), size - 1) >= whole:
            return False
    # spanning proper subgraphs have strictly fewer edges, hence smaller density
    return True


def _check_distinct(seq: Sequence[int]) -> None:
    if len(set(seq)) != len(seq):
        raise ValueError("sequence has duplicate vertices")


def verify_square_cycle(g: Graph, ordering: Sequence[int]) -> bool:
    """True iff ``ordering`` is a Hamilton ordering whose cyclic square lies in g."""
    _check_distinct(ordering)
    n = len(ordering)
    if n != g.n or n < 3:
        return False
    if any(not 0 <= v < g.n for v in ordering):
        return False
    rows = g.rows
    for i in range(n):
        v = ordering[i]
        if not (rows[v] >> ordering[(i + 1) % n]) & 1:
            return False
        if n > 3 and not (rows[v] >> ordering[(i + 2) % n]) & 1:
            return False
    return True


def verify_square_path(g: Graph, seq: Sequence[int], relax_end_edges: bool = False) -> bool:
    """True iff the square of the path ``seq`` lies in g.

    With ``relax_end_edges`` the edges v1v2 and v_{k-1}v_k are not required.
    """
    _check_distinct(seq)
    k = len(seq)
    if any(not 0 <= v < g.n for v in seq):
        return False
    rows = g.rows
    for i, j in square_path_pairs(k):
        if relax_end_edges and j == i + 1 and (i == 0 or j == k - 1):
            continue
        if not (rows[seq[i]] >> seq[j]) & 1:
            return False
    return True


def square_path_aut_order(k: int) -> int:
    """|Aut(P_k^2)|: P_3^2 = K_3 and P_4^2 = K_4 minus an edge are the exceptions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return {1: 1, 2: 2, 3: 6, 4: 4}.get(k, 2)


@dataclass
class SquarePathPiece:
    """A square path v1..vk in some host graph with per-edge provenance tags.

    The end tuples are (v2, v1) on the left and (v_{k-1}, v_k) on the right.
    """

    vertices: tuple[int, ...]
    provenance: dict[tuple[int, int], str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.vertices = tuple(self.vertices)
        _check_distinct(self.vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def end_tuple_left(self) -> tuple[int, int]:
        v = self.vertices
        return (v[1], v[0]) if len(v) > 1 else (v[0], v[0])

    @property
    def end_tuple_right(self) -> tuple[int, int]:
        v = self.vertices
        return (v[-2], v[-1]) if len(v) > 1 else (v[0], v[0])

    # names used when pieces are chained: x, y, ..., u, w
    @property
    def x(self) -> int:
        return self.vertices[0]

    @property
    def y(self) -> int:
        return self.vertices[1]

    @property
    def u(self) -> int:
        return self.vertices[-2]

    @property
    def w(self) -> int:
        return self.vertices[-1]

    @property
    def mask(self) -> int:
        bits = 0
        for v in self.vertices:
            bits |= 1 << v
        return bits

    def edges(self) -> list[tuple[int, int]]:
        v = self.vertices
        return [(min(v[i], v[j]), max(v[i], v[j])) for i, j in square_path_pairs(len(v))]

    def verify(self, g: Graph, relax_end_edges: bool = False) -> bool:
        return verify_square_path(g, self.vertices, relax_end_edges)

    def tag_edges(self, layers: Sequence[tuple[str, Graph]]) -> None:
        """Tag each edge with the first layer (name, graph) that contains it."""
        for e in self.edges():
            for name, layer in layers:
                if layer.has_edge(*e):
                    self.provenance[e] = name
                    break
            else:
                raise ValueError(f"edge {e} is in no layer")

    def reversed(self) -> "SquarePathPiece":
        return SquarePathPiece(self.vertices[::-1], dict(self.provenance))


@dataclass(frozen=True)
class MaxDeg2Graph:
    """Disjoint union of paths (lengths >= 1) and cycles (lengths >= 3)."""

    paths: tuple[int, ...]
    cycles: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(p < 1 for p in self.paths) or any(c < 3 for c in self.cycles):
            raise ValueError("invalid component length")

    @property
    def n(self) -> int:
        return sum(self.paths) + sum(self.cycles)

    def to_graph(self) -> Graph:
        b = GraphBuilder(self.n)
        start = 0
        for c in self.cycles:
            for i in range(c):
                b.add_edge(start + i, start + (i + 1) % c)
            start += c
        for p in self.paths:
            for i in range(p - 1):
                b.add_edge(start + i, start + i + 1)
            start += p
        return b.build()

    def label(self) -> str:
        parts = [f"C{c}" for c in self.cycles] + [f"P{p}" for p in self.paths]
        return "+".join(parts)


def _partitions(n: int, min_part: int, max_part: int | None = None) -> Iterator[tuple[int, ...]]:
    """Partitions of n into parts >= min_part, non-increasing."""
    if n == 0:
        yield ()
        return
    top = n if max_part is None else min(n, max_part)
    for first in range(top, min_part - 1, -1):
        for rest in _partitions(n - first, min_part, first):
            yield (first,) + rest


def enumerate_maxdeg2(n: int) -> Iterator[MaxDeg2Graph]:
    """Every max-degree-2 graph on n vertices up to isomorphism, each exactly once."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > MAXDEG2_LIMIT:
        raise ValueError(f"enumeration limited to n <= {MAXDEG2_LIMIT}")
    for cycle_total in range(0, n + 1):
        for cycles in _partitions(cycle_total, 3):
            for paths in _partitions(n - cycle_total, 1):
                yield MaxDeg2Graph(paths, cycles)


def labeled_self_embeddings(pattern: Graph) -> int:
    """|Aut(pattern)| by brute force (small patterns only)."""
    count = 0
    edges = list(pattern.edges())
    for perm in itertools.permutations(range(pattern.n)):
        if all(pattern.has_edge(perm[u], perm[v]) for u, v in edges):
            count += 1
    return count


def provenance_summary(pieces: Sequence[SquarePathPiece]) -> Mapping[str, int]:
    out: dict[str, int] = {}
    for piece in pieces:
        for tag in piece.provenance.values():
            out[tag] = out.get(tag, 0) + 1
    return out
