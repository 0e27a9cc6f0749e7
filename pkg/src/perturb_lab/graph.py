"""Bitset graphs and digraphs over dense integer vertices.

Vertex subsets are plain Python ints used as bitsets (bit ``v`` set means
vertex ``v`` is a member).  Graphs are immutable once built; all mutation goes
through :class:`GraphBuilder` / :class:`DiGraphBuilder`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

__all__ = [
    "VertexSet",
    "vertex_set",
    "members",
    "full_set",
    "popcount",
    "Graph",
    "DiGraph",
    "GraphBuilder",
    "DiGraphBuilder",
    "union",
    "degree_into",
    "common_neighborhood",
    "bipartite_density",
    "read_edge_list",
    "write_edge_list",
    "format_edge_list",
    "parse_edge_list",
]

VertexSet = int


def vertex_set(vertices: Iterable[int]) -> VertexSet:
    bits = 0
    for v in vertices:
        bits |= 1 << v
    return bits


def full_set(n: int) -> VertexSet:
    return (1 << n) - 1


def popcount(bits: VertexSet) -> int:
    return bits.bit_count()


def members(bits: VertexSet) -> list[int]:
    """Sorted list of the vertices in ``bits``."""
    if bits < 0:
        raise ValueError("vertex sets are non-negative")
    count = bits.bit_count()
    if count * 24 < bits.bit_length():
        out = []
        while bits:
            low = bits & -bits
            out.append(low.bit_length() - 1)
            bits ^= low
        return out
    s = bin(bits)[:1:-1]
    return [i for i, c in enumerate(s) if c == "1"]


def _check_vertex(n: int, v: int) -> None:
    if not 0 <= v < n:
        raise ValueError(f"vertex {v} out of range for n={n}")


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with one adjacency bitset per vertex."""

    n: int
    rows: tuple[int, ...]
    m: int = field(default=-1)

    def __post_init__(self) -> None:
        if len(self.rows) != self.n:
            raise ValueError("row count must equal n")
        if self.m < 0:
            object.__setattr__(self, "m", sum(r.bit_count() for r in self.rows) // 2)

    # construction helpers
    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, (0,) * n, 0)

    @classmethod
    def complete(cls, n: int) -> "Graph":
        full = full_set(n)
        return cls(n, tuple(full & ~(1 << v) for v in range(n)))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        b = GraphBuilder(n)
        b.add_edges(edges)
        return b.build()

    @classmethod
    def from_rows(cls, rows: Sequence[int], check: bool = True) -> "Graph":
        n = len(rows)
        rows = tuple(rows)
        if check:
            _validate_rows(n, rows)
        return cls(n, rows)

    # queries
    def has_edge(self, u: int, v: int) -> bool:
        return (self.rows[u] >> v) & 1 == 1

    def neighbors(self, v: int) -> VertexSet:
        return self.rows[v]

    def degree(self, v: int) -> int:
        return self.rows[v].bit_count()

    @property
    def edge_count(self) -> int:
        return self.m

    def vertices(self) -> VertexSet:
        return full_set(self.n)

    def edges(self) -> Iterator[tuple[int, int]]:
        for u in range(self.n):
            higher = self.rows[u] >> (u + 1)
            if higher:
                for w in members(higher):
                    yield u, u + 1 + w

    def min_degree(self) -> int:
        return min((r.bit_count() for r in self.rows), default=0)

    def max_degree(self) -> int:
        return max((r.bit_count() for r in self.rows), default=0)

    def edges_within(self, s: VertexSet) -> int:
        return sum((self.rows[v] & s).bit_count() for v in members(s)) // 2

    def induced(self, s: VertexSet) -> "Graph":
        """Same vertex ids, only edges with both ends in ``s``."""
        rows = tuple((r & s) if (s >> v) & 1 else 0 for v, r in enumerate(self.rows))
        return Graph(self.n, rows)

    def relabel(self, order: Sequence[int]) -> "Graph":
        """Graph on ``len(order)`` vertices where new vertex i is old ``order[i]``."""
        index = {old: new for new, old in enumerate(order)}
        b = GraphBuilder(len(order))
        for new_u, old_u in enumerate(order):
            for old_w in members(self.rows[old_u]):
                new_w = index.get(old_w)
                if new_w is not None and new_w > new_u:
                    b.add_edge(new_u, new_w)
        return b.build()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.rows == other.rows

    def __hash__(self) -> int:
        return hash((self.n, self.rows))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"


def _validate_rows(n: int, rows: Sequence[int]) -> None:
    limit = full_set(n)
    for v, r in enumerate(rows):
        if r & ~limit:
            raise ValueError(f"row {v} has bits outside [0, {n})")
        if (r >> v) & 1:
            raise ValueError(f"self-loop at {v}")
        for w in members(r):
            if not (rows[w] >> v) & 1:
                raise ValueError(f"asymmetric adjacency between {v} and {w}")


class GraphBuilder:
    """Mutable, single-owner construction buffer for :class:`Graph`."""

    def __init__(self, n: int, rows: Sequence[int] | None = None):
        self.n = n
        self._rows = list(rows) if rows is not None else [0] * n

    @classmethod
    def from_graph(cls, g: Graph) -> "GraphBuilder":
        return cls(g.n, g.rows)

    def add_edge(self, u: int, v: int) -> None:
        _check_vertex(self.n, u)
        _check_vertex(self.n, v)
        if u == v:
            raise ValueError(f"self-loop at {u}")
        self._rows[u] |= 1 << v
        self._rows[v] |= 1 << u

    def add_edges(self, edges: Iterable[tuple[int, int]]) -> None:
        for u, v in edges:
            self.add_edge(u, v)

    def remove_edge(self, u: int, v: int) -> None:
        self._rows[u] &= ~(1 << v)
        self._rows[v] &= ~(1 << u)

    def has_edge(self, u: int, v: int) -> bool:
        return (self._rows[u] >> v) & 1 == 1

    def degree(self, v: int) -> int:
        return self._rows[v].bit_count()

    def row(self, v: int) -> int:
        return self._rows[v]

    def join(self, a: VertexSet, b: VertexSet) -> None:
        """Add every edge between disjoint sets ``a`` and ``b``."""
        if a & b:
            raise ValueError("join needs disjoint sets")
        for v in members(a):
            self._rows[v] |= b
        for v in members(b):
            self._rows[v] |= a

    def build(self) -> Graph:
        return Graph(self.n, tuple(self._rows))


@dataclass(frozen=True, eq=False)
class DiGraph:
    """Simple directed graph; ``out_rows[u]`` holds the heads of arcs leaving u."""

    n: int
    out_rows: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.out_rows) != self.n:
            raise ValueError("row count must equal n")
        for v, r in enumerate(self.out_rows):
            if (r >> v) & 1:
                raise ValueError(f"self-loop at {v}")

    @classmethod
    def empty(cls, n: int) -> "DiGraph":
        return cls(n, (0,) * n)

    @classmethod
    def complete(cls, n: int) -> "DiGraph":
        full = full_set(n)
        return cls(n, tuple(full & ~(1 << v) for v in range(n)))

    @classmethod
    def from_arcs(cls, n: int, arcs: Iterable[tuple[int, int]]) -> "DiGraph":
        b = DiGraphBuilder(n)
        for u, v in arcs:
            b.add_arc(u, v)
        return b.build()

    def has_arc(self, u: int, v: int) -> bool:
        return (self.out_rows[u] >> v) & 1 == 1

    def out_neighbors(self, v: int) -> VertexSet:
        return self.out_rows[v]

    def in_rows(self) -> tuple[int, ...]:
        rows = [0] * self.n
        for u, r in enumerate(self.out_rows):
            bit = 1 << u
            for v in members(r):
                rows[v] |= bit
        return tuple(rows)

    @property
    def arc_count(self) -> int:
        return sum(r.bit_count() for r in self.out_rows)

    def arcs(self) -> Iterator[tuple[int, int]]:
        for u, r in enumerate(self.out_rows):
            for v in members(r):
                yield u, v

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DiGraph) and self.n == other.n and self.out_rows == other.out_rows

    def __hash__(self) -> int:
        return hash((self.n, self.out_rows))

    def __repr__(self) -> str:
        return f"DiGraph(n={self.n}, arcs={self.arc_count})"


class DiGraphBuilder:
    def __init__(self, n: int):
        self.n = n
        self._rows = [0] * n

    def add_arc(self, u: int, v: int) -> None:
        _check_vertex(self.n, u)
        _check_vertex(self.n, v)
        if u == v:
            raise ValueError(f"self-loop at {u}")
        self._rows[u] |= 1 << v

    def build(self) -> DiGraph:
        return DiGraph(self.n, tuple(self._rows))


def union(*graphs: Graph) -> Graph:
    """Edge-set union of graphs on the same vertex count."""
    if not graphs:
        raise ValueError("union needs at least one graph")
    n = graphs[0].n
    for g in graphs[1:]:
        if g.n != n:
            raise ValueError(f"size mismatch: {n} vs {g.n}")
    if len(graphs) == 1:
        return graphs[0]
    rows = [0] * n
    for g in graphs:
        for v, r in enumerate(g.rows):
            rows[v] |= r
    return Graph(n, tuple(rows))


def degree_into(g: Graph, v: int, s: VertexSet) -> int:
    _check_vertex(g.n, v)
    return (g.rows[v] & s).bit_count()


def common_neighborhood(g: Graph, vs: Sequence[int], s: VertexSet) -> VertexSet:
    """Vertices of ``s`` adjacent to every vertex of ``vs``; ``s`` itself when vs is empty."""
    if len(set(vs)) != len(vs):
        raise ValueError("vertices must be distinct")
    out = s
    for v in vs:
        _check_vertex(g.n, v)
        out &= g.rows[v]
    return out


def bipartite_density(g: Graph, a: VertexSet, b: VertexSet) -> Fraction:
    if a & b:
        raise ValueError("sides overlap")
    na, nb = a.bit_count(), b.bit_count()
    if na == 0 or nb == 0:
        raise ValueError("empty side")
    e = sum((g.rows[v] & b).bit_count() for v in members(a))
    return Fraction(e, na * nb)


# edge-list text format


def format_edge_list(g: Graph | DiGraph) -> str:
    lines = []
    if isinstance(g, DiGraph):
        arcs = list(g.arcs())
        lines.append(f"digraph {g.n} {len(arcs)}")
        lines.extend(f"{u} {v}" for u, v in arcs)
    else:
        edges = list(g.edges())
        lines.append(f"{g.n} {len(edges)}")
        lines.extend(f"{u} {v}" for u, v in edges)
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Graph | DiGraph:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows:
        raise ValueError("empty edge list")
    head = rows[0]
    directed = head[0] == "digraph"
    if directed:
        head = head[1:]
    if len(head) != 2:
        raise ValueError(f"bad header: {' '.join(rows[0])!r}")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError as exc:
        raise ValueError(f"bad header: {' '.join(rows[0])!r}") from exc
    body = rows[1:]
    if len(body) != m:
        raise ValueError(f"header says {m} edges, found {len(body)}")
    pairs = []
    for parts in body:
        if len(parts) != 2:
            raise ValueError(f"bad edge line: {' '.join(parts)!r}")
        u, v = int(parts[0]), int(parts[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"endpoint out of range: {u} {v}")
        if not directed and u >= v:
            raise ValueError(f"undirected edges need u < v: {u} {v}")
        pairs.append((u, v))
    if directed:
        return DiGraph.from_arcs(n, pairs)
    return Graph.from_edges(n, pairs)


def write_edge_list(g: Graph | DiGraph, dest: str | Path | TextIO) -> None:
    text = format_edge_list(g)
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def read_edge_list(src: str | Path | TextIO) -> Graph | DiGraph:
    if isinstance(src, (str, Path)):
        text = Path(src).read_text()
    else:
        text = src.read()
    return parse_edge_list(text)
