"""Seeded random graphs and the deterministic families they perturb."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .graph import DiGraph, Graph, GraphBuilder, VertexSet, full_set, members, union

__all__ = [
    "derive_seed",
    "make_rng",
    "np_rng",
    "as_fraction",
    "round_half_even",
    "gnp",
    "gnp_directed",
    "gnp_multipartite",
    "gnp_on_set",
    "dense_bipartite",
    "extremal_bipartite",
    "PerturbedModel",
    "stable_instance",
]


def derive_seed(base: int, label: str, index: int = 0) -> int:
    """Child seed: first 8 bytes (big-endian) of sha256(f"{base}:{label}:{index}")."""
    digest = hashlib.sha256(f"{int(base)}:{label}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def make_rng(base: int, label: str, index: int = 0) -> random.Random:
    return random.Random(derive_seed(base, label, index))


def np_rng(base: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(base, label, index)))


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**6)


def round_half_even(x) -> int:
    return round(as_fraction(x))


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")


def _skip_indices(total: int, p: float, rng: random.Random) -> Iterator[int]:
    """Indices in [0, total) kept independently with probability p (geometric skipping)."""
    if p <= 0.0 or total <= 0:
        return
    if p >= 1.0:
        yield from range(total)
        return
    log_q = math.log1p(-p)
    i = -1
    while True:
        r = rng.random()
        i += 1 + int(math.log1p(-r) / log_q)
        if i >= total:
            return
        yield i


def gnp(n: int, p: float, seed: int) -> Graph:
    """Binomial random graph G(n, p)."""
    _check_p(p)
    if p == 1.0:
        return Graph.complete(n)
    rows = [0] * n
    rng = make_rng(seed, "gnp", n)
    # pair index enumerates (v, w) with w < v, row v starting at v(v-1)/2
    v, base = 1, 0
    for idx in _skip_indices(n * (n - 1) // 2, p, rng):
        while idx >= base + v:
            base += v
            v += 1
        w = idx - base
        rows[v] |= 1 << w
        rows[w] |= 1 << v
    return Graph(n, tuple(rows))


def gnp_on_set(n: int, s: VertexSet, p: float, seed: int) -> Graph:
    """G(|s|, p) placed on the vertices of ``s`` inside an n-vertex graph."""
    verts = members(s)
    small = gnp(len(verts), p, seed)
    rows = [0] * n
    for i, v in enumerate(verts):
        r = 0
        for j in members(small.rows[i]):
            r |= 1 << verts[j]
        rows[v] = r
    return Graph(n, tuple(rows))


def gnp_directed(n: int, p: float, seed: int) -> DiGraph:
    _check_p(p)
    if p == 1.0:
        return DiGraph.complete(n)
    rows = [0] * n
    if n < 2:
        return DiGraph(n, tuple(rows))
    rng = make_rng(seed, "gnp_directed", n)
    for idx in _skip_indices(n * (n - 1), p, rng):
        u, j = divmod(idx, n - 1)
        v = j if j < u else j + 1
        rows[u] |= 1 << v
    return DiGraph(n, tuple(rows))


def gnp_multipartite(part_sizes: Sequence[int], p: float, seed: int) -> Graph:
    """Random k-partite graph; parts are consecutive vertex ranges in the given order."""
    _check_p(p)
    if any(s <= 0 for s in part_sizes):
        raise ValueError("parts must be nonempty")
    starts = [0]
    for s in part_sizes:
        starts.append(starts[-1] + s)
    n = starts[-1]
    rows = [0] * n
    rng = make_rng(seed, "gnp_multipartite", len(part_sizes))
    for i in range(len(part_sizes)):
        for j in range(i + 1, len(part_sizes)):
            si, sj = part_sizes[i], part_sizes[j]
            for idx in _skip_indices(si * sj, p, rng):
                a, b = divmod(idx, sj)
                u, v = starts[i] + a, starts[j] + b
                rows[u] |= 1 << v
                rows[v] |= 1 << u
    return Graph(n, tuple(rows))


def _pack_rows(mat: np.ndarray) -> list[int]:
    packed = np.packbits(mat, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def dense_bipartite(
    n: int, a: Sequence[int], b_start: int, b_size: int, p: float, seed: int
) -> list[int]:
    """Rows of a random bipartite graph between vertices ``a`` and the range
    [b_start, b_start + b_size), each pair present with probability p.

    Returns full n-length adjacency rows (only the bipartite edges set).
    """
    _check_p(p)
    rng = np_rng(seed, "dense_bipartite", b_start)
    mat = rng.random((len(a), b_size)) < p
    rows = [0] * n
    a_rows = _pack_rows(mat)
    for v, r in zip(a, a_rows):
        rows[v] = r << b_start
    b_rows = _pack_rows(np.ascontiguousarray(mat.T))
    a_sorted = list(a)
    contiguous = a_sorted == list(range(a_sorted[0], a_sorted[0] + len(a_sorted))) if a_sorted else True
    for j, r in enumerate(b_rows):
        if contiguous and a_sorted:
            rows[b_start + j] = r << a_sorted[0]
        else:
            bits = 0
            for i in members(r):
                bits |= 1 << a_sorted[i]
            rows[b_start + j] = bits
    return rows


def extremal_bipartite(alpha, n: int) -> tuple[Graph, VertexSet, VertexSet]:
    """Complete bipartite H_alpha with A = {0..|A|-1}, |A| = round(alpha n)."""
    a_frac = as_fraction(alpha)
    if not 0 < a_frac < Fraction(1, 2):
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    size_a = round(a_frac * n)
    a = full_set(size_a)
    b = full_set(n) & ~a
    b_builder = GraphBuilder(n)
    b_builder.join(a, b)
    return b_builder.build(), a, b


@dataclass(frozen=True)
class PerturbedModel:
    """The union of a fixed dense graph with G(n, p)."""

    dense_part: Graph
    p: float
    alpha: Fraction

    def __post_init__(self) -> None:
        _check_p(self.p)

    @property
    def n(self) -> int:
        return self.dense_part.n

    def claims_min_degree(self) -> bool:
        return self.dense_part.min_degree() >= math.floor(as_fraction(self.alpha) * self.n)

    def random_part(self, seed: int) -> Graph:
        return gnp(self.n, self.p, derive_seed(seed, "perturb", 0))

    def sample(self, seed: int) -> Graph:
        return union(self.dense_part, self.random_part(seed))

    def with_p(self, p: float) -> "PerturbedModel":
        return PerturbedModel(self.dense_part, p, self.alpha)


def stable_instance(alpha, beta, n: int, noise, seed: int):
    """Noisy copy of H_alpha that stays (alpha, beta)-stable; see :mod:`.stability`."""
    from .stability import stable_instance as _impl

    return _impl(alpha, beta, n, noise, seed)
