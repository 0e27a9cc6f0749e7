"""Counting witnesses proving that a graph contains no square Hamilton cycle.

Both certificates assume a partition (A, B) with A independent in the whole
graph.  In any square Hamilton cycle two A-vertices are then at cyclic distance
at least 3, so the cycle splits into |A| runs of B-vertices, each of length at
least 2, with total length n - |A|.

* packing: a run of length L contains floor(L/k) disjoint P_k^2 copies inside B,
  so the number c of P_k^2 copies inside B satisfies c >= (n - k|A|)/k.
* small gap: a B-vertex lying in no P_k^2 copy inside B must sit in a run of
  length < k.  Counting runs gives z <= (k-1)(c_plus + max(0, (k+1)|A| - n))
  where c_plus counts P_{k+1}^2 copies inside B; the certificate uses the weaker
  right-hand side (k^2-1) c_plus + (k-1) max(0, (k+1)|A| - n).  For k = 2 every
  run already has length >= k, so z >= 1 suffices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .graph import Graph, VertexSet, full_set, members
from .oracle import count_pk2_copies, max_disjoint_pk2_packing, vertices_in_pk2_copies

__all__ = [
    "AbsenceCertificate",
    "NotApplicable",
    "packing_obstruction",
    "small_gap_obstruction",
    "any_certificate",
]

PACKING = "packing_obstruction"
SMALL_GAP = "small_gap_obstruction"


@dataclass(frozen=True)
class NotApplicable:
    reason: str

    def to_json(self) -> dict:
        return {"status": "not_applicable", "reason": self.reason}


@dataclass(frozen=True)
class AbsenceCertificate:
    """A fired certificate.  The inequality ``lhs relation rhs`` holds exactly."""

    kind: str
    a: tuple[int, ...]
    b: tuple[int, ...]
    k: int
    counts: dict = field(default_factory=dict)
    lhs: Fraction = Fraction(0)
    rhs: Fraction = Fraction(0)
    relation: str = "<"
    mode: str = "count"

    def holds(self) -> bool:
        if self.relation == "<":
            return self.lhs < self.rhs
        if self.relation == ">":
            return self.lhs > self.rhs
        if self.relation == ">=":
            return self.lhs >= self.rhs
        raise ValueError(f"unknown relation {self.relation}")

    def recheck(self, g: Graph) -> bool:
        """Recompute the certificate from g and confirm it still fires identically."""
        a = sum(1 << v for v in self.a)
        b = sum(1 << v for v in self.b)
        if self.kind == PACKING:
            again = packing_obstruction(g, a, b, self.k, mode=self.mode)
        else:
            again = small_gap_obstruction(g, a, b, self.k)
        return isinstance(again, AbsenceCertificate) and again == self and self.holds()

    def to_json(self) -> dict:
        return {
            "status": "certificate",
            "kind": self.kind,
            "mode": self.mode,
            "k": self.k,
            "A": list(self.a),
            "B": list(self.b),
            "counts": dict(self.counts),
            "inequality": {
                "lhs": str(self.lhs),
                "relation": self.relation,
                "rhs": str(self.rhs),
            },
            "claim": "no square Hamilton cycle",
        }


def _preconditions(g: Graph, a: VertexSet, b: VertexSet, k: int) -> NotApplicable | None:
    if k < 2:
        raise ValueError("k must be >= 2")
    if a & b or (a | b) != full_set(g.n):
        raise ValueError("(A, B) must partition the vertex set")
    if a == 0:
        return NotApplicable("A is empty")
    for v in members(a):
        if g.rows[v] & a:
            return NotApplicable("A has an internal edge")
    return None


def packing_obstruction(
    g: Graph, a: VertexSet, b: VertexSet, k: int, mode: str = "count"
) -> AbsenceCertificate | NotApplicable:
    """Fires when B holds fewer than (n - k|A|)/k copies (or disjoint copies) of P_k^2."""
    bad = _preconditions(g, a, b, k)
    if bad is not None:
        return bad
    n, na = g.n, a.bit_count()
    rhs = Fraction(n - k * na, k)
    if rhs <= 0:
        return NotApplicable("right-hand side is not positive")
    if mode == "count":
        c = count_pk2_copies(g, k, b, limit=math.ceil(rhs))
        counts = {"copies": c}
    elif mode == "packing":
        c, exact = max_disjoint_pk2_packing(g, k, b)
        if not exact:
            return NotApplicable("packing search not exhaustive")
        counts = {"packing": c}
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if c >= rhs:
        return NotApplicable("enough copies inside B")
    return AbsenceCertificate(
        kind=PACKING,
        a=tuple(members(a)),
        b=tuple(members(b)),
        k=k,
        counts=counts,
        lhs=Fraction(c),
        rhs=rhs,
        relation="<",
        mode=mode,
    )


def small_gap_obstruction(
    g: Graph, a: VertexSet, b: VertexSet, k: int
) -> AbsenceCertificate | NotApplicable:
    """Fires when too many B-vertices lie in no P_k^2 copy inside B."""
    bad = _preconditions(g, a, b, k)
    if bad is not None:
        return bad
    n, na, nb = g.n, a.bit_count(), b.bit_count()
    slack = max(0, (k + 1) * na - n)
    if k == 2:
        c_plus = 0
        rhs = Fraction(1)
        relation = ">="
    else:
        # z <= |B|, so counting c_plus past |B|/(k^2-1) is pointless
        c_plus = count_pk2_copies(g, k + 1, b, limit=nb // (k * k - 1) + 1)
        rhs = Fraction((k * k - 1) * c_plus + (k - 1) * slack)
        relation = ">"
        if rhs >= nb:
            return NotApplicable("right-hand side already exceeds |B|")
    covered = vertices_in_pk2_copies(g, k, b)
    z = (b & ~covered).bit_count()
    fires = z >= rhs if relation == ">=" else z > rhs
    if not fires:
        return NotApplicable("too few uncovered B-vertices")
    return AbsenceCertificate(
        kind=SMALL_GAP,
        a=tuple(members(a)),
        b=tuple(members(b)),
        k=k,
        counts={"uncovered": z, "copies_plus": c_plus, "slack": slack},
        lhs=Fraction(z),
        rhs=rhs,
        relation=relation,
    )


def any_certificate(
    g: Graph, a: VertexSet, b: VertexSet, k: int
) -> AbsenceCertificate | NotApplicable:
    """First certificate that fires, else the last NotApplicable."""
    res = packing_obstruction(g, a, b, k)
    if isinstance(res, AbsenceCertificate):
        return res
    return small_gap_obstruction(g, a, b, k)
