"""Maximum matchings: Hopcroft-Karp for bipartite graphs, Edmonds blossoms for general ones."""

from __future__ import annotations

from collections import deque
from typing import Sequence

from .graph import Graph, VertexSet, members

__all__ = ["hopcroft_karp", "hall_violator", "max_matching_general"]

_INF = float("inf")


def hopcroft_karp(n_left: int, n_right: int, adj: Sequence[Sequence[int]]) -> list[int]:
    """Maximum bipartite matching; returns match_left[i] = right index or -1."""
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    dist = [0.0] * n_left

    def bfs() -> bool:
        q = deque()
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0
                q.append(u)
            else:
                dist[u] = _INF
        found = False
        while q:
            u = q.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == _INF:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return found

    def dfs(u: int) -> bool:
        # iterative to keep recursion shallow on long augmenting paths
        stack = [(u, iter(adj[u]))]
        path = []
        while stack:
            x, it = stack[-1]
            advanced = False
            for v in it:
                w = match_r[v]
                if w == -1:
                    path.append((x, v))
                    for a, b in path:
                        match_l[a] = b
                        match_r[b] = a
                    return True
                if dist[w] == dist[x] + 1:
                    path.append((x, v))
                    stack.append((w, iter(adj[w])))
                    advanced = True
                    break
            if not advanced:
                dist[x] = _INF
                stack.pop()
                if path:
                    path.pop()
        return False

    while bfs():
        for u in range(n_left):
            if match_l[u] == -1:
                dfs(u)
    return match_l


def hall_violator(n_left: int, adj: Sequence[Sequence[int]], match_l: Sequence[int], n_right: int) -> list[int]:
    """Left set S with |N(S)| < |S|, from an unmatched left vertex (empty if perfect)."""
    match_r = [-1] * n_right
    for u, v in enumerate(match_l):
        if v != -1:
            match_r[v] = u
    free = [u for u in range(n_left) if match_l[u] == -1]
    if not free:
        return []
    seen_l = {free[0]}
    seen_r: set[int] = set()
    q = deque([free[0]])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v in seen_r:
                continue
            seen_r.add(v)
            w = match_r[v]
            if w != -1 and w not in seen_l:
                seen_l.add(w)
                q.append(w)
    return sorted(seen_l)


def max_matching_general(g: Graph, within: VertexSet | None = None, initial: dict[int, int] | None = None) -> dict[int, int]:
    """Maximum matching of g[within] by Edmonds' blossom algorithm.

    Returns a symmetric dict mate[v] = u.
    """
    verts = members(within) if within is not None else list(range(g.n))
    index = {v: i for i, v in enumerate(verts)}
    n = len(verts)
    mask = within if within is not None else (1 << g.n) - 1
    adj = [[index[u] for u in members(g.rows[v] & mask)] for v in verts]
    match = [-1] * n
    if initial:
        for v, u in initial.items():
            if v in index and u in index:
                match[index[v]] = index[u]
    # greedy start
    for v in range(n):
        if match[v] == -1:
            for u in adj[v]:
                if match[u] == -1:
                    match[v] = u
                    match[u] = v
                    break

    def find_path(root: int) -> tuple[int, list[int]]:
        used = [False] * n
        parent = [-1] * n
        base = list(range(n))
        used[root] = True
        q = deque([root])

        def lca(a: int, b: int) -> int:
            seen = [False] * n
            while True:
                a = base[a]
                seen[a] = True
                if match[a] == -1:
                    break
                a = parent[match[a]]
            while True:
                b = base[b]
                if seen[b]:
                    return b
                b = parent[match[b]]

        def mark_path(v: int, b: int, child: int, blossom: list) -> None:
            while base[v] != b:
                blossom[base[v]] = True
                blossom[base[match[v]]] = True
                parent[v] = child
                child = match[v]
                v = parent[match[v]]

        while q:
            v = q.popleft()
            for to in adj[v]:
                if base[v] == base[to] or match[v] == to:
                    continue
                if to == root or (match[to] != -1 and parent[match[to]] != -1):
                    cur = lca(v, to)
                    blossom = [False] * n
                    mark_path(v, cur, to, blossom)
                    mark_path(to, cur, v, blossom)
                    for i in range(n):
                        if blossom[base[i]]:
                            base[i] = cur
                            if not used[i]:
                                used[i] = True
                                q.append(i)
                elif parent[to] == -1:
                    parent[to] = v
                    if match[to] == -1:
                        return to, parent
                    used[match[to]] = True
                    q.append(match[to])
        return -1, parent

    for root in range(n):
        if match[root] != -1:
            continue
        v, parent = find_path(root)
        while v != -1:
            pv = parent[v]
            ppv = match[pv]
            match[v] = pv
            match[pv] = v
            v = ppv
    return {verts[v]: verts[u] for v, u in enumerate(match) if u != -1}
