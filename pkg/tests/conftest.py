import itertools
import random

import pytest
from hypothesis import settings, strategies as st

from perturb_lab.graph import Graph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_graph(n: int, p: float, rng: random.Random) -> Graph:
    return Graph.from_edges(n, [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p])


@st.composite
def graphs(draw, min_n=1, max_n=9):
    n = draw(st.integers(min_n, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph.from_edges(n, [e for e, keep in zip(pairs, mask) if keep])


def brute_square_cycle(g: Graph) -> bool:
    """Try every cyclic ordering with vertex 0 first; independent of the library search."""
    n = g.n
    if n < 3:
        return False
    for rest in itertools.permutations(range(1, n)):
        order = (0,) + rest
        if all(g.has_edge(order[i], order[(i + d) % n]) for i in range(n) for d in (1, 2) if order[i] != order[(i + d) % n]):
            return True
    return False


def brute_square_path(g: Graph, seq) -> bool:
    return all(g.has_edge(seq[i], seq[j]) for i in range(len(seq)) for j in (i + 1, i + 2) if j < len(seq))


@pytest.fixture
def rng():
    return random.Random(20240601)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
