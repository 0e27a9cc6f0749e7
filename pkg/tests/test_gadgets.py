import itertools
import math
import random

import pytest

from perturb_lab.gadgets import (
    Rounds,
    TransversalFamily,
    absorb_leftover,
    admissible_sizes,
    bookkeeping,
    build_F,
    build_linkgraphs,
    dfs_random_greedy_path,
    final_matching,
    find_linked_squares,
    find_sublinear_square_paths,
    gen_bipartite_instance,
    gen_super_regular_instance,
    random_greedy_transversal,
    run_bipartite_pipeline,
    run_multipartite_pipeline,
    sample_F_tilde,
    sample_rounds,
    split_probabilities,
)
from perturb_lab.graph import Graph, members, union
from perturb_lab.powers import verify_square_path
from perturb_lab.squares import StageReport

N_DESK = 2000


# instances and bookkeeping


def test_admissible_sizes_example():
    # the size window [404.8, 480.7] of the n=506 example, with the exact balancing congruence
    sizes = admissible_sizes(2, 506, 0.2, 0.05)
    brute = [m for m in range(405, 481) if (506 - m + 1) % 5 == 0]
    assert sizes == brute and sizes[0] == 407 and sizes[-1] == 477
    inst = gen_super_regular_instance(2, 506, 0.3, 0.2, 0.05, 1, m=sizes[0])
    assert inst.m == 407 and inst.min_degree_ok() and inst.tuples_ok()


@pytest.mark.parametrize("k", [2, 3, 4])
def test_bookkeeping_identities(k):
    for n in range(60, 200):
        for m in admissible_sizes(k, n, 0.3, 0.1):
            bk = bookkeeping(k, n, m)
            assert bk.leftover_copies == bk.m0 - bk.t == bk.z_total - 2
            assert 4 + 4 * bk.z_total + (bk.t - 1) == n + 4
            assert k * (2 + bk.m0) + bk.z_total == k * m
    with pytest.raises(ValueError):
        bookkeeping(2, 100, 72)


def test_instance_with_full_density():
    inst = gen_super_regular_instance(2, 60, 1.0, 0.3, 0.1, 2)
    assert inst.min_degree_ok() and inst.tuples_ok()
    assert inst.graph.edge_count == 2 * inst.size_v * inst.m
    assert build_F(inst).edge_count() == inst.m ** 2


def test_instance_rejects_bad_deltas():
    with pytest.raises(ValueError):
        gen_super_regular_instance(2, 100, 0.3, 0.15, 0.1, 0)
    with pytest.raises(ValueError):
        gen_super_regular_instance(2, 100, 0.3, 0.3, 0.1, 0, m=72)


def test_instance_invariants_and_determinism():
    inst = gen_super_regular_instance(2, 300, 0.3, 0.3, 0.1, 4)
    assert inst.min_degree_ok() and inst.tuples_ok()
    assert 0.45 < inst.density_diagnostic() < 0.75
    again = gen_super_regular_instance(2, 300, 0.3, 0.3, 0.1, 4)
    assert again.graph == inst.graph and again.x_tuple == inst.x_tuple


# hypergraphs


def test_f_tilde_empty_at_p0():
    inst = gen_super_regular_instance(2, 100, 0.3, 0.3, 0.1, 0)
    assert sample_F_tilde(inst, 0.0, 1).edge_count() == 0


@pytest.mark.parametrize("k,p", [(2, 0.05), (3, 0.3)])
def test_f_tilde_fraction_of_sampled_tuples(k, p):
    inst = gen_super_regular_instance(k, 200, 0.3, 0.3, 0.1, 3)
    f = build_F(inst)
    ft = sample_F_tilde(inst, p, 5)
    rnd = random.Random(9)
    classes = [members(inst.u_mask(i)) for i in range(k)]
    in_f = in_ft = 0
    for _ in range(10_000):
        tup = tuple(rnd.choice(c) for c in classes)
        if f.in_F(tup):
            in_f += 1
            in_ft += tup in ft
    q = p ** (2 * k - 3)
    assert abs(in_ft - in_f * q) <= 4 * math.sqrt(in_f * q * (1 - q))


def test_membership_checks_classes():
    inst = gen_super_regular_instance(2, 60, 1.0, 0.3, 0.1, 2)
    ft = sample_F_tilde(inst, 1.0, 0)
    u1, u2 = members(inst.u_mask(0))[0], members(inst.u_mask(1))[0]
    assert (u1, u2) in ft
    assert (u2, u1) not in ft
    assert (u1,) not in ft


def test_f_min_degree_floor():
    inst = gen_super_regular_instance(2, 400, 0.3, 0.3, 0.1, 1)
    degrees = build_F(inst).degrees_k2()
    assert degrees.min() >= (1 - 2 * 0.02) * inst.m


# transversal family


def test_greedy_full_density():
    inst = gen_super_regular_instance(2, 60, 1.0, 0.3, 0.1, 2)
    fam = random_greedy_transversal(inst, 1.0, 0.9, 1)
    assert len(fam) == fam.target == math.floor(0.9 * inst.m)


def test_greedy_starves_at_p0():
    inst = gen_super_regular_instance(2, 60, 0.3, 0.3, 0.1, 2)
    out = random_greedy_transversal(inst, 0.0, 0.9, 1)
    assert isinstance(out, StageReport) and out.stats["achieved"] == 0


@pytest.fixture(scope="module")
def desk_runs():
    """k=2, n=2000, d=0.3, p=40/n: family, link graphs and DFS path for 30 seeds."""
    p = 40 / N_DESK
    out = []
    for s in range(30):
        inst = gen_super_regular_instance(2, N_DESK, 0.3, 0.3, 0.1, s)
        fam = random_greedy_transversal(inst, p, 0.9, s)
        if isinstance(fam, StageReport):
            out.append((inst, fam, None, None))
            continue
        links = build_linkgraphs(fam, inst, p, s)
        t = min(bookkeeping(2, N_DESK, inst.m).t, len(fam))
        out.append((inst, fam, links, dfs_random_greedy_path(links, t, s)))
    return out


def test_greedy_desk_rate_and_t_degree_floor(desk_runs):
    fams = [(inst, fam) for inst, fam, _, _ in desk_runs if not isinstance(fam, StageReport)]
    assert len(fams) >= 24
    for inst, fam in fams:
        assert fam.t_degrees_ok(inst)
        used = [v for c in fam.copies for v in c]
        assert len(used) == len(set(used))
        assert all(inst.class_of(c[i]) == i for c in fam.copies for i in range(2))


def test_fstar_min_degree(desk_runs):
    for inst, fam, links, _ in desk_runs:
        if links is not None:
            assert links.fstar_degrees().min() >= (1 - 2 * 0.02) * len(fam)


def test_dfs_desk_rate(desk_runs):
    ok = 0
    for _, _, links, res in desk_runs:
        if res is not None and res.success:
            ok += 1
            assert all(links.arc(a, b) for a, b in zip(res.path, res.path[1:]))
    assert ok >= 24


def _complete_setup(n=60):
    inst = gen_super_regular_instance(2, n, 1.0, 0.3, 0.1, 2)
    fam = random_greedy_transversal(inst, 1.0, 0.9, 1)
    return inst, fam


def test_linkgraphs_extremes():
    inst, fam = _complete_setup()
    full = build_linkgraphs(fam, inst, 1.0, 0)
    assert full.fstar_degrees().min() == len(fam) - 1
    empty = build_linkgraphs(fam, inst, 0.0, 0)
    assert all(not empty.out_arcs(i) for i in range(len(fam)))
    with pytest.raises(ValueError):
        build_linkgraphs(TransversalFamily([], [], 0), inst, 1.0, 0)


def test_dfs_extremes():
    inst, fam = _complete_setup()
    links = build_linkgraphs(fam, inst, 1.0, 0)
    res = dfs_random_greedy_path(links, len(fam), 3)
    assert res.success and len(res.path) == len(fam) and res.dead_ends == 0
    assert res.steps == len(fam)
    none = dfs_random_greedy_path(build_linkgraphs(fam, inst, 0.0, 0), 10, 3)
    assert not none.success and none.dead_ends >= 1
    with pytest.raises(ValueError):
        dfs_random_greedy_path(links, len(fam) + 1, 0)


# absorption and final matching


def test_final_matching_complete_and_mismatch():
    inst, fam = _complete_setup()
    path = list(range(5))
    v_rest = sum(1 << v for v in range(4, 8))
    match = final_matching(inst, fam, path, v_rest)
    assert sorted(match.values()) == list(range(4, 8))
    with pytest.raises(ValueError):
        final_matching(inst, fam, path, v_rest | (1 << 8))


def test_absorb_fails_without_v_paths():
    inst = gen_super_regular_instance(2, 300, 0.3, 0.3, 0.1, 1)
    p = 0.2
    rounds = sample_rounds(inst, p, 1)
    no_paths = Rounds(rounds.g0, rounds.g1, Graph.empty(inst.graph.n))
    res = run_multipartite_pipeline(inst, p, 1, rounds=no_paths)
    assert not res.success and res.failed_stage == "absorb"


def test_absorb_rejects_wrong_leftover_count():
    inst, fam = _complete_setup()
    with pytest.raises(ValueError):
        absorb_leftover(inst, (fam.copies[0], fam.copies[1]), fam, list(range(2, len(fam))), 0, Graph.empty(inst.graph.n), 0)


# full multipartite pipeline


def _check_output(inst, res, rounds):
    seq = res.sequence
    assert sorted(seq) == list(range(inst.graph.n))
    host = union(inst.graph, rounds.g0, rounds.g1, rounds.g2)
    assert verify_square_path(host, seq, relax_end_edges=True)
    assert seq[:2] == [inst.x_tuple[1], inst.x_tuple[0]]
    assert seq[-2:] == [inst.y_tuple[0], inst.y_tuple[1]]


def test_multipartite_full_density():
    inst = gen_super_regular_instance(2, 100, 1.0, 0.3, 0.1, 3)
    rounds = sample_rounds(inst, 1.0, 3)
    # at d=1 the default absorb threshold is all of V, which the connectors themselves eat into
    res = run_multipartite_pipeline(inst, 1.0, 3, rounds=rounds, absorb_threshold=10)
    assert res.success
    _check_output(inst, res, rounds)


def test_multipartite_p0_fails_at_anchors():
    inst = gen_super_regular_instance(2, 100, 0.3, 0.3, 0.1, 3)
    res = run_multipartite_pipeline(inst, 0.0, 3)
    assert not res.success and res.failed_stage == "anchors"


@pytest.mark.parametrize("seed", range(3))
def test_multipartite_desk_scale(seed):
    inst = gen_super_regular_instance(2, N_DESK, 0.3, 0.3, 0.1, seed)
    rounds = sample_rounds(inst, 40 / N_DESK, seed)
    res = run_multipartite_pipeline(inst, 40 / N_DESK, seed, rounds=rounds)
    assert res.success, res.failed_stage
    _check_output(inst, res, rounds)
    assert res.to_json()["bookkeeping"]["|Z|"] == res.bookkeeping.z_total


def test_multipartite_k3():
    n = 600
    inst = gen_super_regular_instance(3, n, 0.3, 0.3, 0.1, 1)
    p = 20 * n ** (-2 / 3)
    rounds = sample_rounds(inst, p, 1)
    res = run_multipartite_pipeline(inst, p, 1, rounds=rounds)
    assert res.success, res.failed_stage
    _check_output(inst, res, rounds)


# bipartite pipeline


@pytest.mark.parametrize("m_frac", [1.0, 0.9, 0.75])
def test_split_probabilities(m_frac):
    n = 2000
    m = int(m_frac * n)
    q1, q2 = split_probabilities(n, m, 0.3, 0.1)
    c = 0.8
    assert math.isclose(q2 * m, c * (1 - 2 * q1) * n)
    assert math.isclose(q1 * n, c * (1 - 2 * q2) * m)
    if m == n:
        assert 1 / 7 <= q1 <= 3 / 7 and 1 / 7 <= q2 <= 3 / 7


def test_bipartite_p0_fails_at_bridge():
    bi = gen_bipartite_instance(400, 400, 0.3, 1)
    res = run_bipartite_pipeline(bi.u_set, bi.v_set, bi.graph, 0.0, 1, x_tuple=bi.x_tuple, y_tuple=bi.y_tuple, d=0.3)
    assert not res.success and res.failed_stage == "bridge"


def test_bipartite_desk_scale():
    n = N_DESK
    bi = gen_bipartite_instance(n, n, 0.3, 0)
    res = run_bipartite_pipeline(
        bi.u_set, bi.v_set, bi.graph, 60 / n, 0, x_tuple=bi.x_tuple, y_tuple=bi.y_tuple, d=0.3, split_c=0.72
    )
    assert res.success, res.failed_stage
    seq = res.sequence
    assert sorted(seq) == list(range(bi.graph.n))
    assert seq[:2] == [bi.x_tuple[1], bi.x_tuple[0]] and seq[-2:] == [bi.y_tuple[0], bi.y_tuple[1]]


def test_bipartite_instance_rejects_sizes():
    with pytest.raises(ValueError):
        gen_bipartite_instance(100, 70, 0.3, 0)


# linked squares and sublinear square paths


def test_find_linked_squares_examples():
    cands = [(0, 1, 2, 3, 4, 5), (5, 4, 3, 2, 1, 0)]
    assert find_linked_squares(cands, Graph.complete(6), 3) == (0, 1, 2, 3, 4, 5)
    assert find_linked_squares(cands, Graph.empty(6), 3) is None
    g = Graph.from_edges(5, [(1, 3)])
    pairs = itertools.permutations(range(5), 2)
    assert find_linked_squares(pairs, g, 2) == (1, 3)


def test_sublinear_on_complete_graph():
    k30 = Graph.complete(30)
    res = find_sublinear_square_paths(k30, 2, 0, 0.0, 0, count=5, random_graph=k30)
    assert len(res) == 5 and all(p.verify(k30) for p in res)
    used = [v for piece in res for v in piece.vertices]
    assert len(used) == len(set(used)) == 15


def _circulant(n: int, half: int) -> Graph:
    return Graph.from_edges(n, [(v, (v + j) % n) if v < (v + j) % n else ((v + j) % n, v) for v in range(n) for j in range(1, half + 1)])


def test_sublinear_hub_regime_needs_random_edges():
    g = _circulant(200, 40)
    res = find_sublinear_square_paths(g, 2, 1, 0.0, 0)
    assert isinstance(res, StageReport) and res.stats["regime"] == "hub"


def test_sublinear_desk_rate():
    n, k = N_DESK, 2
    g = _circulant(n, round(n ** 0.4 / 2))
    p = 10 * math.log(n) / n
    ok = 0
    for s in range(30):
        res = find_sublinear_square_paths(g, k, 1, p, s)
        if not isinstance(res, StageReport):
            ok += 1
            used = [v for piece in res for v in piece.vertices]
            assert len(used) == len(set(used)) and all(len(piece) == k + 1 for piece in res)
    assert ok >= 24
