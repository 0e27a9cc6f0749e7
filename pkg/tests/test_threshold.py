import itertools
import math
import statistics
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from perturb_lab.generators import PerturbedModel, extremal_bipartite, gnp
from perturb_lab.graph import Graph
from perturb_lab.oracle import count_pk2_copies
from perturb_lab.threshold import (
    ExactOracleDecider,
    JansonStructure,
    SweepPoint,
    bisect_critical_p,
    chernoff_bounds,
    e_tilde,
    estimate_success_prob,
    fit_exponent,
    janson_bounds,
    linked_squares_graph,
    predicted_threshold,
    predicted_threshold_universality,
    relative_entropy,
    wilson_interval,
)


# predicted thresholds


def test_square_cycle_table():
    assert predicted_threshold(0.55, 100).exponent == -1
    p = predicted_threshold(0.30, 100)
    assert (p.k, p.exponent, p.log_exponent) == (3, Fraction(-2, 3), 0)
    p = predicted_threshold(0.25, 100)
    assert (p.k, p.exponent, p.log_exponent) == (3, Fraction(-2, 3), Fraction(1, 3))
    assert predicted_threshold(0.7, 100).zero and predicted_threshold(0.7, 100).value == 0
    assert predicted_threshold(0, 100).exponent == Fraction(-1, 2)


def test_universality_table():
    assert predicted_threshold_universality(0.5, 100).exponent == -1
    p = predicted_threshold_universality(Fraction(1, 3), 100)
    assert (p.exponent, p.log_exponent) == (-1, 1)
    assert predicted_threshold_universality(0.3333333333333, 100).regime == "alpha=1/3"
    assert predicted_threshold_universality(0.2, 100).exponent == Fraction(-2, 3)
    assert predicted_threshold_universality(2 / 3, 100).zero


def test_bad_alpha():
    for a in (-0.1, 1, 1.5):
        with pytest.raises(ValueError):
            predicted_threshold(a, 10)


def test_exponent_tends_to_minus_half():
    exps = [predicted_threshold(Fraction(2, 2 * k + 1), 1000).exponent for k in range(2, 51)]
    assert exps == [Fraction(-(k - 1), 2 * k - 3) for k in range(2, 51)]
    assert all(a < b for a, b in zip(exps, exps[1:]))
    assert abs(float(exps[-1]) + 0.5) < 0.006


def test_k2_matches_half_boundary():
    assert predicted_threshold(0.4, 50).k == 2
    assert predicted_threshold(0.4, 50).exponent == predicted_threshold(0.5, 50).exponent == -1


@given(st.fractions(min_value=Fraction(1, 60), max_value=Fraction(2, 3) - Fraction(1, 1000)))
def test_k_bracket(alpha):
    p = predicted_threshold(alpha, 1000)
    if alpha < Fraction(1, 2):
        assert Fraction(1, p.k + 1) <= alpha < Fraction(1, p.k)
        assert (p.log_exponent != 0) == (alpha == Fraction(1, p.k + 1))


# estimation


def test_wilson_interval():
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi and math.isclose(lo + hi, 1.0)
    lo, hi = wilson_interval(0, 200)
    assert lo == pytest.approx(0.0, abs=1e-12) and hi < 0.02


def test_sweep_point_rejects_bad_counts():
    with pytest.raises(ValueError):
        SweepPoint(0.1, 5, 6, "x", 0)


def _h13(n=9):
    g, _, _ = extremal_bipartite(Fraction(1, 3), n)
    return g


def test_success_at_p1():
    for n in (5, 7, 9):
        pt = estimate_success_prob(PerturbedModel(Graph.empty(n), 1.0, Fraction(0)), ExactOracleDecider(), 5, 0)
        assert pt.successes == 5 and pt.decider == "exact_oracle"


def test_h13_p0_is_zero():
    pt = estimate_success_prob(PerturbedModel(_h13(), 0.0, Fraction(1, 3)), ExactOracleDecider(), 20, 1)
    assert pt.successes == 0


def test_decider_scale_mismatch():
    with pytest.raises(ValueError):
        estimate_success_prob(PerturbedModel(Graph.empty(30), 0.5, Fraction(0)), ExactOracleDecider(), 1, 0)


def test_monotone_in_p():
    model = PerturbedModel(_h13(), 0.0, Fraction(1, 3))
    rates = [estimate_success_prob(model.with_p(p), ExactOracleDecider(), 60, 7) for p in (0.1, 0.3, 0.5, 0.8)]
    for a, b in zip(rates, rates[1:]):
        assert a.rate <= b.interval[1] and a.interval[0] <= b.rate


def test_parallel_matches_serial():
    model = PerturbedModel(_h13(), 0.4, Fraction(1, 3))
    a = estimate_success_prob(model, ExactOracleDecider(), 16, 3)
    b = estimate_success_prob(model, ExactOracleDecider(), 16, 3, jobs=2)
    assert a == b


class _Step:
    kind = "step"

    def __init__(self, p0):
        self.p0 = p0

    def __call__(self, model, seed):
        return model.p >= self.p0


def test_bisect_always_true_returns_lower_end():
    res = bisect_critical_p(PerturbedModel(Graph.empty(5), 0.0, Fraction(0)), lambda m, s: True, 0.01, 0.9, 4, 0)
    assert res.p_hat == 0.01 and len(res.probes) == 1


def test_bisect_synthetic_step():
    res = bisect_critical_p(PerturbedModel(Graph.empty(5), 0.0, Fraction(0)), _Step(0.137), 0.001, 1.0, 3, 0, rel_tol=0.01)
    assert res.converged and abs(math.log(res.p_hat / 0.137)) <= 0.01


def test_bisect_rejects_non_bracketing():
    with pytest.raises(ValueError):
        bisect_critical_p(PerturbedModel(Graph.empty(5), 0.0, Fraction(0)), lambda m, s: False, 0.1, 0.5, 3, 0)
    with pytest.raises(ValueError):
        bisect_critical_p(PerturbedModel(Graph.empty(5), 0.0, Fraction(0)), lambda m, s: False, 0.5, 0.1, 3, 0)


def test_bisect_h13_reproducible_across_batches():
    tol = 0.1
    model = PerturbedModel(_h13(), 0.0, Fraction(1, 3))
    hats = [bisect_critical_p(model, ExactOracleDecider(), 0.02, 0.95, 60, s, tol=tol, rel_tol=0.05).p_hat for s in (1, 2)]
    # compare on the success-rate scale: each estimate should sit within 2 tol of 1/2 under the other batch
    for ph in hats:
        rate = estimate_success_prob(model.with_p(ph), ExactOracleDecider(), 150, 99).rate
        assert abs(rate - 0.5) <= 2 * tol


# exponent fits


def test_fit_exact_power_laws():
    ns = [100, 200, 400, 800]
    fit = fit_exponent([(n, 1 / n) for n in ns])
    assert math.isclose(fit.slope, -1.0) and fit.stderr < 1e-12
    fit = fit_exponent([(n, 3 * n ** (-2 / 3)) for n in ns])
    assert math.isclose(fit.slope, -2 / 3) and fit.stderr < 1e-12
    assert set(fit.to_json()) == {"slope", "intercept", "stderr", "points"}


def test_fit_rejects_bad_designs():
    with pytest.raises(ValueError):
        fit_exponent([(10, 0.1), (20, 0.05)])
    with pytest.raises(ValueError):
        fit_exponent([(10, 0.1), (10, 0.05), (20, 0.01)])
    with pytest.raises(ValueError):
        fit_exponent([(10, 0.0), (20, 0.05), (30, 0.01)])


# Janson and Chernoff


def _brute_e_tilde(m, k):
    g = linked_squares_graph(k, 4)
    edges = list(g.edges())
    return max(sum(a in s and b in s for a, b in edges) for s in map(set, itertools.combinations(range(g.n), m)))


@pytest.mark.parametrize("k", [2, 3, 4])
def test_e_tilde_matches_brute_force(k):
    for m in range(2, 3 * k):
        assert e_tilde(m, k) == _brute_e_tilde(m, k), (k, m)
    assert e_tilde(3, 3) == 3


def test_linked_squares_graph_shape():
    g = linked_squares_graph(3, 2)
    assert g.n == 6 and g.m == 2 * 3 + 1 and g.has_edge(2, 3)


def test_triangle_mean_and_overlap():
    n, p = 100, Fraction(1, 10)
    jb = janson_bounds(JansonStructure("pk2", 3), n, p)
    assert jb.mean == Fraction(math.comb(n, 3)) * p**3
    # ordered pairs of triangles sharing exactly one edge
    assert jb.delta == math.comb(n, 3) * 3 * (n - 3) * p**5
    counts = [count_pk2_copies(gnp(n, 0.1, s), 3) for s in range(400)]
    mean, sd = statistics.fmean(counts), statistics.stdev(counts)
    assert abs(mean - float(jb.mean)) <= 3 * sd / math.sqrt(len(counts))


def test_janson_p0():
    jb = janson_bounds(JansonStructure("pk2", 3), 50, 0)
    assert jb.mean == 0 and jb.delta == 0 and jb.lower_tail == 1.0


@pytest.mark.parametrize("k,n,p", [(3, 120, 0.08), (4, 60, 0.3)])
def test_janson_mean_matches_copy_counts(k, n, p):
    jb = janson_bounds(JansonStructure("pk2", k), n, Fraction(p).limit_denominator(1000))
    counts = [count_pk2_copies(gnp(n, p, 1000 + s), k) for s in range(200)]
    mean, sd = statistics.fmean(counts), statistics.stdev(counts)
    assert abs(mean - float(jb.mean)) <= 3 * sd / math.sqrt(len(counts))


def test_janson_structures():
    plus = janson_bounds(JansonStructure("pk2_plus", 2), 30, Fraction(1, 2))
    direct = janson_bounds(JansonStructure("pk2", 3), 30, Fraction(1, 2))
    assert plus == direct
    linked = janson_bounds(JansonStructure("linked_squares", 2, 2), 30, Fraction(1, 2))
    assert linked.mean == math.perm(30, 4) * Fraction(1, 2) ** 3 and not linked.delta_exact
    assert 0 < linked.lower_tail <= 1
    with pytest.raises(ValueError):
        janson_bounds(JansonStructure("cube", 2), 10, Fraction(1, 2))


def test_chernoff_examples():
    assert chernoff_bounds(100, 0.3, 0).entropy == 1.0
    assert chernoff_bounds(100, 0.3, 0).multiplicative == 1.0
    b = chernoff_bounds(100, 0.5, 0.25)
    assert math.isclose(b.multiplicative, 2 * math.exp(-0.0625 * 50 / 3))
    d = 0.25 * math.log(0.5) + 0.75 * math.log(1.5)
    assert math.isclose(b.entropy, math.exp(-100 * d))
    assert math.isclose(b.entropy, 2.08403717880714e-06, rel_tol=1e-12)
    with pytest.raises(ValueError):
        chernoff_bounds(10, 1.5, 0.1)


@given(st.floats(0.01, 0.99))
def test_relative_entropy_zero_on_diagonal(x):
    assert relative_entropy(x, x) == pytest.approx(0.0, abs=1e-12)
    assert relative_entropy(min(x + 0.005, 1), x) >= 0
