"""Predicted thresholds, Monte Carlo success estimation, bisection, exponent fits,
and the Janson / Chernoff calculators."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .generators import PerturbedModel, as_fraction, derive_seed
from .graph import Graph, full_set
from .oracle import find_square_ham_cycle
from .powers import square_of_path, square_path_aut_order, square_path_pairs

__all__ = [
    "ThresholdPrediction",
    "predicted_threshold",
    "predicted_threshold_universality",
    "wilson_interval",
    "SweepPoint",
    "SweepResult",
    "ExactOracleDecider",
    "CertificateRefuterDecider",
    "ExtremalPipelineDecider",
    "estimate_success_prob",
    "BisectResult",
    "bisect_critical_p",
    "FitResult",
    "fit_exponent",
    "e_tilde",
    "linked_squares_graph",
    "JansonStructure",
    "JansonBounds",
    "janson_bounds",
    "ChernoffBounds",
    "chernoff_bounds",
    "relative_entropy",
]

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class ThresholdPrediction:
    """p_hat(n) = n^exponent (log n)^log_exponent, or identically 0 when ``zero``."""

    alpha: Fraction
    regime: str
    k: int | None
    exponent: Fraction | None
    log_exponent: Fraction
    value: float

    @property
    def zero(self) -> bool:
        return self.exponent is None


def _near(alpha: Fraction, target: Fraction) -> bool:
    return abs(float(alpha) - float(target)) <= _BOUNDARY_TOL


def _alpha(alpha) -> Fraction:
    a = as_fraction(alpha)
    # snap floats that sit on a boundary of the form 1/j
    if a > 0:
        j = round(1 / a)
        if j >= 1 and _near(a, Fraction(1, j)):
            return Fraction(1, j)
    for target in (Fraction(2, 3),):
        if _near(a, target):
            return target
    return a


def _evaluate(n: int, exponent: Fraction | None, log_exponent: Fraction) -> float:
    if exponent is None:
        return 0.0
    return n ** float(exponent) * math.log(n) ** float(log_exponent)


def predicted_threshold(alpha, n: int) -> ThresholdPrediction:
    """Threshold for the square of a Hamilton cycle in the perturbed model."""
    a = _alpha(alpha)
    if not 0 <= a < 1:
        raise ValueError("alpha must lie in [0, 1)")
    zero = Fraction(0)
    if a >= Fraction(2, 3):
        return ThresholdPrediction(a, "alpha>=2/3", None, None, zero, 0.0)
    if a >= Fraction(1, 2):
        e = Fraction(-1)
        return ThresholdPrediction(a, "[1/2,2/3)", None, e, zero, _evaluate(n, e, zero))
    if a == 0:
        e = Fraction(-1, 2)
        return ThresholdPrediction(a, "alpha=0", None, e, zero, _evaluate(n, e, zero))
    k = math.ceil(1 / a) - 1
    e = Fraction(-(k - 1), 2 * k - 3)
    if a == Fraction(1, k + 1):
        le = Fraction(1, 2 * k - 3)
        return ThresholdPrediction(a, f"alpha=1/{k + 1}", k, e, le, _evaluate(n, e, le))
    return ThresholdPrediction(a, f"(1/{k + 1},1/{k})", k, e, zero, _evaluate(n, e, zero))


def predicted_threshold_universality(alpha, n: int) -> ThresholdPrediction:
    """Threshold for containing every graph of maximum degree two."""
    a = _alpha(alpha)
    if not 0 <= a < 1:
        raise ValueError("alpha must lie in [0, 1)")
    zero = Fraction(0)
    third = Fraction(1, 3)
    if a >= Fraction(2, 3):
        return ThresholdPrediction(a, "alpha>=2/3", None, None, zero, 0.0)
    if a > third:
        e = Fraction(-1)
        return ThresholdPrediction(a, "(1/3,2/3)", None, e, zero, _evaluate(n, e, zero))
    if a == third:
        e, le = Fraction(-1), Fraction(1)
        return ThresholdPrediction(a, "alpha=1/3", None, e, le, _evaluate(n, e, le))
    if a > 0:
        e = Fraction(-2, 3)
        return ThresholdPrediction(a, "(0,1/3)", None, e, zero, _evaluate(n, e, zero))
    e, le = Fraction(-2, 3), Fraction(1, 3)
    return ThresholdPrediction(a, "alpha=0", None, e, le, _evaluate(n, e, le))


# Monte Carlo estimation


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class SweepPoint:
    p: float
    trials: int
    successes: int
    decider: str
    seed: int

    def __post_init__(self) -> None:
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)


@dataclass
class SweepResult:
    alpha: Fraction
    n: int
    points: list[SweepPoint] = field(default_factory=list)
    label: str = ""

    CSV_HEADER = ("alpha", "n", "p", "trials", "successes", "decider", "seed")

    def csv_rows(self) -> list[tuple]:
        return [
            (float(self.alpha), self.n, pt.p, pt.trials, pt.successes, pt.decider, pt.seed)
            for pt in self.points
        ]


@dataclass(frozen=True)
class ExactOracleDecider:
    """Sample the union and run the exhaustive square-cycle search."""

    budget: int | None = None
    max_n: int = 14
    kind: str = "exact_oracle"

    def __call__(self, model: PerturbedModel, seed: int) -> bool:
        if model.n > self.max_n:
            raise ValueError(f"exact decider limited to n <= {self.max_n}")
        res = find_square_ham_cycle(model.sample(seed), self.budget)
        if res.status.value == "budget_exhausted":
            raise RuntimeError("exact decider ran out of budget; refusing to guess")
        return res.found


@dataclass(frozen=True)
class CertificateRefuterDecider:
    """Success unless an absence certificate fires on the sample (an upper bound on containment)."""

    a: int
    k: int
    kind: str = "certificate_refuter"

    def __call__(self, model: PerturbedModel, seed: int) -> bool:
        from .certificates import AbsenceCertificate, any_certificate

        g = model.sample(seed)
        b = full_set(g.n) & ~self.a
        return not isinstance(any_certificate(g, self.a, b, self.k), AbsenceCertificate)


@dataclass(frozen=True)
class ExtremalPipelineDecider:
    """Success iff the extremal pipeline returns a verified square cycle (algorithmic threshold)."""

    k: int
    witness: object = None
    config: object = None
    kind: str = "extremal_pipeline"

    def __call__(self, model: PerturbedModel, seed: int) -> bool:
        from .extremal import run_extremal_pipeline

        res = run_extremal_pipeline(model.dense_part, self.k, model.p, seed, witness=self.witness, config=self.config)
        return res.success


Decider = Callable[[PerturbedModel, int], bool]


def _run_trial(args) -> bool:
    model, decider, trial_seed = args
    return bool(decider(model, trial_seed))


def estimate_success_prob(
    model: PerturbedModel, decider: Decider, trials: int, seed: int, jobs: int = 1
) -> SweepPoint:
    """Fraction of derived-seed trials on which ``decider`` reports success."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    seeds = [derive_seed(seed, "trial", i) for i in range(trials)]
    work = [(model, decider, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_trial, work, chunksize=max(1, trials // (4 * jobs))))
    else:
        outcomes = [_run_trial(w) for w in work]
    kind = getattr(decider, "kind", getattr(decider, "__name__", "custom"))
    return SweepPoint(model.p, trials, sum(outcomes), kind, seed)


@dataclass
class BisectResult:
    p_hat: float
    probes: list[SweepPoint]
    converged: bool


def bisect_critical_p(
    model: PerturbedModel,
    decider: Decider,
    p_lo: float,
    p_hi: float,
    trials: int,
    seed: int,
    target: float = 0.5,
    tol: float = 0.05,
    rel_tol: float = 0.02,
    max_iter: int = 40,
    jobs: int = 1,
) -> BisectResult:
    """Bisection on log p for the success rate ``target``; probe i uses seed derive(seed, probe, i)."""
    if not 0 < p_lo < p_hi <= 1:
        raise ValueError("need 0 < p_lo < p_hi <= 1")
    probes: list[SweepPoint] = []

    def probe(p: float) -> float:
        pt = estimate_success_prob(model.with_p(p), decider, trials, derive_seed(seed, "probe", len(probes)), jobs)
        probes.append(pt)
        return pt.rate

    if probe(p_lo) >= target:
        return BisectResult(p_lo, probes, True)
    if probe(p_hi) < target:
        raise ValueError(f"success rate at p_hi={p_hi} stays below target {target}")
    lo, hi = p_lo, p_hi
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        rate = probe(mid)
        if abs(rate - target) <= tol:
            return BisectResult(mid, probes, True)
        if rate < target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + rel_tol:
            return BisectResult(math.sqrt(lo * hi), probes, True)
    return BisectResult(math.sqrt(lo * hi), probes, False)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    points: tuple[tuple[float, float], ...]

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "points": [list(p) for p in self.points],
        }


def fit_exponent(points: Sequence[tuple[float, float]]) -> FitResult:
    """Least-squares slope of log p_hat against log n."""
    if len(points) < 3:
        raise ValueError("need at least three points")
    ns = [float(n) for n, _ in points]
    if len(set(ns)) != len(ns):
        raise ValueError("n values must be distinct")
    if any(n <= 0 or p <= 0 for n, p in points):
        raise ValueError("n and p must be positive")
    xs = [math.log(n) for n in ns]
    ys = [math.log(p) for _, p in points]
    k = len(xs)
    mx, my = sum(xs) / k, sum(ys) / k
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise ValueError("degenerate design")
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx
    intercept = my - slope * mx
    ssr = sum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    stderr = math.sqrt(ssr / (k - 2) / sxx)
    return FitResult(slope, intercept, stderr, tuple((float(n), float(p)) for n, p in points))


# Janson / Chernoff calculators


def e_tilde(m: int, k: int) -> int:
    """Largest edge count of an m-vertex intersection of two linked-square structures."""
    if k < 2 or m < 1:
        raise ValueError("need k >= 2 and m >= 1")
    q, r = divmod(m, k)
    if r == 0:
        return q * (2 * k - 3) + q - 1
    if r == 1:
        return q * (2 * k - 3) + q
    return q * (2 * k - 3) + q + 2 * r - 3


def linked_squares_graph(k: int, s: int) -> Graph:
    """s consecutive copies of P_k^2 joined by an edge from each copy's last to the next's first vertex."""
    edges = []
    for i in range(s):
        off = i * k
        edges.extend((off + a, off + b) for a, b in square_path_pairs(k))
        if i + 1 < s:
            edges.append((off + k - 1, off + k))
    return Graph.from_edges(k * s, edges)


@dataclass(frozen=True)
class JansonStructure:
    """kind: 'pk2' (P_k^2 copies), 'pk2_plus' (P_{k+1}^2 copies) or 'linked_squares' (s linked P_k^2)."""

    kind: str
    k: int
    s: int = 1

    def pattern(self) -> Graph:
        if self.kind == "pk2":
            return square_of_path(self.k)
        if self.kind == "pk2_plus":
            return square_of_path(self.k + 1)
        if self.kind == "linked_squares":
            return linked_squares_graph(self.k, self.s)
        raise ValueError(f"unsupported structure {self.kind!r}")


@dataclass(frozen=True)
class JansonBounds:
    mean: Fraction
    delta: Fraction
    lower_tail: float
    delta_exact: bool


def _falling(n: int, r: int) -> int:
    return math.perm(n, r) if 0 <= r <= n else 0


def _exact_delta(pattern: Graph, n: int, p: Fraction) -> Fraction:
    """Sum over ordered pairs of distinct unlabeled copies sharing an edge of p^(2e - e_common)."""
    v = pattern.n
    e = pattern.m
    edges = {(a, b) for a, b in pattern.edges()}
    aut = _aut_order(pattern)
    total = Fraction(0)
    # a partial injection phi maps some vertices of copy 2 onto vertices of copy 1
    for r in range(2, v + 1):
        for dom in itertools.combinations(range(v), r):
            for img in itertools.permutations(range(v), r):
                phi = dict(zip(dom, img))
                common = 0
                for a, b in edges:
                    if a in phi and b in phi:
                        x, y = phi[a], phi[b]
                        if (min(x, y), max(x, y)) in edges:
                            common += 1
                if common == 0:
                    continue
                if r == v and common == e:
                    continue  # same subgraph
                total += _falling(n - v, v - r) * p ** (2 * e - common)
    # labeled pairs: (n)_v choices for copy 1; divide by |Aut|^2 for unlabeled copies
    return total * _falling(n, v) / (aut * aut)


def _aut_order(pattern: Graph) -> int:
    count = 0
    edges = list(pattern.edges())
    for perm in itertools.permutations(range(pattern.n)):
        if all(pattern.has_edge(perm[a], perm[b]) for a, b in edges):
            count += 1
    return count


def janson_bounds(structure: JansonStructure, n: int, p, gamma=Fraction(1, 2)) -> JansonBounds:
    """Mean, overlap sum and Janson lower-tail bound for copies of ``structure`` in G(n, p).

    'pk2' and 'pk2_plus' count unlabeled copies with an exact overlap sum.
    'linked_squares' counts labeled tuples (as the tuple families do) and uses the
    overlap upper bound sum_m m! C(sk, m)^2 n^(2sk-m) p^(2e - e_tilde(m)).
    """
    p = Fraction(p) if not isinstance(p, Fraction) else p
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    pattern = structure.pattern()
    e = pattern.m
    v = pattern.n
    if structure.kind in ("pk2", "pk2_plus"):
        kk = structure.k if structure.kind == "pk2" else structure.k + 1
        aut = square_path_aut_order(kk)
        mean = Fraction(_falling(n, v), aut) * p**e
        delta = _exact_delta(pattern, n, p) if p > 0 else Fraction(0)
        exact = True
    else:
        mean = Fraction(_falling(n, v)) * p**e
        sk = v
        delta = Fraction(0)
        if p > 0:
            for m in range(2, sk):
                delta += (
                    math.factorial(m)
                    * math.comb(sk, m) ** 2
                    * Fraction(n) ** (2 * sk - m)
                    * p ** (2 * e - e_tilde(m, structure.k))
                )
        exact = False
    g = float(gamma)
    if mean == 0:
        bound = 1.0
    else:
        expo = g * g * float(mean) ** 2 / (2 * (float(mean) + float(delta)))
        bound = min(1.0, math.exp(-expo))
    return JansonBounds(mean, delta, bound, exact)


def relative_entropy(x: float, y: float) -> float:
    """D(x||y) = x log(x/y) + (1-x) log((1-x)/(1-y)) with 0 log 0 = 0."""
    if not (0 <= x <= 1 and 0 < y < 1):
        raise ValueError("need x in [0,1] and y in (0,1)")
    out = 0.0
    if x > 0:
        out += x * math.log(x / y)
    if x < 1:
        out += (1 - x) * math.log((1 - x) / (1 - y))
    return out


@dataclass(frozen=True)
class ChernoffBounds:
    multiplicative: float
    entropy: float


def chernoff_bounds(n: int, p: float, delta: float) -> ChernoffBounds:
    """Bounds for X ~ Bin(n, p).

    multiplicative: P(|X - EX| >= delta EX) <= 2 exp(-delta^2 n p / 3), delta relative.
    entropy: P(X <= EX - delta n) <= exp(-D(p - delta || p) n), delta absolute.
    Both are capped at 1.
    """
    if n < 0 or not 0 <= p <= 1 or delta < 0:
        raise ValueError("need n >= 0, p in [0,1], delta >= 0")
    mult = min(1.0, 2 * math.exp(-delta * delta * n * p / 3))
    if delta == 0:
        ent = 1.0
    elif p - delta < 0:
        ent = 0.0
    elif p in (0.0, 1.0):
        ent = 0.0 if p - delta < p else 1.0
    else:
        ent = min(1.0, math.exp(-relative_entropy(p - delta, p) * n))
    return ChernoffBounds(mult, ent)
