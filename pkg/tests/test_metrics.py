import math
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rsedit.metrics import (
    EmbeddingStats,
    MetricError,
    PathologyDistribution,
    RandomProjectionExtractor,
    auroc,
    cmig,
    embed_and_fit,
    frechet_distance,
    identity_extractor,
    kl_divergence,
    mean_probabilities,
    pearson,
)


def auroc_pairs(labels, scores):
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    wins = Fraction(0)
    for p in pos:
        for n in neg:
            wins += 1 if p > n else Fraction(1, 2) if p == n else 0
    return wins / (len(pos) * len(neg))


def kl_precise(p, q, eps=1e-9):
    with localcontext() as ctx:
        ctx.prec = 60
        total = Decimal(0)
        for pi, qi in zip(p, q):
            pi = Decimal(min(max(pi, eps), 1 - eps))
            qi = Decimal(min(max(qi, eps), 1 - eps))
            total += pi * (pi / qi).ln()
        return float(total)


def cmig_precise(a, f):
    with localcontext() as ctx:
        ctx.prec = 60
        la = sum(Decimal(v).ln() for v in a) / len(a)
        lf = sum(Decimal(v).ln() for v in f) / len(f)
        return float(((la + lf) / 2).exp())


def pearson_direct(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    num = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(math.fsum((a - mx) ** 2 for a in x) * math.fsum((b - my) ** 2 for b in y))
    return num / den


def test_auroc_examples():
    assert auroc([1, 1, 0, 0], [0.9, 0.8, 0.1, 0.2]) == 1.0
    assert auroc([1, 0, 1, 0], [0.4] * 4) == 0.5
    assert auroc([1, 1, 0, 0], [0.8, 0.3, 0.5, 0.1]) == 0.75
    with pytest.raises(MetricError):
        auroc([1, 1], [0.1, 0.2])


def test_auroc_matches_pair_counting():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 8, size=n) / 7.0  # coarse grid forces ties
        assert auroc(labels, scores) == float(auroc_pairs(labels.tolist(), scores.tolist()))


scored = st.integers(2, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
        st.lists(st.floats(-100, 100), min_size=n, max_size=n, unique=True),
    )
)


@given(scored)
def test_auroc_complement(ls):
    labels, scores = ls
    assume(0 < sum(labels) < len(labels))
    assert auroc(labels, scores) + auroc(labels, [-s for s in scores]) == 1.0


int_scored = st.integers(2, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
        st.lists(st.integers(-1000, 1000), min_size=n, max_size=n),
    )
)


@given(int_scored)
def test_auroc_monotone_invariance(ls):
    labels, scores = ls
    assume(0 < sum(labels) < len(labels))
    # cubic plus linear term is strictly increasing and exact on these integers
    assert auroc(labels, scores) == auroc(labels, [float(s**3 + 5 * s) for s in scores])


def test_pearson_examples():
    x = np.linspace(-3, 7, 25)
    assert abs(pearson(x, 2 * x + 1) - 1.0) <= 1e-12
    assert pearson(x, -x) == -1.0
    assert abs(pearson([1, 2, 3], [1, 3, 2]) - 0.5) <= 1e-12
    with pytest.raises(MetricError):
        pearson([1, 1, 1], [1, 2, 3])


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=50))
def test_pearson_matches_direct(pts):
    x, y = [p[0] for p in pts], [p[1] for p in pts]
    assume(np.std(x) > 1e-3 and np.std(y) > 1e-3)
    assert abs(pearson(x, y) - pearson_direct(x, y)) <= 1e-12


def test_cmig_examples():
    assert cmig([1.0], [1.0, 1.0]) == 1.0
    assert cmig([0.9, 0.0], [0.5]) == 0.0
    val = cmig([0.81], [0.64, 1.0])
    assert abs(val - math.sqrt(0.81 * 0.8)) <= 1e-12
    assert abs(val - cmig_precise([0.81], [0.64, 1.0])) <= 1e-12
    assert round(val, 5) == 0.80498
    with pytest.raises(MetricError):
        cmig([1.2], [0.5])
    with pytest.raises(MetricError):
        cmig([], [0.5])


unit = st.floats(1e-6, 1.0)


@given(st.lists(unit, min_size=1, max_size=20), st.lists(unit, min_size=1, max_size=20))
def test_cmig_matches_log_space(a, f):
    assert abs(cmig(a, f) - cmig_precise(a, f)) <= 1e-12


@given(st.lists(unit, min_size=1, max_size=8), st.lists(unit, min_size=1, max_size=8), st.randoms())
def test_cmig_symmetric_and_monotone(a, f, rnd):
    base = cmig(a, f)
    a2, f2 = a[:], f[:]
    rnd.shuffle(a2)
    rnd.shuffle(f2)
    assert abs(cmig(a2, f2) - base) <= 1e-15
    bumped = a[:]
    bumped[0] = min(1.0, bumped[0] * 1.5)
    assert cmig(bumped, f) >= base


def dist(p, names=None):
    names = names or tuple(f"c{i}" for i in range(len(p)))
    return PathologyDistribution(tuple(names), tuple(p))


def test_kl_examples():
    p = dist([0.3, 0.2, 0.5])
    assert kl_divergence(p, p) == 0.0
    v = kl_divergence(dist([0.5, 0.5]), dist([0.25, 0.75]))
    assert abs(v - (0.5 * math.log(2) + 0.5 * math.log(2 / 3))) <= 1e-12
    assert abs(v - kl_precise([0.5, 0.5], [0.25, 0.75])) <= 1e-12
    assert round(v, 5) == 0.14384
    big = kl_divergence(dist([0.5, 0.5]), dist([1.0, 0.0]))
    assert math.isfinite(big) and big > 5
    with pytest.raises(MetricError):
        kl_divergence(dist([0.5, 0.5]), dist([0.5, 0.5], ("x", "y")))


probs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=14)


@given(probs, st.data())
def test_kl_matches_precise_and_nonnegative(p, data):
    q = data.draw(st.lists(st.floats(0.0, 1.0), min_size=len(p), max_size=len(p)))
    got = kl_divergence(dist(p), dist(q))
    assert abs(got - kl_precise(p, q)) <= 1e-12 * max(1.0, abs(got))
    assert kl_divergence(dist(p), dist(p)) == 0.0


@given(st.integers(2, 6), st.integers(0, 10**6))
def test_kl_nonnegative_on_normalized(n, seed):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
    assert kl_divergence(dist(p), dist(q)) >= -1e-15


def stats(mean, cov):
    return EmbeddingStats(np.asarray(mean, float), np.asarray(cov, float), 10)


def test_frechet_examples():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((6, 6))
    cov = a @ a.T
    s = stats(rng.standard_normal(6), cov)
    assert abs(frechet_distance(s, s)) <= 1e-9
    d = rng.standard_normal(6)
    assert abs(frechet_distance(s, stats(s.mean + d, cov)) - float(d @ d)) <= 1e-9
    assert abs(frechet_distance(stats([0.0], [[1.0]]), stats([1.0], [[4.0]])) - 2.0) <= 1e-9
    with pytest.raises(MetricError):
        frechet_distance(stats([0.0], [[1.0]]), stats([0.0, 0.0], np.eye(2)))


@given(st.integers(1, 8), st.integers(0, 10**6))
def test_frechet_diagonal_closed_form(k, seed):
    rng = np.random.default_rng(seed)
    m1, m2 = rng.normal(size=k), rng.normal(size=k)
    v1, v2 = rng.uniform(0, 3, size=k), rng.uniform(0, 3, size=k)
    got = frechet_distance(stats(m1, np.diag(v1)), stats(m2, np.diag(v2)))
    ref = sum((a - b) ** 2 + (math.sqrt(x) - math.sqrt(y)) ** 2 for a, b, x, y in zip(m1, m2, v1, v2))
    assert abs(got - ref) <= 1e-9


@given(st.integers(1, 6), st.integers(0, 10**6))
def test_frechet_symmetric(k, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(k, k)), rng.normal(size=(k, k))
    s1, s2 = stats(rng.normal(size=k), a @ a.T), stats(rng.normal(size=k), b @ b.T)
    assert abs(frechet_distance(s1, s2) - frechet_distance(s2, s1)) <= 1e-9


def test_embed_and_fit_examples():
    img = np.random.default_rng(2).uniform(size=(32, 32))
    dup = embed_and_fit([img] * 5)
    assert np.all(dup.cov == 0.0)
    assert np.allclose(dup.mean, RandomProjectionExtractor()(img), rtol=0, atol=1e-12)

    s = embed_and_fit([np.zeros((1, 1)), np.ones((1, 1))], identity_extractor)
    assert s.mean.tolist() == [0.5] and s.cov.tolist() == [[0.5]]

    a, b = np.random.default_rng(3).uniform(size=(2, 4, 4))
    two = embed_and_fit([a, b], identity_extractor)
    d = (a - b).ravel()
    assert np.allclose(two.cov, np.outer(d, d) / 2, rtol=0, atol=1e-12)
    assert np.linalg.matrix_rank(two.cov) <= 1
    with pytest.raises(MetricError):
        embed_and_fit([a])


def test_mean_probabilities():
    out = mean_probabilities(lambda im: {"b": float(im.mean()), "a": 0.5}, [np.zeros((2, 2)), np.ones((2, 2))])
    assert out.classes == ("a", "b") and out.probs == (0.5, 0.5)
