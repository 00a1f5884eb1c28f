from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aftboost.data import Dataset
from aftboost.errors import MetricError
from aftboost.loss import AftParams, LabelRange, aft_loss
from aftboost.metrics import (
    SurvivalPair,
    aft_nloglik,
    default_tau,
    evaluate,
    harrell_c,
    interval_accuracy,
    kaplan_meier,
    make_scorer,
    uno_c,
)

AFT = AftParams("normal", 1.0)


def brute_km(times, events, t):
    """Product over distinct event times <= t of (1 - deaths / at_risk)."""
    s = 1.0
    for u in sorted(set(x for x, e in zip(times, events) if e)):
        if u > t:
            break
        d = sum(1 for x, e in zip(times, events) if e and x == u)
        r = sum(1 for x in times if x >= u)
        s *= 1 - d / r
    return s


def brute_uno(train, test, tau):
    ttimes = [p.time for p in train]
    cens = [not p.event for p in train]
    num = den = 0.0
    for i in test:
        if not i.event or not i.time < tau:
            continue
        # left limit: censoring survival just before t_i
        g = brute_km(ttimes, cens, i.time - 1e-12 * i.time)
        w = 1.0 / g**2
        for j in test:
            if i.time < j.time:
                den += w
                num += w * (1.0 if i.score < j.score else 0.5 if i.score == j.score else 0.0)
    return num / den


def brute_harrell(pairs):
    num = den = 0
    for i in pairs:
        for j in pairs:
            if i.event and i.time < j.time:
                den += 1
                num += 1.0 if i.score < j.score else 0.5 if i.score == j.score else 0.0
    return num / den


def test_interval_accuracy_examples():
    labels = [LabelRange(1, math.e), LabelRange(1, math.e), LabelRange(2, 2), LabelRange(1, math.inf)]
    assert interval_accuracy([0.5, 1.0, math.log(2), 50.0], labels) == 1.0
    assert interval_accuracy([-1, 2, 0, -5], labels) == 0.0
    assert interval_accuracy([0.5, 2.0, 0.0, 3.0], labels) == 0.5


@given(
    st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3), st.floats(-6, 6)), min_size=1, max_size=30),
    st.floats(0.1, 5),
    st.floats(-3, 3),
)
def test_interval_accuracy_affine_invariance(rows, a, b):
    lo = np.array([r[0] for r in rows])
    hi = lo + np.array([r[1] for r in rows])
    m = np.array([r[2] for r in rows])
    base = interval_accuracy(m, (np.exp(lo), np.exp(hi)))
    lo2, hi2, m2 = a * lo + b, a * hi + b, a * m + b
    # affine maps in log space may round the endpoints; compare on rows away from the boundary
    safe = (np.abs(m - lo) > 1e-9) & (np.abs(m - hi) > 1e-9)
    if safe.all():
        assert interval_accuracy(m2, (np.exp(lo2), np.exp(hi2))) == base


def test_aft_nloglik_examples():
    assert aft_nloglik([0.0], [LabelRange(1, 1)], AFT) == pytest.approx(0.918939, abs=1e-6)
    assert aft_nloglik([0.0, 0.0], [LabelRange(1, 1)] * 2, AFT) == aft_nloglik([0.0], [LabelRange(1, 1)], AFT)
    a = aft_loss((1, 1), 0.3, AFT)
    b = aft_loss((2, math.inf), -0.1, AFT)
    assert aft_nloglik([0.3, -0.1], [LabelRange(1, 1), LabelRange(2, math.inf)], AFT) == pytest.approx((a + b) / 2)


def test_harrell_examples():
    up = [SurvivalPair(t, True, s) for t, s in zip([1, 2, 3, 4], [0.1, 0.2, 0.3, 0.4])]
    down = [SurvivalPair(t, True, s) for t, s in zip([1, 2, 3, 4], [0.4, 0.3, 0.2, 0.1])]
    assert harrell_c(up) == 1.0
    assert harrell_c(down) == 0.0
    rng = np.random.default_rng(0)
    pairs = [SurvivalPair(float(t), True, float(s)) for t, s in zip(rng.permutation(5) + 1, rng.normal(size=5))]
    assert harrell_c(pairs) == brute_harrell(pairs)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0.1, 100), st.booleans(), st.floats(-10, 10)), min_size=2, max_size=25))
def test_harrell_matches_oracle_and_negation(rows):
    pairs = [SurvivalPair(t, e, s) for t, e, s in rows]
    if not any(p.event and any(p.time < q.time for q in pairs) for p in pairs):
        with pytest.raises(MetricError):
            harrell_c(pairs)
        return
    c = harrell_c(pairs)
    assert c == pytest.approx(brute_harrell(pairs), abs=1e-12)
    if len({p.score for p in pairs}) == len(pairs):
        neg = [SurvivalPair(p.time, p.event, -p.score) for p in pairs]
        assert harrell_c(neg) == pytest.approx(1 - c, abs=1e-12)


def test_uno_without_censoring_equals_harrell():
    rng = np.random.default_rng(1)
    t = rng.permutation(40) + 1.0
    pairs = [SurvivalPair(float(x), True, float(s)) for x, s in zip(t, rng.normal(size=40))]
    assert uno_c(pairs, pairs, tau=math.inf) == harrell_c(pairs)
    assert uno_c(pairs, pairs, tau=1e9) == harrell_c(pairs)


def test_uno_perfect_ranking():
    rng = np.random.default_rng(2)
    t = rng.exponential(size=30) + 0.01
    e = rng.uniform(size=30) < 0.6
    pairs = [SurvivalPair(float(x), bool(ev), float(np.log(x))) for x, ev in zip(t, e)]
    assert uno_c(pairs, pairs) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_uno_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 30
    train = [SurvivalPair(float(x), bool(e)) for x, e in zip(rng.exponential(size=60) + 0.01, rng.uniform(size=60) < 0.6)]
    test = [SurvivalPair(float(x), bool(e), float(s))
            for x, e, s in zip(rng.exponential(size=n) + 0.01, rng.uniform(size=n) < 0.6, rng.normal(size=n))]
    tau = default_tau([p.time for p in test])
    assert tau == pytest.approx(np.percentile([p.time for p in test], 80))
    assert uno_c(train, test) == pytest.approx(brute_uno(train, test, tau), rel=1e-12)


def test_uno_fails_when_censoring_survival_hits_zero():
    train = [SurvivalPair(1.0, True), SurvivalPair(2.0, False)]
    test = [SurvivalPair(3.0, True, 0.0), SurvivalPair(4.0, True, 1.0)]
    with pytest.raises(MetricError):
        uno_c(train, test, tau=10.0)


def test_km_examples():
    km = kaplan_meier([1.0], [True])
    assert km(0.5) == 1.0 and km(1.0) == 0.0 and km(7.0) == 0.0
    km = kaplan_meier([1.0, 2.0], [True, True])
    assert km(0.9) == 1.0 and km(1.0) == 0.5 and km(1.9) == 0.5 and km(2.0) == 0.0
    assert km.left_limit(2.0) == 0.5
    km = kaplan_meier([1.0, 2.0, 3.0], [False, False, False])
    assert km(0.1) == 1.0 and km(10.0) == 1.0


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0, 7.0]), st.booleans()), min_size=1, max_size=30))
def test_km_properties(rows):
    times = [r[0] for r in rows]
    events = [r[1] for r in rows]
    km = kaplan_meier(times, events)
    grid = np.linspace(0.0, 8.0, 81)
    vals = km(grid)
    assert vals[0] == 1.0
    assert np.all(np.diff(vals) <= 0) and np.all(vals >= 0)
    for t in grid:
        assert km(t) == pytest.approx(brute_km(times, events, t), abs=1e-12)


def test_survival_metrics_reject_interval_labels():
    ds = Dataset(np.zeros((2, 1)), np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    with pytest.raises(MetricError):
        evaluate("harrell_c", [0.0, 1.0], ds, AFT)


def test_unknown_metric():
    ds = Dataset(np.zeros((1, 1)), np.ones(1), np.ones(1))
    with pytest.raises(MetricError):
        evaluate("auc", [0.0], ds, AFT)


def test_scorers_agree_with_evaluate():
    rng = np.random.default_rng(3)
    n = 80
    lower = rng.exponential(size=n) + 0.05
    cens = rng.uniform(size=n) < 0.4
    upper = np.where(cens, math.inf, lower)
    ds = Dataset(rng.normal(size=(n, 2)), lower, upper)
    train, valid = ds.subset(np.arange(50)), ds.subset(np.arange(50, n))
    m = rng.normal(size=valid.n_rows)
    for metric in ("interval_accuracy", "aft_nloglik", "harrell_c", "uno_c"):
        scorer = make_scorer(metric, train, valid, AFT)
        assert scorer(m) == evaluate(metric, m, valid, AFT, train=train)
