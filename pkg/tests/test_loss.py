from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aftboost.errors import ConfigError, InvalidLabelError
from aftboost.loss import (
    AftParams,
    Censoring,
    LabelRange,
    aft_grad_hess,
    aft_loss,
    grad_hess_arrays,
    limit_derivatives,
    link,
    mean_loss_arrays,
)

mpmath.mp.dps = 40
E = math.e
DISTS = ["normal", "logistic", "extreme"]
LABELS = {
    "uncensored": (2.0, 2.0),
    "right": (2.0, math.inf),
    "left": (0.0, 2.0),
    "interval": (1.0, 4.0),
}


def mp_cdf(dist, z):
    if dist == "normal":
        return mpmath.ncdf(z)
    if dist == "logistic":
        return 1 / (1 + mpmath.exp(-z))
    return 1 - mpmath.exp(-mpmath.exp(z))


def mp_pdf(dist, z):
    if dist == "normal":
        return mpmath.npdf(z)
    if dist == "logistic":
        return mpmath.exp(z) / (1 + mpmath.exp(z)) ** 2
    return mpmath.exp(z - mpmath.exp(z))


def mp_loss(dist, lower, upper, u, sigma):
    """Reference negative log-likelihood in 40-digit arithmetic."""
    u = mpmath.mpf(u)
    if lower == upper:
        s = (mpmath.log(lower) - u) / sigma
        return -mpmath.log(mp_pdf(dist, s) / (sigma * lower))
    hi = 1 if math.isinf(upper) else mp_cdf(dist, (mpmath.log(upper) - u) / sigma)
    lo = 0 if lower == 0 else mp_cdf(dist, (mpmath.log(lower) - u) / sigma)
    return -mpmath.log(hi - lo)


def test_link_examples():
    assert link(1.0, 0.0, 1.0) == 0.0
    assert link(E**2, 0.0, 2.0) == pytest.approx(1.0, abs=1e-15)
    assert link(math.inf, 5.0, 1.0) == math.inf
    assert link(0.0, 5.0, 1.0) == -math.inf


def test_loss_examples():
    p = AftParams("normal", 1.0)
    assert aft_loss((1.0, 1.0), 0.0, p) == pytest.approx(0.918939, abs=1e-6)
    assert aft_loss((1.0, math.inf), 0.0, p) == pytest.approx(0.693147, abs=1e-6)
    # -ln(F(1) - F(-1)) = -ln 0.682689...
    interval = aft_loss((math.exp(-1), E), 0.0, p)
    assert interval == pytest.approx(float(mp_loss("normal", math.exp(-1), E, 0, 1)), rel=1e-13)
    assert interval == pytest.approx(0.381715, abs=1e-6)


def test_grad_hess_examples():
    p = AftParams("normal", 1.0)
    d = aft_grad_hess((1.0, 1.0), 0.0, p)
    assert d.gradient == 0.0 and d.hessian == 1.0
    d = aft_grad_hess((1.0, math.inf), 1e9, p)
    assert (d.gradient, d.hessian) == (0.0, 1e-16)
    d = aft_grad_hess((math.exp(-1), E), 0.0, p)
    assert d.gradient == pytest.approx(0.0, abs=1e-15)


def test_limit_examples():
    assert limit_derivatives("normal", "uncensored", math.inf, 2.0) == (15.0, 0.25)
    assert limit_derivatives("extreme", "right", -math.inf, 1.0) == (-15.0, 15.0)
    assert limit_derivatives("logistic", "left", -math.inf, 0.5) == (0.0, 1e-16)
    assert limit_derivatives("logistic", "interval", -math.inf, 2.0) == (-0.5, 1e-16)
    with pytest.raises(ValueError):
        limit_derivatives("normal", "left", 3.0, 1.0)


@pytest.mark.parametrize(
    "lower,upper,expected",
    [
        (3.0, 3.0, Censoring.UNCENSORED),
        (3.0, math.inf, Censoring.RIGHT),
        (0.0, 3.0, Censoring.LEFT),
        (1.0, 3.0, Censoring.INTERVAL),
        (0.0, math.inf, Censoring.RIGHT),
    ],
)
def test_censoring_classes(lower, upper, expected):
    assert LabelRange(lower, upper).censoring is expected


@pytest.mark.parametrize("lower,upper", [(-1.0, 2.0), (3.0, 2.0), (math.inf, math.inf), (1.0, math.nan), (math.nan, 1.0)])
def test_invalid_label_ranges(lower, upper):
    with pytest.raises(InvalidLabelError):
        LabelRange(lower, upper)


def test_uncensored_zero_rejected():
    with pytest.raises(InvalidLabelError):
        aft_grad_hess((0.0, 0.0), 0.0, AftParams())


def test_params_validation_and_round_trip():
    for bad in (dict(sigma=0.0), dict(sigma=-1.0), dict(epsilon=0.0), dict(grad_clip=math.inf), dict(dist="weibull")):
        with pytest.raises(ConfigError):
            AftParams(**bad)
    p = AftParams("extreme", 1.2)
    assert AftParams.from_dict(p.to_dict()) == p
    assert p.to_dict()["aft_loss_distribution"] == "extreme"


@pytest.mark.parametrize("dist", DISTS)
@pytest.mark.parametrize("kind", list(LABELS))
@pytest.mark.parametrize("u", [-2.0, -0.3, 0.4, 0.9, 1.7, 3.0])
def test_against_high_precision(dist, kind, u):
    lower, upper = LABELS[kind]
    sigma = 0.8
    p = AftParams(dist, sigma)
    d = aft_grad_hess((lower, upper), u, p)
    f = lambda t: mp_loss(dist, lower, upper, t, sigma)  # noqa: E731
    ref = f(u)
    g = mpmath.diff(f, u, 1)
    h = mpmath.diff(f, u, 2)
    if not d.regularized:
        assert d.loss == pytest.approx(float(ref), rel=1e-11)
        assert d.gradient == pytest.approx(float(g), rel=1e-8, abs=1e-12)
        assert d.hessian == pytest.approx(max(float(h), 1e-16), rel=1e-7, abs=1e-12)


@pytest.mark.parametrize("dist", DISTS)
@pytest.mark.parametrize("kind", list(LABELS))
@pytest.mark.parametrize("u", [-1e12, -1e6, 0.0, 1e6, 1e12])
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_totality(dist, kind, u, sigma):
    d = aft_grad_hess(LABELS[kind], u, AftParams(dist, sigma))
    assert all(math.isfinite(v) for v in (d.loss, d.gradient, d.hessian))
    assert abs(d.gradient) <= 15.0
    assert d.hessian >= 1e-16
    assert d.loss >= 0.0 or kind == "uncensored"


@given(
    dist=st.sampled_from(DISTS),
    lower=st.floats(1e-6, 1e6),
    width=st.one_of(st.just(0.0), st.just(math.inf), st.floats(1e-9, 1e6)),
    left=st.booleans(),
    u=st.floats(-1e15, 1e15, allow_nan=False),
    sigma=st.floats(0.05, 20.0),
)
def test_totality_random(dist, lower, width, left, u, sigma):
    upper = lower + width
    if left and math.isfinite(upper):
        lower = 0.0
    d = aft_grad_hess((lower, upper), u, AftParams(dist, sigma))
    assert all(math.isfinite(v) for v in (d.loss, d.gradient, d.hessian))
    assert abs(d.gradient) <= 15.0
    assert d.hessian >= 1e-16
    assert d.loss == aft_loss((lower, upper), u, AftParams(dist, sigma))


@pytest.mark.parametrize("dist", DISTS)
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_right_censored_limit_consistency(dist, sigma):
    y = 3.0
    u = math.log(y) + 40 * sigma
    d = aft_grad_hess((y, math.inf), u, AftParams(dist, sigma))
    assert (d.gradient, d.hessian) == limit_derivatives(dist, "right", math.inf, sigma)


@pytest.mark.parametrize("dist", ["normal", "logistic"])
@pytest.mark.parametrize("lower,upper", [(1.0, 4.0), (0.5, 20.0), (E, E**3)])
def test_interval_loss_minimized_at_midpoint(dist, lower, upper):
    p = AftParams(dist, 1.0)
    lo, hi = math.log(lower), math.log(upper)
    grid = np.linspace(lo - 3, hi + 3, 601)
    step = grid[1] - grid[0]
    losses = [aft_loss((lower, upper), u, p) for u in grid]
    best = grid[int(np.argmin(losses))]
    assert lo <= best <= hi
    assert abs(best - 0.5 * (lo + hi)) <= step


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_normal_uncensored_hessian_is_exact(sigma):
    p = AftParams("normal", sigma)
    for u in np.linspace(-5, 5, 41):
        d = aft_grad_hess((2.0, 2.0), u, p)
        assert d.hessian == 1.0 / sigma**2


def test_uncensored_density_clamp_is_flagged():
    d = aft_grad_hess((1.0, 1.0), 8.0, AftParams("normal", 1.0))
    assert d.loss == pytest.approx(-math.log(1e-12))
    assert d.regularized


@pytest.mark.parametrize("dist", DISTS)
def test_array_kernels_match_scalar(dist):
    rng = np.random.default_rng(4)
    n = 200
    lower = rng.uniform(0.1, 5.0, n)
    upper = lower + rng.choice([0.0, math.inf, 1.5], n)
    lower[::7] = 0.0
    upper[::7] = 2.0
    margins = rng.normal(0, 3, n)
    p = AftParams(dist, 1.3)
    grad, hess = grad_hess_arrays(lower, upper, margins, p)
    losses = []
    for i in range(n):
        d = aft_grad_hess((lower[i], upper[i]), margins[i], p)
        assert (d.gradient, d.hessian) == (grad[i], hess[i])
        losses.append(d.loss)
    assert mean_loss_arrays(lower, upper, margins, p) == pytest.approx(np.mean(losses), rel=1e-14)
