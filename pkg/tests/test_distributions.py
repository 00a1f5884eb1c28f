from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aftboost.distributions import Distribution, cdf, log_pdf, pdf, pdf_double_prime, pdf_prime

DISTS = list(Distribution)
GRID = np.arange(-8.0, 8.0 + 1e-9, 0.25)
mpmath.mp.dps = 50


def mp_pdf(dist, z):
    z = mpmath.mpf(z)
    if dist is Distribution.NORMAL:
        return mpmath.npdf(z)
    if dist is Distribution.LOGISTIC:
        return mpmath.exp(z) / (1 + mpmath.exp(z)) ** 2
    return mpmath.exp(z - mpmath.exp(z))


def mp_cdf(dist, z):
    z = mpmath.mpf(z)
    if dist is Distribution.NORMAL:
        return mpmath.ncdf(z)
    if dist is Distribution.LOGISTIC:
        return mpmath.exp(z) / (1 + mpmath.exp(z))
    return 1 - mpmath.exp(-mpmath.exp(z))


@pytest.mark.parametrize(
    "dist,fn,expected",
    [
        ("normal", pdf, 0.398942),
        ("logistic", pdf, 0.25),
        ("extreme", pdf, 0.367879),
        ("normal", cdf, 0.5),
        ("logistic", cdf, 0.5),
        ("extreme", cdf, 0.632121),
        ("normal", pdf_prime, 0.0),
        ("logistic", pdf_prime, 0.0),
        ("extreme", pdf_prime, 0.0),
        ("normal", pdf_double_prime, -0.398942),
        ("logistic", pdf_double_prime, -0.125),
        ("extreme", pdf_double_prime, -0.367879),
    ],
)
def test_values_at_zero(dist, fn, expected):
    assert fn(dist, 0.0) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("dist", DISTS)
def test_cdf_extended_inputs(dist):
    assert cdf(dist, -math.inf) == 0.0
    assert cdf(dist, math.inf) == 1.0


@pytest.mark.parametrize("dist", DISTS)
@pytest.mark.parametrize("z", [-37.5, -12.0, -3.3, -0.7, 0.0, 0.4, 2.2, 5.0, 9.0])
def test_against_high_precision(dist, z):
    ref_pdf = float(mp_pdf(dist, z))
    ref_cdf = float(mp_cdf(dist, z))
    assert pdf(dist, z) == pytest.approx(ref_pdf, rel=1e-12, abs=1e-300)
    assert cdf(dist, z) == pytest.approx(ref_cdf, rel=1e-12, abs=1e-300)
    if ref_pdf > 0:
        assert log_pdf(dist, z) == pytest.approx(float(mpmath.log(mp_pdf(dist, z))), rel=1e-12)
    d1 = float(mpmath.diff(lambda t: mp_pdf(dist, t), z, 1))
    d2 = float(mpmath.diff(lambda t: mp_pdf(dist, t), z, 2))
    assert pdf_prime(dist, z) == pytest.approx(d1, rel=1e-10, abs=1e-300)
    assert pdf_double_prime(dist, z) == pytest.approx(d2, rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("dist", DISTS)
def test_finite_difference_of_cdf(dist):
    h = 1e-5
    for z in GRID:
        fd = (cdf(dist, z + h) - cdf(dist, z - h)) / (2 * h)
        # near cdf = 1 the difference quotient itself loses ~1e-11 to rounding
        assert fd == pytest.approx(pdf(dist, z), rel=1e-6, abs=1e-10)


@pytest.mark.parametrize("dist", DISTS)
def test_finite_difference_of_derivatives(dist):
    h = 1e-5
    for z in GRID:
        fd1 = (pdf(dist, z + h) - pdf(dist, z - h)) / (2 * h)
        fd2 = (pdf_prime(dist, z + h) - pdf_prime(dist, z - h)) / (2 * h)
        assert fd1 == pytest.approx(pdf_prime(dist, z), rel=1e-5, abs=1e-9)
        assert fd2 == pytest.approx(pdf_double_prime(dist, z), rel=1e-5, abs=1e-9)


@pytest.mark.parametrize("dist", ["normal", "logistic"])
@given(z=st.floats(-50, 50, allow_nan=False))
def test_symmetry(dist, z):
    assert pdf(dist, z) == pdf(dist, -z)
    assert abs(cdf(dist, z) + cdf(dist, -z) - 1.0) <= 1e-12


def test_extreme_is_asymmetric():
    assert pdf("extreme", 1.0) != pdf("extreme", -1.0)


@pytest.mark.parametrize("dist", DISTS)
@given(zs=st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=50))
def test_cdf_monotone_and_bounded(dist, zs):
    values = [cdf(dist, z) for z in sorted(zs)]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert all(a <= b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("dist", DISTS)
@given(z=st.floats(-1e6, 1e6, allow_nan=False))
def test_no_overflow(dist, z):
    for fn in (pdf, cdf, pdf_prime, pdf_double_prime, log_pdf):
        assert math.isfinite(fn(dist, z))
    assert pdf(dist, z) >= 0.0


def test_parse_names():
    assert Distribution.parse("Normal") is Distribution.NORMAL
    assert Distribution.parse(" extreme ") is Distribution.EXTREME
    assert Distribution.LOGISTIC.value == "logistic"
    with pytest.raises(ValueError, match="expected one of"):
        Distribution.parse("weibull")
