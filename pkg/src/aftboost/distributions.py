"""Standardized error distributions for the AFT model.

Each distribution is described by its density ``pdf``, distribution function
``cdf`` and the first two derivatives of the density.  The scalar kernels are
compiled with numba so that the loss kernels in :mod:`aftboost.loss` can call
them from inside tight loops; the public wrappers accept a
:class:`Distribution` (or its lowercase name) and a float.

Overflow handling: arguments of ``exp`` are clamped to ``EXP_CLAMP`` and the
logistic forms are rewritten in terms of ``exp(-|z|)``.
"""
from __future__ import annotations

import enum
import math

from numba import njit

NORMAL = 0
LOGISTIC = 1
EXTREME = 2

EXP_CLAMP = 700.0
_INV_SQRT_2PI = 0.3989422804014327
_INV_SQRT2 = 0.7071067811865476
_LOG_INV_SQRT_2PI = -0.9189385332046728


class Distribution(str, enum.Enum):
    NORMAL = "normal"
    LOGISTIC = "logistic"
    EXTREME = "extreme"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def parse(cls, value) -> "Distribution":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(d.value for d in cls)
            raise ValueError(f"unknown distribution {value!r}; expected one of {names}") from None


_CODES = {Distribution.NORMAL: NORMAL, Distribution.LOGISTIC: LOGISTIC, Distribution.EXTREME: EXTREME}


@njit(cache=True, nogil=True)
def _exp(x):
    return math.exp(min(x, EXP_CLAMP))


@njit(cache=True, nogil=True)
def _pdf(code, z):
    if code == NORMAL:
        return _INV_SQRT_2PI * math.exp(-0.5 * z * z)
    if code == LOGISTIC:
        w = math.exp(-abs(z))
        return w / ((1.0 + w) * (1.0 + w))
    t = _exp(z)
    return math.exp(z - t)


@njit(cache=True, nogil=True)
def _log_pdf(code, z):
    if code == NORMAL:
        return -0.5 * z * z + _LOG_INV_SQRT_2PI
    if code == LOGISTIC:
        a = abs(z)
        return -a - 2.0 * math.log1p(math.exp(-a))
    return z - _exp(z)


@njit(cache=True, nogil=True)
def _cdf(code, z):
    if code == NORMAL:
        return 0.5 * math.erfc(-z * _INV_SQRT2)
    if code == LOGISTIC:
        if z >= 0.0:
            return 1.0 / (1.0 + math.exp(-z))
        w = math.exp(z)
        return w / (1.0 + w)
    return -math.expm1(-_exp(z))


@njit(cache=True, nogil=True)
def _sf(code, z):
    # 1 - cdf(z), evaluated without cancellation in the upper tail
    if code == NORMAL:
        return 0.5 * math.erfc(z * _INV_SQRT2)
    if code == LOGISTIC:
        return _cdf(LOGISTIC, -z)
    return math.exp(-_exp(z))


@njit(cache=True, nogil=True)
def _pdf_prime(code, z):
    f = _pdf(code, z)
    if f == 0.0:
        return 0.0
    if code == NORMAL:
        return -z * f
    if code == LOGISTIC:
        w = math.exp(-abs(z))
        r = (1.0 - w) / (1.0 + w)
        return -r * f if z > 0.0 else r * f
    return (1.0 - _exp(z)) * f


@njit(cache=True, nogil=True)
def _pdf_double_prime(code, z):
    f = _pdf(code, z)
    if f == 0.0:
        return 0.0
    if code == NORMAL:
        return (z * z - 1.0) * f
    if code == LOGISTIC:
        # (e^{2z} - 4e^z + 1) / (1 + e^z)^2 is even in z
        w = math.exp(-abs(z))
        return f * (1.0 - 4.0 * w + w * w) / ((1.0 + w) * (1.0 + w))
    t = _exp(z)
    return (t * t - 3.0 * t + 1.0) * f


@njit(cache=True, nogil=True)
def _log_pdf_slope(code, z):
    """f'(z) / f(z) in closed form."""
    if code == NORMAL:
        return -z
    if code == LOGISTIC:
        w = math.exp(-abs(z))
        r = (1.0 - w) / (1.0 + w)
        return -r if z > 0.0 else r
    return 1.0 - _exp(z)


@njit(cache=True, nogil=True)
def _log_pdf_curvature(code, z):
    """-(d/dz)^2 ln f(z) = (f'/f)^2 - f''/f, simplified per distribution."""
    if code == NORMAL:
        return 1.0
    if code == LOGISTIC:
        return 2.0 * _pdf(LOGISTIC, z)
    return _exp(z)


def pdf(dist, z: float) -> float:
    return _pdf(Distribution.parse(dist).code, float(z))


def log_pdf(dist, z: float) -> float:
    return _log_pdf(Distribution.parse(dist).code, float(z))


def cdf(dist, z: float) -> float:
    return _cdf(Distribution.parse(dist).code, float(z))


def pdf_prime(dist, z: float) -> float:
    """First derivative of the density."""
    return _pdf_prime(Distribution.parse(dist).code, float(z))


def pdf_double_prime(dist, z: float) -> float:
    """Second derivative of the density."""
    return _pdf_double_prime(Distribution.parse(dist).code, float(z))
