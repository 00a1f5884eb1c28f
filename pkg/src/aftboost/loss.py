"""AFT negative log-likelihood with its gradient and hessian in the margin.

For a label range ``[lower, upper]`` and margin ``u`` (the predicted log
survival time) the loss is ``-ln f_Y(y)`` for uncensored labels and
``-ln(F_Y(upper) - F_Y(lower))`` otherwise, expressed through the standardized
residual ``s(y) = (ln y - u) / sigma``.

Far from the label the closed forms break down (zero probability mass, zero
denominators, overflowing exponentials).  The kernel then falls back to the
limiting values of the derivatives as ``u -> +/-inf``, clips the gradient and
floors the hessian, so every output is finite.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .distributions import (
    EXTREME,
    LOGISTIC,
    NORMAL,
    Distribution,
    _cdf,
    _log_pdf_curvature,
    _log_pdf,
    _log_pdf_slope,
    _pdf,
    _pdf_prime,
    _sf,
)
from .errors import ConfigError, InvalidLabelError

UNCENSORED = 0
RIGHT_CENSORED = 1
LEFT_CENSORED = 2
INTERVAL_CENSORED = 3

DEFAULT_EPSILON = 1e-12
DEFAULT_GRAD_CLIP = 15.0
DEFAULT_HESSIAN_FLOOR = 1e-16


class Censoring(str, enum.Enum):
    UNCENSORED = "uncensored"
    RIGHT = "right"
    LEFT = "left"
    INTERVAL = "interval"

    @property
    def code(self) -> int:
        return _CENSOR_CODES[self]


_CENSOR_CODES = {
    Censoring.UNCENSORED: UNCENSORED,
    Censoring.RIGHT: RIGHT_CENSORED,
    Censoring.LEFT: LEFT_CENSORED,
    Censoring.INTERVAL: INTERVAL_CENSORED,
}


@dataclass(frozen=True)
class LabelRange:
    """Survival-time bounds of one observation, in natural time units."""

    lower: float
    upper: float

    def __post_init__(self):
        lower, upper = float(self.lower), float(self.upper)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if not math.isfinite(lower):
            raise InvalidLabelError(f"lower bound must be finite, got {lower}")
        if lower < 0.0:
            raise InvalidLabelError(f"lower bound must be non-negative, got {lower}")
        if math.isnan(upper) or upper < lower:
            raise InvalidLabelError(f"need lower <= upper, got [{lower}, {upper}]")

    @property
    def censoring(self) -> Censoring:
        return censoring_of(self.lower, self.upper)


def censoring_of(lower: float, upper: float) -> Censoring:
    if lower == upper:
        return Censoring.UNCENSORED
    if math.isinf(upper):
        return Censoring.RIGHT
    if lower == 0.0:
        return Censoring.LEFT
    return Censoring.INTERVAL


@dataclass(frozen=True)
class AftParams:
    dist: Distribution = Distribution.NORMAL
    sigma: float = 1.0
    epsilon: float = DEFAULT_EPSILON
    grad_clip: float = DEFAULT_GRAD_CLIP
    hessian_floor: float = DEFAULT_HESSIAN_FLOOR

    def __post_init__(self):
        try:
            object.__setattr__(self, "dist", Distribution.parse(self.dist))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("sigma", "epsilon", "grad_clip", "hessian_floor"):
            value = float(getattr(self, name))
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, value)

    def to_dict(self) -> dict:
        return {
            "aft_loss_distribution": self.dist.value,
            "aft_loss_distribution_scale": self.sigma,
            "epsilon": self.epsilon,
            "grad_clip": self.grad_clip,
            "hessian_floor": self.hessian_floor,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AftParams":
        return cls(
            dist=doc.get("aft_loss_distribution", "normal"),
            sigma=doc.get("aft_loss_distribution_scale", 1.0),
            epsilon=doc.get("epsilon", DEFAULT_EPSILON),
            grad_clip=doc.get("grad_clip", DEFAULT_GRAD_CLIP),
            hessian_floor=doc.get("hessian_floor", DEFAULT_HESSIAN_FLOOR),
        )


@dataclass(frozen=True)
class LossDerivatives:
    loss: float
    gradient: float
    hessian: float
    # True when the limit values replaced the closed forms or the gradient was clipped
    regularized: bool = False


@njit(cache=True, nogil=True)
def _link(y, u, sigma):
    if y == 0.0:
        return -math.inf
    if y == math.inf:
        return math.inf
    return (math.log(y) - u) / sigma


@njit(cache=True, nogil=True)
def _limit(code, censor, to_plus_inf, sigma, grad_clip, hessian_floor):
    """Derivative values as u -> +inf (``to_plus_inf``) or u -> -inf."""
    inv_sigma2 = 1.0 / (sigma * sigma)
    if code == NORMAL:
        if to_plus_inf:
            if censor == RIGHT_CENSORED:
                return 0.0, hessian_floor
            return grad_clip, inv_sigma2
        if censor == LEFT_CENSORED:
            return 0.0, hessian_floor
        return -grad_clip, inv_sigma2
    if code == LOGISTIC:
        if to_plus_inf:
            if censor == RIGHT_CENSORED:
                return 0.0, hessian_floor
            return 1.0 / sigma, hessian_floor
        if censor == LEFT_CENSORED:
            return 0.0, hessian_floor
        return -1.0 / sigma, hessian_floor
    # extreme
    if to_plus_inf:
        if censor == RIGHT_CENSORED:
            return 0.0, hessian_floor
        return 1.0 / sigma, hessian_floor
    if censor == LEFT_CENSORED:
        return 0.0, hessian_floor
    return -grad_clip, grad_clip


@njit(cache=True, nogil=True)
def _aft_eval(lower, upper, u, code, sigma, eps, grad_clip, hessian_floor):
    """Returns (loss, gradient, hessian, regularized) for one row.

    Labels must already be validated; an uncensored zero time is not checked here.
    """
    finite = True
    clamped = False
    if lower == upper:
        censor = UNCENSORED
        s = (math.log(lower) - u) / sigma
        f = _pdf(code, s)
        loss = -_log_pdf(code, s) + math.log(sigma) + math.log(lower)
        # density below eps: the loss is held at -ln(eps)
        clamped = loss > -math.log(eps)
        if clamped:
            loss = -math.log(eps)
        grad = _log_pdf_slope(code, s) / sigma
        hess = _log_pdf_curvature(code, s) / (sigma * sigma)
        unstable = f < eps
        to_plus_inf = s <= 0.0
    else:
        if upper == math.inf:
            censor = RIGHT_CENSORED
        elif lower == 0.0:
            censor = LEFT_CENSORED
        else:
            censor = INTERVAL_CENSORED
        s_lo = _link(lower, u, sigma)
        s_hi = _link(upper, u, sigma)
        f_lo = _pdf(code, s_lo) if lower > 0.0 else 0.0
        f_hi = _pdf(code, s_hi) if upper < math.inf else 0.0
        fp_lo = _pdf_prime(code, s_lo) if lower > 0.0 else 0.0
        fp_hi = _pdf_prime(code, s_hi) if upper < math.inf else 0.0
        if s_lo > 0.0:
            mass = _sf(code, s_lo) - _sf(code, s_hi)
        else:
            mass = _cdf(code, s_hi) - _cdf(code, s_lo)
        loss = -math.log(max(mass, eps))
        # every finite anchor sits in a dead tail: u is far away from the label,
        # either outside it or deep inside a one-sided (left/right) range
        has_lo = lower > 0.0
        has_hi = upper < math.inf
        far = (has_lo or has_hi) and (not has_lo or f_lo < eps) and (not has_hi or f_hi < eps)
        if censor == INTERVAL_CENSORED:
            far = far and (s_lo > 0.0 or s_hi < 0.0)
        unstable = mass < eps or far
        if s_lo > 0.0:
            to_plus_inf = False
        elif s_hi < 0.0:
            to_plus_inf = True
        else:
            # u inside a (numerically) degenerate interval: nearest anchor decides
            to_plus_inf = -s_lo < s_hi
        if unstable:
            grad = 0.0
            hess = 0.0
        else:
            dpdf = f_hi - f_lo
            grad = dpdf / (sigma * mass)
            hess = (-mass * (fp_hi - fp_lo) + dpdf * dpdf) / (sigma * sigma * mass * mass)
    if not (math.isfinite(grad) and math.isfinite(hess) and math.isfinite(loss)):
        finite = False
    regularized = clamped
    if unstable or not finite:
        grad, hess = _limit(code, censor, to_plus_inf, sigma, grad_clip, hessian_floor)
        regularized = True
    if not math.isfinite(loss):
        loss = -math.log(eps)
    if grad > grad_clip:
        grad = grad_clip
        regularized = True
    elif grad < -grad_clip:
        grad = -grad_clip
        regularized = True
    if hess < hessian_floor:
        hess = hessian_floor
    return loss, grad, hess, regularized


@njit(cache=True, nogil=True)
def _grad_hess_arrays(lower, upper, margins, code, sigma, eps, grad_clip, hessian_floor, grad, hess):
    for i in range(margins.shape[0]):
        _, g, h, _ = _aft_eval(lower[i], upper[i], margins[i], code, sigma, eps, grad_clip, hessian_floor)
        grad[i] = g
        hess[i] = h


@njit(cache=True, nogil=True)
def _mean_loss(lower, upper, margins, code, sigma, eps, grad_clip, hessian_floor):
    total = 0.0
    n = margins.shape[0]
    for i in range(n):
        loss, _, _, _ = _aft_eval(lower[i], upper[i], margins[i], code, sigma, eps, grad_clip, hessian_floor)
        total += loss
    return total / n


def _check_label(label) -> LabelRange:
    if not isinstance(label, LabelRange):
        label = LabelRange(*label)
    if label.lower == label.upper == 0.0:
        raise InvalidLabelError("uncensored label with survival time 0 has no log-density")
    return label


def link(y: float, u: float, sigma: float) -> float:
    """Standardized residual ``(ln y - u) / sigma``; ``y = 0`` and ``y = inf`` map to -inf/+inf."""
    return _link(float(y), float(u), float(sigma))


def aft_loss(label, u: float, params: AftParams) -> float:
    return aft_grad_hess(label, u, params).loss


def aft_grad_hess(label, u: float, params: AftParams) -> LossDerivatives:
    """Loss, gradient and hessian with respect to the margin ``u``."""
    label = _check_label(label)
    loss, grad, hess, reg = _aft_eval(
        label.lower,
        label.upper,
        float(u),
        params.dist.code,
        params.sigma,
        params.epsilon,
        params.grad_clip,
        params.hessian_floor,
    )
    return LossDerivatives(loss, grad, hess, bool(reg))


def limit_derivatives(
    dist,
    censoring,
    direction: float,
    sigma: float,
    grad_clip: float = DEFAULT_GRAD_CLIP,
    hessian_floor: float = DEFAULT_HESSIAN_FLOOR,
) -> tuple[float, float]:
    """(gradient, hessian) as the margin tends to ``direction`` (+inf or -inf)."""
    code = Distribution.parse(dist).code
    if not isinstance(censoring, Censoring):
        censoring = Censoring(censoring)
    if direction not in (math.inf, -math.inf):
        raise ValueError("direction must be +inf or -inf")
    return _limit(code, censoring.code, direction > 0, float(sigma), grad_clip, hessian_floor)


def grad_hess_arrays(lower, upper, margins, params: AftParams):
    """Vectorized gradient/hessian over rows; labels are assumed validated."""
    margins = np.ascontiguousarray(margins, dtype=np.float64)
    grad = np.empty_like(margins)
    hess = np.empty_like(margins)
    _grad_hess_arrays(
        lower, upper, margins, params.dist.code, params.sigma,
        params.epsilon, params.grad_clip, params.hessian_floor, grad, hess,
    )
    return grad, hess


def mean_loss_arrays(lower, upper, margins, params: AftParams) -> float:
    margins = np.ascontiguousarray(margins, dtype=np.float64)
    return _mean_loss(
        lower, upper, margins, params.dist.code, params.sigma,
        params.epsilon, params.grad_clip, params.hessian_floor,
    )


__all__ = [
    "AftParams",
    "Censoring",
    "LabelRange",
    "LossDerivatives",
    "aft_grad_hess",
    "aft_loss",
    "censoring_of",
    "grad_hess_arrays",
    "limit_derivatives",
    "link",
    "mean_loss_arrays",
]
