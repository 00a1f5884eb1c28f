"""Evaluation metrics for censored survival predictions.

Scores are model margins ``u = T(x)`` (predicted log survival time), so a
*higher* score means *longer* predicted survival.  A comparable pair (i, j)
with ``time_i < time_j`` is concordant when ``score_i < score_j``; this is the
opposite orientation from risk-score conventions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .data import Dataset
from .errors import MetricError
from .loss import AftParams, LabelRange, mean_loss_arrays

METRICS = ("interval_accuracy", "aft_nloglik", "harrell_c", "uno_c")
DEFAULT_TAU_PERCENTILE = 80.0


def higher_is_better(metric: str) -> bool:
    if metric not in METRICS:
        raise MetricError(f"unknown metric {metric!r}; expected one of {', '.join(METRICS)}")
    return metric != "aft_nloglik"


def _bounds(labels) -> tuple[np.ndarray, np.ndarray]:
    """Accept a Dataset, a sequence of LabelRange or a ``(lower, upper)`` pair of arrays."""
    if isinstance(labels, Dataset):
        return labels.lower, labels.upper
    if isinstance(labels, tuple) and len(labels) == 2 and not isinstance(labels[0], LabelRange):
        return np.asarray(labels[0], dtype=np.float64), np.asarray(labels[1], dtype=np.float64)
    labels = list(labels)
    lower = np.array([lab.lower for lab in labels], dtype=np.float64)
    upper = np.array([lab.upper for lab in labels], dtype=np.float64)
    return lower, upper


def _margins(margins, n: int) -> np.ndarray:
    m = np.ascontiguousarray(np.asarray(margins, dtype=np.float64).ravel())
    if m.shape[0] != n:
        raise MetricError(f"{m.shape[0]} margins for {n} labels")
    if n == 0:
        raise MetricError("empty input")
    return m


def interval_accuracy(margins, labels) -> float:
    """Fraction of margins inside their closed log label interval."""
    lower, upper = _bounds(labels)
    m = _margins(margins, lower.shape[0])
    with np.errstate(divide="ignore"):
        lo, hi = np.log(lower), np.log(upper)
    return float(np.count_nonzero((m >= lo) & (m <= hi))) / m.shape[0]


def aft_nloglik(margins, labels, aft: AftParams) -> float:
    lower, upper = _bounds(labels)
    m = _margins(margins, lower.shape[0])
    return mean_loss_arrays(lower, upper, m, aft)


# ---------------------------------------------------------------------------
# Kaplan-Meier


@dataclass(frozen=True)
class SurvivalPair:
    time: float
    event: bool
    score: float = 0.0

    def __post_init__(self):
        if not self.time > 0 or math.isinf(self.time):
            raise MetricError(f"survival time must be positive and finite, got {self.time!r}")


@dataclass(frozen=True)
class KaplanMeierCurve:
    """Right-continuous product-limit step function."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.times, t, side="right")
        return self._at(idx)

    def left_limit(self, t):
        """Value just before ``t``."""
        idx = np.searchsorted(self.times, t, side="left")
        return self._at(idx)

    def _at(self, idx):
        padded = np.concatenate([[1.0], self.values])
        out = padded[idx]
        return float(out) if np.ndim(out) == 0 else out


def kaplan_meier(times, events) -> KaplanMeierCurve:
    """Product-limit estimate; a subject with time ``t`` is at risk at ``t``."""
    t = np.asarray(times, dtype=np.float64).ravel()
    e = np.asarray(events, dtype=bool).ravel()
    if t.shape[0] == 0:
        raise MetricError("kaplan_meier needs at least one subject")
    if t.shape != e.shape:
        raise MetricError("times and events differ in length")
    if not np.all(t > 0):
        raise MetricError("times must be positive")
    order = np.argsort(t, kind="stable")
    t, e = t[order], e[order]
    uniq, first = np.unique(t, return_index=True)
    at_risk = t.shape[0] - first
    deaths = np.add.reduceat(e.astype(np.int64), first)
    keep = deaths > 0
    surv = 1.0
    values = []
    for d, r in zip(deaths[keep].tolist(), at_risk[keep].tolist()):
        surv *= 1.0 - d / r
        values.append(surv)
    return KaplanMeierCurve(uniq[keep], np.array(values, dtype=np.float64))


# ---------------------------------------------------------------------------
# concordance


@njit(cache=True, nogil=True)
def _weighted_concordance(time, event, score, weight, tau):
    num = 0.0
    den = 0.0
    n = time.shape[0]
    for i in range(n):
        if not event[i] or not time[i] < tau:
            continue
        w = weight[i]
        for j in range(n):
            if time[i] < time[j]:
                den += w
                if score[i] < score[j]:
                    num += w
                elif score[i] == score[j]:
                    num += 0.5 * w
    return num, den


def _pair_arrays(pairs: Sequence[SurvivalPair]):
    pairs = list(pairs)
    time = np.array([p.time for p in pairs], dtype=np.float64)
    event = np.array([p.event for p in pairs], dtype=np.bool_)
    score = np.array([p.score for p in pairs], dtype=np.float64)
    return time, event, score


def harrell_c_arrays(time, event, score) -> float:
    time = np.asarray(time, dtype=np.float64)
    if time.shape[0] < 2:
        raise MetricError("harrell_c needs at least two subjects")
    num, den = _weighted_concordance(
        time, np.asarray(event, dtype=np.bool_), np.asarray(score, dtype=np.float64),
        np.ones(time.shape[0]), math.inf,
    )
    if den == 0.0:
        raise MetricError("no comparable pairs")
    return num / den


def harrell_c(pairs: Sequence[SurvivalPair]) -> float:
    return harrell_c_arrays(*_pair_arrays(pairs))


def default_tau(times, percentile: float = DEFAULT_TAU_PERCENTILE) -> float:
    return float(np.percentile(np.asarray(times, dtype=np.float64), percentile))


def ipcw_weights(censoring_curve: KaplanMeierCurve, time, event) -> np.ndarray:
    """``1 / G(t-)^2`` per event row; zero for censored rows."""
    g = np.atleast_1d(censoring_curve.left_limit(np.asarray(time, dtype=np.float64)))
    event = np.asarray(event, dtype=bool)
    if np.any(event & (g <= 0.0)):
        raise MetricError("censoring survival estimate is 0 at an event time (insufficient follow-up)")
    w = np.zeros(g.shape[0])
    w[event] = 1.0 / (g[event] * g[event])
    return w


def uno_c_arrays(train_time, train_event, time, event, score, tau: Optional[float] = None,
                 tau_percentile: float = DEFAULT_TAU_PERCENTILE) -> float:
    train_time = np.asarray(train_time, dtype=np.float64)
    if train_time.shape[0] == 0:
        raise MetricError("uno_c needs training pairs for the censoring distribution")
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event, dtype=np.bool_)
    if tau is None:
        tau = default_tau(time, tau_percentile)
    if not tau > 0:
        raise MetricError(f"tau must be positive, got {tau!r}")
    curve = kaplan_meier(train_time, ~np.asarray(train_event, dtype=bool))
    needed = event & (time < tau)
    weight = np.zeros(time.shape[0])
    weight[needed] = ipcw_weights(curve, time[needed], event[needed])
    num, den = _weighted_concordance(time, event, np.asarray(score, dtype=np.float64), weight, tau)
    if den == 0.0:
        raise MetricError("no comparable pairs below tau")
    return num / den


def uno_c(train_pairs: Sequence[SurvivalPair], test_pairs: Sequence[SurvivalPair],
          tau: Optional[float] = None, tau_percentile: float = DEFAULT_TAU_PERCENTILE) -> float:
    """IPCW concordance truncated at ``tau`` (default: a percentile of test times)."""
    tr_time, tr_event, _ = _pair_arrays(train_pairs)
    time, event, score = _pair_arrays(test_pairs)
    return uno_c_arrays(tr_time, tr_event, time, event, score, tau, tau_percentile)


def survival_arrays(dataset_or_labels) -> tuple[np.ndarray, np.ndarray]:
    """Observed time and event flag per row; only uncensored/right-censored rows qualify."""
    lower, upper = _bounds(dataset_or_labels)
    event = lower == upper
    right = np.isinf(upper) & (lower > 0)
    if not np.all(event | right):
        raise MetricError("concordance metrics need uncensored or right-censored labels only")
    return lower.copy(), event


def survival_pairs(dataset: Dataset, margins) -> list:
    time, event = survival_arrays(dataset)
    m = _margins(margins, time.shape[0])
    return [SurvivalPair(t, bool(e), s) for t, e, s in zip(time.tolist(), event.tolist(), m.tolist())]


# ---------------------------------------------------------------------------
# scorers for repeated evaluation on a fixed split


def make_scorer(metric: str, train: Dataset, valid: Dataset, aft: AftParams,
                tau_percentile: float = DEFAULT_TAU_PERCENTILE) -> Callable[[np.ndarray], float]:
    """Return ``score(valid_margins) -> float``; label-only work is done once up front."""
    higher_is_better(metric)
    if metric == "interval_accuracy":
        with np.errstate(divide="ignore"):
            lo, hi = np.log(valid.lower), np.log(valid.upper)
        n = valid.n_rows
        return lambda m: float(np.count_nonzero((m >= lo) & (m <= hi))) / n
    if metric == "aft_nloglik":
        return lambda m: aft_nloglik(m, valid, aft)
    time, event = survival_arrays(valid)
    if metric == "harrell_c":
        return lambda m: harrell_c_arrays(time, event, m)
    tr_time, tr_event = survival_arrays(train)
    tau = default_tau(time, tau_percentile)
    curve = kaplan_meier(tr_time, ~tr_event)
    needed = event & (time < tau)
    weight = np.zeros(time.shape[0])
    weight[needed] = ipcw_weights(curve, time[needed], event[needed])

    def score(m):
        num, den = _weighted_concordance(time, event, np.asarray(m, dtype=np.float64), weight, tau)
        if den == 0.0:
            raise MetricError("no comparable pairs below tau")
        return num / den

    return score


def evaluate(metric: str, margins, dataset: Dataset, aft: AftParams,
             train: Optional[Dataset] = None, tau: Optional[float] = None,
             tau_percentile: float = DEFAULT_TAU_PERCENTILE) -> float:
    """One metric on one dataset; ``uno_c`` uses ``train`` (default: the dataset itself) for G."""
    higher_is_better(metric)
    if metric == "interval_accuracy":
        return interval_accuracy(margins, dataset)
    if metric == "aft_nloglik":
        return aft_nloglik(margins, dataset, aft)
    time, event = survival_arrays(dataset)
    m = _margins(margins, time.shape[0])
    if metric == "harrell_c":
        return harrell_c_arrays(time, event, m)
    tr_time, tr_event = survival_arrays(train if train is not None else dataset)
    return uno_c_arrays(tr_time, tr_event, time, event, m, tau, tau_percentile)
