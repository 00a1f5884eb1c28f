"""Seeded synthetic survival data.

Interval-censored recipes (``sin``, ``abs``, ``linear``, ``model1``..``model3``)
draw ten noisy realizations around a mean function and keep their range;
right-censored recipes (``coxph``, ``aft``) draw exact survival times and then
censor them with uniform cutoffs.

Feature indices in the mean functions are 1-based: ``x1`` is column 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import ConfigError

N_FEATURES = 20
INTERVAL_RECIPES = ("sin", "abs", "linear", "model1", "model2", "model3")
RIGHT_CENSORED_RECIPES = ("coxph", "aft")
RECIPES = INTERVAL_RECIPES + RIGHT_CENSORED_RECIPES

BASELINE_HAZARD = 0.1
HAZARD_RATIO = 2.0
INTERVAL_DRAWS = 10
INTERVAL_SD = 0.3
BOUND_NOISE_SD = 0.2
RISK_SD = 0.3

# names used on the command line
_ALIASES = {
    "simulated.sin": "sin",
    "simulated.abs": "abs",
    "simulated.linear": "linear",
    "simulated.model.1": "model1",
    "simulated.model.2": "model2",
    "simulated.model.3": "model3",
}


def canonical_recipe(name: str) -> str:
    key = str(name).strip().lower()
    key = _ALIASES.get(key, key)
    if key not in RECIPES:
        valid = ", ".join(list(_ALIASES) + list(RIGHT_CENSORED_RECIPES))
        raise ConfigError(f"unknown recipe {name!r}; expected one of {valid}")
    return key


@dataclass(frozen=True)
class GeneratorSpec:
    recipe: str
    n_rows: int
    censor_fraction: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "recipe", canonical_recipe(self.recipe))
        if int(self.n_rows) < 1:
            raise ConfigError("n_rows must be positive")
        object.__setattr__(self, "n_rows", int(self.n_rows))
        if self.recipe in RIGHT_CENSORED_RECIPES:
            if self.censor_fraction is None or not 0.0 < float(self.censor_fraction) < 1.0:
                raise ConfigError("right-censored recipes need censor_fraction in (0, 1)")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")


def mean_function(recipe: str, x) -> np.ndarray:
    """Noise-free signal f(x); accepts one feature vector or a matrix of rows."""
    recipe = canonical_recipe(recipe)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < N_FEATURES:
        raise ConfigError(f"need at least {N_FEATURES} features, got {x.shape[-1]}")
    x1, x2, x3, x4, x5, x6, x7, x8, x10 = (x[..., k - 1] for k in (1, 2, 3, 4, 5, 6, 7, 8, 10))
    if recipe == "sin":
        return np.sin(x1)
    if recipe == "abs":
        return np.abs(x1 - 5.0)
    if recipe == "linear":
        return x1 / 5.0
    if recipe == "model1":
        return x1 * x2 + x3**2 - x4 * x7 + x8 * x10 - x6**2
    if recipe == "model2":
        return -np.sin(2.0 * x1) + x2**2 + x3 - np.exp(-x4)
    # model3, coxph and aft share one signal
    return x1 + 3.0 * x3**2 - 2.0 * np.exp(-x5)


def coxph_time(risk, u):
    """Survival time under a constant-hazard Cox model: ``-ln(u) / (h0 * h**risk)``."""
    return -np.log(u) / (BASELINE_HAZARD * HAZARD_RATIO ** np.asarray(risk))


def aft_time(risk):
    return np.exp(-np.asarray(risk))


def calibrate_cutoff_scale(times: np.ndarray, unit_cutoffs: np.ndarray, fraction: float) -> float:
    """Scale C such that ``times >= C * unit_cutoffs`` holds for ``round(fraction * n)`` rows.

    Row i is censored exactly when ``C <= times[i] / unit_cutoffs[i]``, so C is placed
    between the k-th and (k+1)-th largest of those ratios.  The result stays in
    ``[min(times), 10 * max(times)]``.
    """
    n = times.shape[0]
    k = int(round(fraction * n))
    ratios = np.sort(times / unit_cutoffs)[::-1]
    lo_bound, hi_bound = float(times.min()), 10.0 * float(times.max())
    if k <= 0:
        scale = ratios[0] * 2.0
    elif k >= n:
        scale = ratios[-1]
    else:
        scale = 0.5 * (ratios[k - 1] + ratios[k])
    return float(min(max(scale, lo_bound), hi_bound))


def generate_interval(spec: GeneratorSpec) -> Dataset:
    if spec.recipe not in INTERVAL_RECIPES:
        raise ConfigError(f"{spec.recipe!r} is not an interval-censored recipe")
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    X = rng.uniform(0.0, 10.0, size=(n, N_FEATURES))
    f = mean_function(spec.recipe, X)
    draws = rng.normal(f[:, None], INTERVAL_SD, size=(n, INTERVAL_DRAWS))
    noise = rng.normal(0.0, BOUND_NOISE_SD, size=n)
    log_lower = draws.min(axis=1) + noise
    log_upper = draws.max(axis=1) + noise
    return Dataset(
        X,
        np.exp(log_lower),
        np.exp(log_upper),
        aux={"log_lower": log_lower, "log_upper": log_upper},
    )


def generate_right_censored(spec: GeneratorSpec) -> Dataset:
    if spec.recipe not in RIGHT_CENSORED_RECIPES:
        raise ConfigError(f"{spec.recipe!r} is not a right-censored recipe")
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    X = rng.uniform(0.0, 1.0, size=(n, N_FEATURES))
    risk = rng.normal(mean_function(spec.recipe, X), RISK_SD)
    if spec.recipe == "coxph":
        u = rng.uniform(np.finfo(np.float64).tiny, 1.0, size=n)
        y = coxph_time(risk, u)
    else:
        y = aft_time(risk)
    # cutoffs c = C * v with v ~ U(0, 1]; v is drawn before C is fixed
    v = 1.0 - rng.uniform(0.0, 1.0, size=n)
    scale = calibrate_cutoff_scale(y, v, float(spec.censor_fraction))
    c = scale * v
    censored = y >= c
    lower = np.where(censored, c, y)
    upper = np.where(censored, math.inf, y)
    return Dataset(X, lower, upper, aux={"risk": risk, "true_time": y})


def generate(spec: GeneratorSpec) -> Dataset:
    if spec.recipe in INTERVAL_RECIPES:
        return generate_interval(spec)
    return generate_right_censored(spec)
