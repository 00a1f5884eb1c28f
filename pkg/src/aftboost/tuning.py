"""Grid/random hyperparameter search and nested cross-validation.

Inner-fold models of one trial are boosted in lockstep so the validation
metric can be averaged per round; the round with the best mean is the trial's
chosen ensemble size.  Trials are independent and may run on a thread pool;
results are always ordered by trial index.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .distributions import Distribution
from .errors import ConfigError, DataError, MetricError
from .gbt import BoostingParams, FeatureBins, Trainer
from .loss import AftParams
from .metrics import evaluate, higher_is_better, make_scorer, survival_arrays

TUNABLE = (
    "learning_rate",
    "max_depth",
    "min_child_weight",
    "reg_alpha",
    "reg_lambda",
    "aft_loss_distribution_scale",
    "aft_loss_distribution",
)
DEFAULTS = {
    "learning_rate": 0.1,
    "max_depth": 6,
    "min_child_weight": 1.0,
    "reg_alpha": 0.001,
    "reg_lambda": 1.0,
    "aft_loss_distribution_scale": 1.0,
    "aft_loss_distribution": "normal",
}
DEFAULT_ROUND_BUDGET = 500


# ---------------------------------------------------------------------------
# search-space descriptors


@dataclass(frozen=True)
class Grid:
    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise ConfigError("grid must not be empty")
        object.__setattr__(self, "values", tuple(self.values))

    def sample(self, rng: np.random.Generator):
        return self.values[int(rng.integers(len(self.values)))]

    def to_doc(self):
        return list(self.values)


@dataclass(frozen=True)
class _Range:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ConfigError(f"invalid range [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class LogUniform(_Range):
    def __post_init__(self):
        super().__post_init__()
        if self.lo <= 0:
            raise ConfigError("log_uniform needs a positive lower bound")

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))

    def to_doc(self):
        return {"log_uniform": [self.lo, self.hi]}


@dataclass(frozen=True)
class Uniform(_Range):
    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def to_doc(self):
        return {"uniform": [self.lo, self.hi]}


@dataclass(frozen=True)
class IntUniform(_Range):
    def __post_init__(self):
        super().__post_init__()
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ConfigError("int_uniform bounds must be integers")

    def sample(self, rng):
        return int(rng.integers(int(self.lo), int(self.hi) + 1))

    def to_doc(self):
        return {"int_uniform": [int(self.lo), int(self.hi)]}


_DESCRIPTORS = {"log_uniform": LogUniform, "uniform": Uniform, "int_uniform": IntUniform}

GRID = {
    "learning_rate": Grid((0.001, 0.01, 0.1, 1.0)),
    "max_depth": Grid((2, 3, 4, 5, 6, 7, 8, 9, 10)),
    "min_child_weight": Grid((0.001, 0.1, 1.0, 10.0, 100.0)),
    "reg_alpha": Grid((0.001, 0.01, 0.1, 1.0, 10.0, 100.0)),
    "reg_lambda": Grid((0.001, 0.01, 0.1, 1.0, 10.0, 100.0)),
    "aft_loss_distribution_scale": Grid((0.5, 0.8, 1.1, 1.4, 1.7, 2.0)),
    "aft_loss_distribution": Grid(("normal", "logistic", "extreme")),
}
RANDOM = {
    "learning_rate": LogUniform(0.001, 1.0),
    "max_depth": IntUniform(2, 10),
    "min_child_weight": LogUniform(0.001, 100.0),
    "reg_alpha": LogUniform(0.001, 100.0),
    "reg_lambda": LogUniform(0.001, 100.0),
    "aft_loss_distribution_scale": Uniform(0.5, 2.0),
    "aft_loss_distribution": Grid(("normal", "logistic", "extreme")),
}
# the distribution family is only searched when asked for explicitly
SIX = TUNABLE[:6]


@dataclass(frozen=True)
class SearchSpace:
    params: dict

    def __post_init__(self):
        unknown = [k for k in self.params if k not in TUNABLE]
        if unknown:
            raise ConfigError(f"unknown hyperparameter(s) {unknown}; tunable: {', '.join(TUNABLE)}")
        if not self.params:
            raise ConfigError("search space is empty")
        # canonical order keeps sampling independent of the document's key order
        object.__setattr__(self, "params", {k: self.params[k] for k in TUNABLE if k in self.params})

    @classmethod
    def grid(cls, names: Sequence[str] = SIX) -> "SearchSpace":
        return cls({n: _lookup(GRID, n) for n in names})

    @classmethod
    def random(cls, names: Sequence[str] = SIX) -> "SearchSpace":
        return cls({n: _lookup(RANDOM, n) for n in names})

    @property
    def names(self) -> list:
        return list(self.params)

    def grid_points(self) -> list:
        for name, d in self.params.items():
            if not isinstance(d, Grid):
                raise ConfigError(f"grid mode needs a value list for {name!r}")
        names = self.names
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.params[n].values for n in names))]

    def to_doc(self) -> dict:
        return {k: d.to_doc() for k, d in self.params.items()}

    @classmethod
    def from_doc(cls, doc: dict) -> "SearchSpace":
        if not isinstance(doc, dict):
            raise ConfigError("search space document must be a mapping")
        params = {}
        for name, spec in doc.items():
            if isinstance(spec, list):
                params[name] = Grid(tuple(spec))
            elif isinstance(spec, dict) and len(spec) == 1:
                (kind, bounds), = spec.items()
                if kind not in _DESCRIPTORS:
                    raise ConfigError(f"{name}: unknown distribution {kind!r}; expected one of {', '.join(_DESCRIPTORS)}")
                if not isinstance(bounds, list) or len(bounds) != 2:
                    raise ConfigError(f"{name}: {kind} needs [lo, hi]")
                params[name] = _DESCRIPTORS[kind](float(bounds[0]), float(bounds[1]))
            else:
                raise ConfigError(f"{name}: expected a value list or a one-key distribution mapping")
        return cls(params)


def _lookup(table: dict, name: str):
    if name not in table:
        raise ConfigError(f"unknown hyperparameter {name!r}; tunable: {', '.join(TUNABLE)}")
    return table[name]


def sample_trial(space: SearchSpace, rng: np.random.Generator) -> dict:
    """Draw every hyperparameter independently, in canonical name order."""
    return {name: d.sample(rng) for name, d in space.params.items()}


def build_params(assignment: dict, num_rounds: int, max_bins: int = 256, seed: int = 0,
                 defaults: Optional[dict] = None) -> tuple[AftParams, BoostingParams]:
    values = dict(DEFAULTS if defaults is None else defaults)
    values.update(assignment)
    aft = AftParams(Distribution.parse(values["aft_loss_distribution"]), float(values["aft_loss_distribution_scale"]))
    boost = BoostingParams(
        learning_rate=values["learning_rate"],
        max_depth=values["max_depth"],
        min_child_weight=values["min_child_weight"],
        reg_alpha=values["reg_alpha"],
        reg_lambda=values["reg_lambda"],
        num_rounds=num_rounds,
        max_bins=max_bins,
        seed=seed,
    )
    return aft, boost


def full_assignment(assignment: dict) -> dict:
    out = dict(DEFAULTS)
    out.update(assignment)
    return out


# ---------------------------------------------------------------------------
# folds


def make_folds(n_rows: int, n_folds: int, seed: int = 0, groups: Optional[np.ndarray] = None) -> np.ndarray:
    """Fold id per row: a seeded permutation dealt round-robin.

    With ``groups`` (e.g. the original row id of replicated rows) whole groups are
    dealt, so duplicates land in their original's fold.
    """
    if n_folds < 2:
        raise ConfigError("need at least 2 folds")
    if groups is None:
        units = n_rows
    else:
        groups = np.asarray(groups)
        uniq, inverse = np.unique(groups, return_inverse=True)
        units = uniq.shape[0]
    if units < n_folds:
        raise DataError(f"{units} rows cannot fill {n_folds} folds")
    perm = np.random.default_rng(seed).permutation(units)
    fold = np.empty(units, dtype=np.int64)
    fold[perm] = np.arange(units) % n_folds
    return fold if groups is None else fold[inverse]


@dataclass
class Split:
    train_index: np.ndarray
    valid_index: np.ndarray
    train: Dataset
    valid: Dataset
    bins: FeatureBins
    binned: np.ndarray


def _splits(dataset: Dataset, fold: np.ndarray, max_bins: int) -> list:
    out = []
    for k in range(int(fold.max()) + 1):
        valid_idx = np.flatnonzero(fold == k)
        train_idx = np.flatnonzero(fold != k)
        if valid_idx.size == 0 or train_idx.size == 0:
            raise DataError(f"fold {k} is empty or leaves no training rows")
        train = dataset.subset(train_idx)
        bins = FeatureBins.fit(train.features, max_bins)
        out.append(Split(train_idx, valid_idx, train, dataset.subset(valid_idx), bins, bins.transform(train.features)))
    return out


# ---------------------------------------------------------------------------
# search


@dataclass
class TrialRecord:
    index: int
    params: dict
    fold_metrics: list
    mean_metric: float
    best_round: int
    rounds_run: int


@dataclass
class SearchResult:
    metric: str
    records: list
    best_index: int
    # per inner fold: (train rows, validation rows) as indices into the searched dataset
    splits: list = field(default_factory=list)

    @property
    def best(self) -> TrialRecord:
        return self.records[self.best_index]

    @property
    def best_params(self) -> dict:
        return full_assignment(self.best.params)


def _key(value: float, maximize: bool) -> float:
    if math.isnan(value):
        return -math.inf
    return value if maximize else -value


def _run_trial(index, assignment, splits, metric, round_budget, patience, max_bins, seed):
    aft, boost = build_params(assignment, round_budget, max_bins, seed)
    maximize = higher_is_better(metric)
    trainers, scorers, margins = [], [], []
    for sp in splits:
        tr = Trainer(sp.train, aft, boost, bins=sp.bins, binned=sp.binned)
        trainers.append(tr)
        scorers.append(make_scorer(metric, sp.train, sp.valid, aft))
        margins.append(np.full(sp.valid.n_rows, tr.base_score))
    k = len(splits)
    values = np.empty((round_budget, k))
    best_key, best_round, rounds = -math.inf, 1, 0
    for r in range(round_budget):
        for j in range(k):
            tree = trainers[j].step()
            tree.add_to(splits[j].valid.features, margins[j])
            values[r, j] = scorers[j](margins[j])
        rounds = r + 1
        key = _key(float(np.mean(values[r])), maximize)
        if key > best_key:
            best_key, best_round = key, r + 1
        elif patience is not None and rounds - best_round >= patience:
            break
    fold_metrics = values[best_round - 1].tolist()
    return TrialRecord(index, dict(assignment), fold_metrics, float(np.mean(values[best_round - 1])),
                       best_round, rounds)


def _check_metric(dataset: Dataset, metric: str) -> None:
    higher_is_better(metric)
    if metric in ("uno_c", "harrell_c"):
        try:
            survival_arrays(dataset)
        except MetricError as exc:
            raise ConfigError(f"metric {metric} is incompatible with these labels: {exc}") from None


def trial_assignments(space: SearchSpace, mode: str, n_trials: Optional[int], seed: int) -> list:
    if mode == "grid":
        return space.grid_points()
    if mode == "random":
        if n_trials is None or n_trials < 1:
            raise ConfigError("random mode needs a positive trial count")
        rng = np.random.default_rng(seed)
        return [sample_trial(space, rng) for _ in range(n_trials)]
    raise ConfigError(f"unknown search mode {mode!r}; expected grid or random")


def run_search(
    dataset: Dataset,
    space: SearchSpace,
    mode: str = "random",
    n_trials: Optional[int] = 100,
    inner_folds: int = 5,
    metric: str = "interval_accuracy",
    round_budget: int = DEFAULT_ROUND_BUDGET,
    seed: int = 0,
    patience: Optional[int] = None,
    threads: int = 1,
    max_bins: int = 256,
    fold: Optional[np.ndarray] = None,
) -> SearchResult:
    """Evaluate every trial by inner cross-validation.

    ``patience`` stops a trial once that many rounds pass without a new best
    mean validation metric; ``None`` always runs the full ``round_budget``.
    """
    _check_metric(dataset, metric)
    if round_budget < 1:
        raise ConfigError("round budget must be positive")
    if fold is None:
        fold = make_folds(dataset.n_rows, inner_folds, seed)
    splits = _splits(dataset, np.asarray(fold), max_bins)
    assignments = trial_assignments(space, mode, n_trials, seed)
    args = (splits, metric, round_budget, patience, max_bins, seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda ia: _run_trial(ia[0], ia[1], *args), enumerate(assignments)))
    else:
        records = [_run_trial(i, a, *args) for i, a in enumerate(assignments)]
    maximize = higher_is_better(metric)
    best = 0
    for i, rec in enumerate(records):
        if _key(rec.mean_metric, maximize) > _key(records[best].mean_metric, maximize):
            best = i
    return SearchResult(metric, records, best, [(sp.train_index, sp.valid_index) for sp in splits])


@dataclass
class OuterFold:
    fold: int
    train_index: np.ndarray
    test_index: np.ndarray
    search: SearchResult
    best_params: dict
    best_round: int
    test_metric: float


@dataclass
class NestedResult:
    metric: str
    folds: list

    @property
    def test_metrics(self) -> list:
        return [f.test_metric for f in self.folds]

    @property
    def mean(self) -> float:
        return float(np.mean(self.test_metrics))

    @property
    def stdev(self) -> float:
        return float(np.std(self.test_metrics, ddof=1)) if len(self.folds) > 1 else 0.0


def nested_cv(
    dataset: Dataset,
    space: SearchSpace,
    mode: str = "random",
    n_trials: Optional[int] = 100,
    outer_folds: int = 5,
    inner_folds: int = 5,
    metric: str = "interval_accuracy",
    round_budget: int = DEFAULT_ROUND_BUDGET,
    seed: int = 0,
    patience: Optional[int] = None,
    threads: int = 1,
    max_bins: int = 256,
    fold: Optional[np.ndarray] = None,
) -> NestedResult:
    """Search on each outer complement, refit at the chosen round count, test on the held-out fold.

    ``fold`` overrides the outer assignment (e.g. the dataset's own fold column).
    """
    _check_metric(dataset, metric)
    if fold is None:
        fold = make_folds(dataset.n_rows, outer_folds, seed)
    fold = np.asarray(fold)
    results = []
    for k in range(int(fold.max()) + 1):
        test_idx = np.flatnonzero(fold == k)
        train_idx = np.flatnonzero(fold != k)
        if test_idx.size == 0:
            raise DataError(f"outer fold {k} is empty")
        train, test = dataset.subset(train_idx), dataset.subset(test_idx)
        search = run_search(
            train, space, mode, n_trials, inner_folds, metric, round_budget,
            seed=seed + 1 + k, patience=patience, threads=threads, max_bins=max_bins,
        )
        # inner indices are reported in terms of the full dataset
        search.splits = [(train_idx[a], train_idx[b]) for a, b in search.splits]
        best = search.best
        aft, boost = build_params(best.params, best.best_round, max_bins, seed)
        trainer = Trainer(train, aft, boost)
        for _ in range(best.best_round):
            trainer.step()
        margins = trainer.model().predict_margin(test.features)
        value = evaluate(metric, margins, test, aft, train=train)
        results.append(OuterFold(k, train_idx, test_idx, search, search.best_params, best.best_round, value))
    return NestedResult(metric, results)


# ---------------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trial_log_csv(result: SearchResult, outer_fold: Optional[int] = None) -> str:
    """One row per (trial, inner fold) with the fold's metric at the trial's chosen round."""
    names = list(TUNABLE)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = (["outer_fold"] if outer_fold is not None else []) + ["trial", "inner_fold"] + names
    w.writerow(header + ["best_round", "rounds_run", "metric", "value", "mean_value"])
    for rec in result.records:
        params = full_assignment(rec.params)
        for j, v in enumerate(rec.fold_metrics):
            row = ([outer_fold] if outer_fold is not None else []) + [rec.index, j]
            row += [_fmt(params[n]) for n in names]
            row += [rec.best_round, rec.rounds_run, result.metric, _fmt(v), _fmt(rec.mean_metric)]
            w.writerow(row)
    return buf.getvalue()


def best_config_doc(result: SearchResult, **extra) -> str:
    rec = result.best
    doc = {
        "metric": result.metric,
        "best_trial": rec.index,
        "best_round": rec.best_round,
        "mean_validation_metric": rec.mean_metric,
        "params": full_assignment(rec.params),
    }
    doc.update(extra)
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
