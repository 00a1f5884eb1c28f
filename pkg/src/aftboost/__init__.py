"""Gradient-boosted accelerated failure time (AFT) models for censored survival data."""
from __future__ import annotations

__version__ = "0.1.0"

from .data import Dataset, load_dataset, preprocess, read_csv, write_csv
from .datagen import GeneratorSpec, generate, mean_function
from .distributions import Distribution
from .errors import AftBoostError, ConfigError, DataError, InvalidLabelError, MetricError, ModelFormatError
from .gbt import BoostingParams, Model, Trainer, leaf_weight, predict_margin, predict_time, split_gain, train
from .loss import AftParams, Censoring, LabelRange, aft_grad_hess, aft_loss, limit_derivatives
from .metrics import (
    KaplanMeierCurve,
    SurvivalPair,
    aft_nloglik,
    harrell_c,
    interval_accuracy,
    kaplan_meier,
    uno_c,
)
from .tuning import SearchSpace, nested_cv, run_search, sample_trial

__all__ = [
    "AftBoostError", "AftParams", "BoostingParams", "Censoring", "ConfigError", "DataError",
    "Dataset", "Distribution", "GeneratorSpec", "InvalidLabelError", "KaplanMeierCurve",
    "LabelRange", "MetricError", "Model", "ModelFormatError", "SearchSpace", "SurvivalPair",
    "Trainer", "aft_grad_hess", "aft_loss", "aft_nloglik", "generate", "harrell_c",
    "interval_accuracy", "kaplan_meier", "leaf_weight", "limit_derivatives", "load_dataset",
    "mean_function", "nested_cv", "predict_margin", "predict_time", "preprocess", "read_csv",
    "run_search", "sample_trial", "split_gain", "train", "uno_c", "write_csv",
]
