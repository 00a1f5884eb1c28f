"""Dataset container and CSV ingestion for ranged survival labels."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InvalidLabelError
from .loss import Censoring, LabelRange, censoring_of

LOWER_COLUMN = "label_lower_bound"
UPPER_COLUMN = "label_upper_bound"
FOLD_COLUMN = "fold"

_MISSING_TOKENS = {"", "na", "nan", "null"}


def classify_censoring(label: LabelRange) -> Censoring:
    return censoring_of(label.lower, label.upper)


def validate_bounds(lower: np.ndarray, upper: np.ndarray) -> None:
    """Raise :class:`InvalidLabelError` naming the first offending row (1-based)."""
    bad = ~np.isfinite(lower) | (lower < 0) | np.isnan(upper) | (upper < lower)
    bad |= (lower == 0) & (upper == 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InvalidLabelError(f"row {i + 1}: invalid label range [{lower[i]}, {upper[i]}]")


@dataclass
class Dataset:
    """Dense feature matrix (NaN marks a missing value) plus per-row label bounds."""

    features: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    column_names: list = None
    fold_assignment: Optional[np.ndarray] = None
    # per-row side columns that are never used as features (e.g. log-space bounds)
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if self.features.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {self.features.shape}")
        self.lower = np.ascontiguousarray(np.asarray(self.lower, dtype=np.float64).ravel())
        self.upper = np.ascontiguousarray(np.asarray(self.upper, dtype=np.float64).ravel())
        n = self.features.shape[0]
        if self.lower.shape[0] != n or self.upper.shape[0] != n:
            raise DataError(
                f"{n} feature rows but {self.lower.shape[0]} lower / {self.upper.shape[0]} upper bounds"
            )
        validate_bounds(self.lower, self.upper)
        if self.column_names is None:
            self.column_names = [f"x{j + 1}" for j in range(self.features.shape[1])]
        self.column_names = list(self.column_names)
        if len(self.column_names) != self.features.shape[1]:
            raise DataError("column_names length does not match the feature width")
        if self.fold_assignment is not None:
            self.fold_assignment = np.asarray(self.fold_assignment, dtype=np.int64).ravel()
            if self.fold_assignment.shape[0] != n:
                raise DataError("fold_assignment length does not match the row count")

    @classmethod
    def from_labels(cls, features, labels: Sequence[LabelRange], **kwargs) -> "Dataset":
        lower = np.array([lab.lower for lab in labels], dtype=np.float64)
        upper = np.array([lab.upper for lab in labels], dtype=np.float64)
        return cls(features, lower, upper, **kwargs)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def labels(self) -> list:
        return [LabelRange(lo, hi) for lo, hi in zip(self.lower.tolist(), self.upper.tolist())]

    def censoring(self) -> list:
        return [censoring_of(lo, hi) for lo, hi in zip(self.lower.tolist(), self.upper.tolist())]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            self.features[index],
            self.lower[index],
            self.upper[index],
            column_names=self.column_names,
            fold_assignment=None if self.fold_assignment is None else self.fold_assignment[index],
            aux={k: v[index] for k, v in self.aux.items()},
        )

    def replicate(self, times: int) -> "Dataset":
        """Stack ``times`` copies; copies keep the originals' fold ids."""
        idx = np.tile(np.arange(self.n_rows), times)
        return self.subset(idx)


@dataclass
class PreprocessReport:
    dropped_missing: list = field(default_factory=list)
    dropped_zero_variance: list = field(default_factory=list)
    exponentiated_labels: bool = False

    @property
    def dropped(self) -> list:
        return self.dropped_missing + self.dropped_zero_variance

    def lines(self) -> list:
        out = [f"dropped column {name!r}: has missing values" for name in self.dropped_missing]
        out += [f"dropped column {name!r}: zero variance" for name in self.dropped_zero_variance]
        if self.exponentiated_labels:
            out.append("label bounds mapped through exp()")
        return out


def preprocess(
    dataset: Dataset,
    drop_missing_columns: bool = True,
    drop_zero_variance: bool = True,
    exponentiate_labels: bool = False,
) -> tuple[Dataset, PreprocessReport]:
    report = PreprocessReport()
    keep = []
    X = dataset.features
    for j, name in enumerate(dataset.column_names):
        col = X[:, j]
        present = col[np.isfinite(col)]
        if drop_missing_columns and present.shape[0] < col.shape[0]:
            report.dropped_missing.append(name)
        elif drop_zero_variance and (present.shape[0] == 0 or present.min() == present.max()):
            report.dropped_zero_variance.append(name)
        else:
            keep.append(j)
    lower, upper = dataset.lower, dataset.upper
    if exponentiate_labels:
        lower, upper = np.exp(lower), np.exp(upper)
        report.exponentiated_labels = True
    out = Dataset(
        X[:, keep],
        lower,
        upper,
        column_names=[dataset.column_names[j] for j in keep],
        fold_assignment=dataset.fold_assignment,
        aux=dict(dataset.aux),
    )
    return out, report


def _parse_bound(token: str, row: int, column: str, log_space: bool, is_upper: bool) -> float:
    text = token.strip()
    if text == "":
        raise DataError(f"missing value in label column {column!r}", row=row)
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"malformed number {token!r} in column {column!r}", row=row) from None
    if math.isnan(value):
        raise DataError(f"NaN in label column {column!r}", row=row)
    if log_space:
        value = math.exp(value)
    if value < 0:
        raise DataError(f"negative label bound {value} in column {column!r}", row=row)
    if not is_upper and math.isinf(value):
        raise DataError(f"lower bound must be finite in column {column!r}", row=row)
    return value


def _parse_feature(token: str, row: int, column: str) -> float:
    text = token.strip()
    if text.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"malformed number {token!r} in column {column!r}", row=row) from None


def read_csv(
    path,
    lower_column: str = LOWER_COLUMN,
    upper_column: str = UPPER_COLUMN,
    feature_columns: Optional[Sequence[str]] = None,
    fold_column: Optional[str] = None,
    labels_in_log_space: bool = False,
    require_labels: bool = True,
) -> Dataset:
    """Read a header-ful CSV into a :class:`Dataset`.

    Row numbers in error messages are file line numbers (the header is line 1).
    With ``require_labels=False`` absent label columns yield placeholder ``[1, 1]``
    labels, which lets prediction inputs reuse the same reader.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        col = {name: j for j, name in enumerate(header)}
        if len(col) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        has_labels = lower_column in col and upper_column in col
        if require_labels and not has_labels:
            missing = [c for c in (lower_column, upper_column) if c not in col]
            raise DataError(f"{path}: missing label column(s) {missing}")
        if fold_column is not None and fold_column not in col:
            raise DataError(f"{path}: missing fold column {fold_column!r}")
        reserved = {lower_column, upper_column}
        if fold_column is not None:
            reserved.add(fold_column)
        if feature_columns is None:
            feature_columns = [h for h in header if h not in reserved]
        else:
            absent = [c for c in feature_columns if c not in col]
            if absent:
                raise DataError(f"{path}: missing feature column(s) {absent}")
        feat_idx = [col[c] for c in feature_columns]

        rows, lowers, uppers, folds = [], [], [], []
        for line_no, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"expected {len(header)} cells, found {len(record)}", row=line_no)
            if has_labels:
                lo = _parse_bound(record[col[lower_column]], line_no, lower_column, labels_in_log_space, False)
                hi = _parse_bound(record[col[upper_column]], line_no, upper_column, labels_in_log_space, True)
                if lo > hi:
                    raise DataError(f"lower bound {lo} exceeds upper bound {hi}", row=line_no)
                if lo == hi == 0.0:
                    raise DataError("uncensored label with survival time 0", row=line_no)
            else:
                lo = hi = 1.0
            lowers.append(lo)
            uppers.append(hi)
            rows.append([_parse_feature(record[j], line_no, header[j]) for j in feat_idx])
            if fold_column is not None:
                try:
                    folds.append(int(record[col[fold_column]]))
                except ValueError:
                    raise DataError(f"malformed fold id {record[col[fold_column]]!r}", row=line_no) from None

    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    return Dataset(
        features,
        np.array(lowers, dtype=np.float64),
        np.array(uppers, dtype=np.float64),
        column_names=list(feature_columns),
        fold_assignment=np.array(folds, dtype=np.int64) if fold_column is not None else None,
    )


def load_dataset(path, preprocessing: Optional[dict] = None, **read_kwargs) -> tuple[Dataset, PreprocessReport]:
    """``read_csv`` followed by :func:`preprocess` with the given options."""
    dataset = read_csv(path, **read_kwargs)
    if preprocessing is None:
        return dataset, PreprocessReport()
    return preprocess(dataset, **preprocessing)


def format_real(value: float) -> str:
    """Shortest round-trip text for a float; NaN is written as an empty cell."""
    if math.isnan(value):
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def write_csv(dataset: Dataset, path, fold_column: Optional[str] = None) -> None:
    header = [LOWER_COLUMN, UPPER_COLUMN] + list(dataset.column_names)
    with_folds = fold_column is not None and dataset.fold_assignment is not None
    if with_folds:
        header.append(fold_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n_rows):
            row = [format_real(dataset.lower[i]), format_real(dataset.upper[i])]
            row += [format_real(v) for v in dataset.features[i].tolist()]
            if with_folds:
                row.append(str(int(dataset.fold_assignment[i])))
            writer.writerow(row)
