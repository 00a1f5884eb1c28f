"""Second-order gradient boosting of regression trees on the AFT loss.

Each round evaluates per-row gradients and hessians at the current margins,
grows one tree greedily over quantile-binned features and adds its
(learning-rate scaled) leaf weights to the margins.  The ensemble output
``u(x) = base_score + sum_t leaf_t(x)`` is the predicted log survival time.

Split search is histogram based.  Ties between candidate splits resolve to
the lowest feature index, then the lowest threshold, then missing-values-left;
together with sequential row-order summation this makes training bit-for-bit
reproducible.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .data import Dataset
from .errors import ConfigError, DataError, ModelFormatError
from .loss import AftParams, grad_hess_arrays, mean_loss_arrays

FORMAT_NAME = "aftboost-model"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class BoostingParams:
    learning_rate: float = 0.1
    max_depth: int = 6
    min_child_weight: float = 1.0
    reg_alpha: float = 0.001
    reg_lambda: float = 1.0
    num_rounds: int = 100
    max_bins: int = 256
    seed: int = 0

    def __post_init__(self):
        checks = {
            "learning_rate": lambda v: v >= 0 and math.isfinite(v),
            "min_child_weight": lambda v: v >= 0,
            "reg_alpha": lambda v: v >= 0 and math.isfinite(v),
            "reg_lambda": lambda v: v >= 0 and math.isfinite(v),
        }
        for name, ok in checks.items():
            value = float(getattr(self, name))
            if math.isnan(value) or not ok(value):
                raise ConfigError(f"{name} out of range: {value!r}")
            object.__setattr__(self, name, value)
        for name, lo in (("max_depth", 1), ("num_rounds", 1), ("max_bins", 2), ("seed", 0)):
            value = getattr(self, name)
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            value = int(value)
            if value < lo:
                raise ConfigError(f"{name} must be >= {lo}, got {value}")
            object.__setattr__(self, name, value)
        if self.max_bins > 65535:
            raise ConfigError("max_bins must be <= 65535")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "BoostingParams":
        return cls(**doc)


# ---------------------------------------------------------------------------
# scalar split algebra


@njit(cache=True, nogil=True)
def _soft_threshold(g, alpha):
    if g > alpha:
        return g - alpha
    if g < -alpha:
        return g + alpha
    return 0.0


@njit(cache=True, nogil=True)
def _score(g, h, reg_lambda, reg_alpha):
    denom = h + reg_lambda
    if denom <= 0.0:
        return 0.0
    t = _soft_threshold(g, reg_alpha)
    return t * t / denom


@njit(cache=True, nogil=True)
def _leaf_weight(g, h, reg_lambda, reg_alpha, learning_rate):
    denom = h + reg_lambda
    if denom <= 0.0:
        return 0.0
    return -learning_rate * _soft_threshold(g, reg_alpha) / denom


def soft_threshold(g: float, alpha: float) -> float:
    return _soft_threshold(float(g), float(alpha))


def split_gain(G_L, H_L, G_R, H_R, reg_lambda, reg_alpha) -> float:
    """Reduction of the regularized second-order objective from splitting a node."""
    lam, alpha = float(reg_lambda), float(reg_alpha)
    return 0.5 * (
        _score(float(G_L), float(H_L), lam, alpha)
        + _score(float(G_R), float(H_R), lam, alpha)
        - _score(float(G_L) + float(G_R), float(H_L) + float(H_R), lam, alpha)
    )


def leaf_weight(G, H, reg_lambda, reg_alpha, learning_rate) -> float:
    """Shrunken Newton step ``-lr * soft_threshold(G) / (H + lambda)``."""
    return _leaf_weight(float(G), float(H), float(reg_lambda), float(reg_alpha), float(learning_rate))


# ---------------------------------------------------------------------------
# quantization


@dataclass
class FeatureBins:
    """Per-feature cut points; bin ``b`` holds values in ``[cut[b-1], cut[b])``."""

    cuts: list
    missing_bin: int

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int = 256) -> "FeatureBins":
        cuts = []
        for j in range(X.shape[1]):
            col = X[:, j]
            vals = col[np.isfinite(col)]
            uniq = np.unique(vals)
            if uniq.shape[0] <= 1:
                cuts.append(np.empty(0))
                continue
            if uniq.shape[0] <= max_bins:
                lo, hi = uniq[:-1], uniq[1:]
                mid = lo + 0.5 * (hi - lo)
                # adjacent floats: the midpoint may round onto the lower value
                c = np.where(mid > lo, mid, hi)
            else:
                levels = np.arange(1, max_bins) / max_bins
                c = np.unique(np.quantile(vals, levels))
                c = c[c > uniq[0]]
            cuts.append(np.ascontiguousarray(c, dtype=np.float64))
        return cls(cuts, int(max_bins))

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([c.shape[0] + 1 for c in self.cuts], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != len(self.cuts):
            raise DataError(f"expected {len(self.cuts)} features, got {X.shape[1]}")
        out = np.empty(X.shape, dtype=np.int32)
        for j, c in enumerate(self.cuts):
            col = X[:, j]
            b = np.searchsorted(c, col, side="right")
            b[~np.isfinite(col)] = self.missing_bin
            out[:, j] = b
        return out


# ---------------------------------------------------------------------------
# tree growth


@njit(cache=True, nogil=True)
def _grow_tree(
    binned, n_bins, missing_bin, grad, hess,
    max_depth, min_child_weight, reg_lambda, reg_alpha, learning_rate,
    feature, split_bin, left, right, default_left, value, cover, leaf_of_row,
):
    n_rows, n_feat = binned.shape
    capacity = feature.shape[0]
    rows = np.arange(n_rows)
    buf = np.empty(n_rows, dtype=np.int64)
    hg = np.zeros(missing_bin + 1)
    hh = np.zeros(missing_bin + 1)
    hc = np.zeros(missing_bin + 1, dtype=np.int64)
    touched = np.empty(n_rows, dtype=np.int64)

    st_node = np.empty(capacity, dtype=np.int64)
    st_start = np.empty(capacity, dtype=np.int64)
    st_end = np.empty(capacity, dtype=np.int64)
    st_depth = np.empty(capacity, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_rows
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]

        G = 0.0
        H = 0.0
        for k in range(start, end):
            r = rows[k]
            G += grad[r]
            H += hess[r]
        cover[node] = H
        n_node = end - start

        best_gain = 0.0
        best_f = -1
        best_k = -1
        best_dl = True
        if depth < max_depth and n_node >= 2 and n_nodes + 2 <= capacity:
            parent_score = _score(G, H, reg_lambda, reg_alpha)
            for f in range(n_feat):
                nb = n_bins[f]
                if nb < 2:
                    continue
                sparse = n_node * 4 < nb
                nt = 0
                gm = 0.0
                hm = 0.0
                cm = 0
                for k in range(start, end):
                    r = rows[k]
                    b = binned[r, f]
                    if b == missing_bin:
                        gm += grad[r]
                        hm += hess[r]
                        cm += 1
                    else:
                        if sparse and hc[b] == 0:
                            touched[nt] = b
                            nt += 1
                        hg[b] += grad[r]
                        hh[b] += hess[r]
                        hc[b] += 1
                n_present = n_node - cm
                if sparse:
                    touched[:nt].sort()
                    n_cand = nt - 1
                else:
                    n_cand = nb - 1
                gl = 0.0
                hl = 0.0
                cl = 0
                for i in range(n_cand):
                    b = touched[i] if sparse else i
                    if hc[b] == 0:
                        # same partition as the previous candidate
                        continue
                    gl += hg[b]
                    hl += hh[b]
                    cl += hc[b]
                    if cl == n_present:
                        continue
                    # missing rows to the left first, so ties default left;
                    # without missing rows both directions give the same split
                    for side in range(2 if cm > 0 else 1):
                        if side == 0:
                            gL = gl + gm
                            hL = hl + hm
                        else:
                            gL = gl
                            hL = hl
                        gR = G - gL
                        hR = H - hL
                        if hL < min_child_weight or hR < min_child_weight:
                            continue
                        gain = 0.5 * (
                            _score(gL, hL, reg_lambda, reg_alpha)
                            + _score(gR, hR, reg_lambda, reg_alpha)
                            - parent_score
                        )
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            best_k = b + 1
                            best_dl = side == 0
                # reset the histogram for the next feature
                if sparse:
                    for i in range(nt):
                        b = touched[i]
                        hg[b] = 0.0
                        hh[b] = 0.0
                        hc[b] = 0
                else:
                    for b in range(nb):
                        hg[b] = 0.0
                        hh[b] = 0.0
                        hc[b] = 0

        if best_f < 0:
            feature[node] = -1
            split_bin[node] = -1
            left[node] = -1
            right[node] = -1
            default_left[node] = True
            value[node] = _leaf_weight(G, H, reg_lambda, reg_alpha, learning_rate)
            for k in range(start, end):
                leaf_of_row[rows[k]] = node
            continue

        # stable partition of rows[start:end]
        nl = 0
        for k in range(start, end):
            r = rows[k]
            b = binned[r, best_f]
            go_left = best_dl if b == missing_bin else b < best_k
            if go_left:
                rows[start + nl] = r
                nl += 1
            else:
                buf[k - start - nl] = r
        for k in range(end - start - nl):
            rows[start + nl + k] = buf[k]

        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        split_bin[node] = best_k
        left[node] = lchild
        right[node] = rchild
        default_left[node] = best_dl
        value[node] = 0.0
        # right pushed first so the left subtree is expanded first
        st_node[sp] = rchild
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lchild
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1
    return n_nodes


@njit(cache=True, nogil=True)
def _add_tree(X, feature, threshold, left, right, default_left, value, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            x = X[i, feature[node]]
            if not math.isfinite(x):
                node = left[node] if default_left[node] else right[node]
            elif x < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf holding ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    def __post_init__(self):
        self.feature = np.ascontiguousarray(self.feature, dtype=np.int64)
        self.threshold = np.ascontiguousarray(self.threshold, dtype=np.float64)
        self.left = np.ascontiguousarray(self.left, dtype=np.int64)
        self.right = np.ascontiguousarray(self.right, dtype=np.int64)
        self.default_left = np.ascontiguousarray(self.default_left, dtype=np.bool_)
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.cover = np.ascontiguousarray(self.cover, dtype=np.float64)
        n = self.feature.shape[0]
        if n == 0 or any(a.shape[0] != n for a in (
            self.threshold, self.left, self.right, self.default_left, self.value, self.cover
        )):
            raise ModelFormatError("tree arrays must be non-empty and of equal length")
        internal = self.feature >= 0
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if kids.size and (kids.min() <= 0 or kids.max() >= n):
            raise ModelFormatError("tree child index out of range")

    @classmethod
    def leaf(cls, weight: float) -> "Tree":
        return cls([-1], [math.nan], [-1], [-1], [True], [weight], [0.0])

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack.append((self.left[node], d + 1))
                stack.append((self.right[node], d + 1))
        return best

    def add_to(self, X: np.ndarray, out: np.ndarray) -> None:
        _add_tree(X, self.feature, self.threshold, self.left, self.right,
                  self.default_left, self.value, out)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if math.isnan(t) else t for t in self.threshold.tolist()],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "default_left": self.default_left.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(
            doc["feature"],
            [math.nan if t is None else t for t in doc["threshold"]],
            doc["left"],
            doc["right"],
            doc["default_left"],
            doc["value"],
            doc["cover"],
        )


# ---------------------------------------------------------------------------
# model


@dataclass
class Model:
    base_score: float
    trees: list
    aft: AftParams
    boost: BoostingParams
    n_features: int
    feature_names: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    def _matrix(self, features) -> tuple[np.ndarray, bool]:
        X = np.asarray(features, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"model expects {self.n_features} features, got shape {np.shape(features)}")
        return np.ascontiguousarray(X), single

    def predict_margin(self, features):
        """Predicted log survival time; a 1-D input returns a float."""
        X, single = self._matrix(features)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            tree.add_to(X, out)
        return float(out[0]) if single else out

    def predict_time(self, features):
        margin = self.predict_margin(features)
        return math.exp(margin) if isinstance(margin, float) else np.exp(margin)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "format_version": self.format_version,
            "objective": "survival:aft",
            "aft_loss_distribution": self.aft.dist.value,
            "aft_loss_distribution_scale": self.aft.sigma,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "params": {"aft": self.aft.to_dict(), "boosting": self.boost.to_dict()},
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "Model":
        if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
            raise ModelFormatError("not an aftboost model document")
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format_version {version!r}; expected {FORMAT_VERSION}")
        try:
            params = doc["params"]
            aft = AftParams.from_dict(params["aft"])
            boost = BoostingParams.from_dict(params["boosting"])
            model = cls(
                base_score=float(doc["base_score"]),
                trees=[Tree.from_dict(t) for t in doc["trees"]],
                aft=aft,
                boost=boost,
                n_features=int(doc["n_features"]),
                feature_names=list(doc.get("feature_names", [])),
                format_version=version,
            )
        except ModelFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed model document: {exc}") from exc
        if not math.isfinite(model.base_score):
            raise ModelFormatError("base_score must be finite")
        for tree in model.trees:
            used = tree.feature[tree.feature >= 0]
            if used.size and used.max() >= model.n_features:
                raise ModelFormatError("tree references a feature beyond n_features")
        return model

    @classmethod
    def from_json(cls, text: str) -> "Model":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model document is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def predict_margin(model: Model, features):
    return model.predict_margin(features)


def predict_time(model: Model, features):
    return model.predict_time(features)


# ---------------------------------------------------------------------------
# training


def label_anchors(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Representative finite time per row; NaN where the row has none."""
    anchor = np.where(
        lower == upper,
        lower,
        np.where(np.isinf(upper), lower, np.where(lower == 0, upper / 2.0, 0.5 * (lower + upper))),
    )
    ok = np.isfinite(anchor) & (anchor > 0)
    return np.where(ok, anchor, np.nan)


def initial_margin(lower: np.ndarray, upper: np.ndarray) -> float:
    anchors = label_anchors(lower, upper)
    anchors = anchors[~np.isnan(anchors)]
    if anchors.size == 0:
        raise DataError("no row has a finite positive label anchor; cannot initialize the margin")
    # averaging in log space keeps round-0 gradients centered even when the
    # anchors span many orders of magnitude
    return float(np.mean(np.log(anchors)))


class Trainer:
    """Boosting state that advances one round per :meth:`step`.

    ``bins``/``binned`` may be passed in to share one quantization across runs
    on the same rows.
    """

    def __init__(
        self,
        dataset: Dataset,
        aft: AftParams,
        boost: BoostingParams,
        bins: Optional[FeatureBins] = None,
        binned: Optional[np.ndarray] = None,
    ):
        if dataset.n_rows == 0:
            raise DataError("cannot train on an empty dataset")
        self.dataset = dataset
        self.aft = aft
        self.boost = boost
        self.bins = bins if bins is not None else FeatureBins.fit(dataset.features, boost.max_bins)
        self.binned = binned if binned is not None else self.bins.transform(dataset.features)
        self._n_bins = self.bins.n_bins
        self.base_score = initial_margin(dataset.lower, dataset.upper)
        self.margins = np.full(dataset.n_rows, self.base_score)
        self.trees: list[Tree] = []
        n = dataset.n_rows
        capacity = 2 * n - 1
        if boost.max_depth < 30:
            capacity = min(capacity, 2 ** (boost.max_depth + 1) - 1)
        self._feature = np.empty(capacity, dtype=np.int64)
        self._split_bin = np.empty(capacity, dtype=np.int64)
        self._left = np.empty(capacity, dtype=np.int64)
        self._right = np.empty(capacity, dtype=np.int64)
        self._default_left = np.empty(capacity, dtype=np.bool_)
        self._value = np.empty(capacity, dtype=np.float64)
        self._cover = np.empty(capacity, dtype=np.float64)
        self.leaf_of_row = np.empty(n, dtype=np.int64)

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def step(self) -> Tree:
        ds, b = self.dataset, self.boost
        grad, hess = grad_hess_arrays(ds.lower, ds.upper, self.margins, self.aft)
        n_nodes = _grow_tree(
            self.binned, self._n_bins, self.bins.missing_bin, grad, hess,
            b.max_depth, b.min_child_weight, b.reg_lambda, b.reg_alpha, b.learning_rate,
            self._feature, self._split_bin, self._left, self._right,
            self._default_left, self._value, self._cover, self.leaf_of_row,
        )
        feature = self._feature[:n_nodes].copy()
        threshold = np.full(n_nodes, math.nan)
        for node in np.flatnonzero(feature >= 0):
            threshold[node] = self.bins.cuts[feature[node]][self._split_bin[node] - 1]
        tree = Tree(
            feature, threshold, self._left[:n_nodes].copy(), self._right[:n_nodes].copy(),
            self._default_left[:n_nodes].copy(), self._value[:n_nodes].copy(),
            self._cover[:n_nodes].copy(),
        )
        self.margins += tree.value[self.leaf_of_row]
        self.trees.append(tree)
        return tree

    def train_loss(self) -> float:
        return mean_loss_arrays(self.dataset.lower, self.dataset.upper, self.margins, self.aft)

    def model(self, n_rounds: Optional[int] = None) -> Model:
        trees = self.trees if n_rounds is None else self.trees[:n_rounds]
        return Model(
            base_score=self.base_score,
            trees=list(trees),
            aft=self.aft,
            boost=self.boost,
            n_features=self.dataset.n_features,
            feature_names=list(self.dataset.column_names),
        )


def train(
    dataset: Dataset,
    aft: AftParams,
    boost: BoostingParams,
    eval_hook: Optional[Callable[[int, Trainer], object]] = None,
) -> Model:
    """Fit ``boost.num_rounds`` trees.

    ``eval_hook(round, trainer)`` runs after every round (``round`` counts from 1);
    a truthy return value stops training early.
    """
    trainer = Trainer(dataset, aft, boost)
    for r in range(1, boost.num_rounds + 1):
        trainer.step()
        if eval_hook is not None and eval_hook(r, trainer):
            break
    return trainer.model()
