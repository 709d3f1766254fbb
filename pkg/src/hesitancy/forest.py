"""CART decision trees and a bootstrap random forest with vote-fraction probabilities.

Trees are grown greedily on Gini impurity with midpoint thresholds between
consecutive distinct feature values. Each tree votes its leaf's majority
class; the forest probability for a class is its vote count divided by the
number of trees. Training is deterministic: per-tree RNG streams derive from
(seed, tree index), so identical seed and data give an identical forest.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DataError, ParameterError

_UNLIMITED_DEPTH = 1 << 20


@dataclass
class ForestParams:
    n_trees: int = 500
    max_depth: int | None = None
    min_leaf: int = 1
    n_features_per_split: int | None = None  # default ceil(sqrt(d))
    seed: int = 0

    def validate(self):
        if self.n_trees < 1:
            raise ParameterError(f"n_trees must be positive, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError(f"max_depth must be positive or None, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ParameterError(f"min_leaf must be positive, got {self.min_leaf}")
        if self.n_features_per_split is not None and self.n_features_per_split < 1:
            raise ParameterError("n_features_per_split must be positive")

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "n_features_per_split": self.n_features_per_split, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        return cls(**{k: d[k] for k in ("n_trees", "max_depth", "min_leaf", "n_features_per_split", "seed") if k in d})


@dataclass
class Tree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray     # int32 (n_nodes,)
    threshold: np.ndarray   # float64
    left: np.ndarray        # int32
    right: np.ndarray       # int32
    counts: np.ndarray      # float64 (n_nodes, n_classes) bootstrap class counts
    leaf_class: np.ndarray  # int32 majority class at leaves, -1 internal
    cover: np.ndarray       # float64 background sample count per node

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def max_path_length(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        deepest = 0
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
            else:
                deepest = max(deepest, int(depth[i]))
        return deepest


@dataclass
class Forest:
    trees: list[Tree]
    classes: list
    n_features: int
    params: ForestParams
    feature_names: list[str] | None = None
    _flat: dict = field(default_factory=dict, repr=False)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def flat_arrays(self):
        """Concatenated per-tree arrays with child indices rebased globally."""
        if not self._flat:
            offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
            for t, tree in enumerate(self.trees):
                offsets[t + 1] = offsets[t] + tree.n_nodes
            total = int(offsets[-1])
            feat = np.empty(total, dtype=np.int32)
            thr = np.empty(total, dtype=np.float64)
            left = np.empty(total, dtype=np.int64)
            right = np.empty(total, dtype=np.int64)
            leaf_class = np.empty(total, dtype=np.int32)
            cover = np.empty(total, dtype=np.float64)
            for t, tree in enumerate(self.trees):
                o = offsets[t]
                feat[o:o + tree.n_nodes] = tree.feature
                thr[o:o + tree.n_nodes] = tree.threshold
                left[o:o + tree.n_nodes] = np.where(tree.left >= 0, tree.left + o, -1)
                right[o:o + tree.n_nodes] = np.where(tree.right >= 0, tree.right + o, -1)
                leaf_class[o:o + tree.n_nodes] = tree.leaf_class
                cover[o:o + tree.n_nodes] = tree.cover
            self._flat = {"offsets": offsets, "feature": feat, "threshold": thr,
                          "left": left, "right": right, "leaf_class": leaf_class, "cover": cover}
        return self._flat


@numba.njit(cache=True)
def _best_split(Xt, y, idx, feats, n_classes, min_leaf):
    """Exhaustive Gini scan over midpoint thresholds of the candidate features.

    Xt is the transposed (d, n) training matrix. Returns (feature, threshold,
    weighted impurity); feature is -1 when no valid split exists.
    """
    m = idx.size
    best_imp = np.inf
    best_f = -1
    best_thr = 0.0
    values = np.empty(m, dtype=np.float64)
    total = np.zeros(n_classes, dtype=np.float64)
    left = np.zeros(n_classes, dtype=np.float64)
    for t in range(m):
        total[y[idx[t]]] += 1.0
    sumsq_total = 0.0
    for c in range(n_classes):
        sumsq_total += total[c] * total[c]
    for fi in range(feats.size):
        f = feats[fi]
        for t in range(m):
            values[t] = Xt[f, idx[t]]
        order = np.argsort(values, kind="mergesort")
        for c in range(n_classes):
            left[c] = 0.0
        sumsq_left = 0.0
        sumsq_right = sumsq_total
        nl = 0.0
        for t in range(m - 1):
            row = idx[order[t]]
            c = y[row]
            sumsq_left += 2.0 * left[c] + 1.0
            right_c = total[c] - left[c]
            sumsq_right -= 2.0 * right_c - 1.0
            left[c] += 1.0
            nl += 1.0
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            lo = values[order[t]]
            hi = values[order[t + 1]]
            if lo == hi:
                continue
            imp = (nl - sumsq_left / nl + nr - sumsq_right / nr) / m
            if imp < best_imp:
                best_imp = imp
                best_f = f
                best_thr = lo + (hi - lo) / 2.0
    return best_f, best_thr, best_imp


@numba.njit(cache=True, parallel=True)
def _vote_counts(feature, threshold, left, right, leaf_class, offsets, X, n_classes):
    # rows are independent; each writes only its own vote row
    n = X.shape[0]
    n_trees = offsets.size - 1
    votes = np.zeros((n, n_classes), dtype=np.float64)
    for i in numba.prange(n):
        for t in range(n_trees):
            node = offsets[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            votes[i, leaf_class[node]] += 1.0
    return votes


@numba.njit(cache=True)
def _route_cover(feature, threshold, left, right, X):
    cover = np.zeros(feature.size, dtype=np.float64)
    for i in range(X.shape[0]):
        node = 0
        cover[node] += 1.0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
            cover[node] += 1.0
    return cover


def _grow_tree(Xt, y, n_classes, rng, max_depth, min_leaf, mtry):
    n = y.size
    d = Xt.shape[0]
    feature, threshold, left, right = [], [], [], []
    counts_rows, leaf_classes = [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts_rows.append(None)
        leaf_classes.append(-1)
        return len(feature) - 1

    root = new_node()
    bootstrap = rng.integers(0, n, size=n)
    stack = [(root, bootstrap, 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        counts_rows[node] = counts
        majority = int(np.argmax(counts))
        pure = counts[majority] == idx.size
        if pure or depth >= max_depth or idx.size < 2 * min_leaf:
            leaf_classes[node] = majority
            continue
        feats = np.sort(rng.choice(d, size=mtry, replace=False)).astype(np.int64)
        f, thr, _ = _best_split(Xt, y, idx.astype(np.int64), feats, n_classes, min_leaf)
        if f < 0:
            leaf_classes[node] = majority
            continue
        mask = Xt[f, idx] <= thr
        lid, rid = new_node(), new_node()
        feature[node] = f
        threshold[node] = thr
        left[node] = lid
        right[node] = rid
        # push right first so the left child is processed next (stable pre-order ids)
        stack.append((rid, idx[~mask], depth + 1))
        stack.append((lid, idx[mask], depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        counts=np.vstack(counts_rows),
        leaf_class=np.asarray(leaf_classes, dtype=np.int32),
        cover=np.zeros(len(feature), dtype=np.float64),
    )


def train_forest(X, y, params: ForestParams, feature_names: list[str] | None = None) -> Forest:
    """Grow ``params.n_trees`` CART trees on bootstrap samples of (X, y).

    After growth the full training set is routed through every tree to record
    per-node background covers; they drive both the Shapley attribution and
    its base values.
    """
    params.validate()
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if np.isnan(X).any():
        raise DataError("training matrix contains NaN; impute first")
    y = np.asarray(y)
    if X.shape[0] != y.size:
        raise DataError(f"X has {X.shape[0]} rows but y has {y.size} labels")
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise DataError(f"training labels are a single class ({classes}); nothing to separate")
    code = {c: i for i, c in enumerate(classes)}
    y_codes = np.asarray([code[v] for v in y.tolist()], dtype=np.int64)

    d = X.shape[1]
    mtry = params.n_features_per_split or int(math.ceil(math.sqrt(d)))
    mtry = min(mtry, d)
    max_depth = params.max_depth if params.max_depth is not None else _UNLIMITED_DEPTH
    Xt = np.ascontiguousarray(X.T)

    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng([params.seed, t])
        tree = _grow_tree(Xt, y_codes, len(classes), rng, max_depth, params.min_leaf, mtry)
        tree.cover = _route_cover(tree.feature, tree.threshold,
                                  tree.left.astype(np.int64), tree.right.astype(np.int64), X)
        trees.append(tree)
    return Forest(trees=trees, classes=classes, n_features=d, params=params,
                  feature_names=list(feature_names) if feature_names else None)


def predict_proba(forest: Forest, X) -> np.ndarray:
    """Vote-fraction class probabilities, one row per input row."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != forest.n_features:
        raise ParameterError(f"expected {forest.n_features} features, got {X.shape[1]}")
    flat = forest.flat_arrays()
    votes = _vote_counts(flat["feature"], flat["threshold"], flat["left"], flat["right"],
                         flat["leaf_class"], flat["offsets"], X, forest.n_classes)
    proba = votes / len(forest.trees)
    return proba[0] if single else proba


def predict(forest: Forest, X) -> list:
    proba = np.atleast_2d(predict_proba(forest, X))
    return [forest.classes[i] for i in np.argmax(proba, axis=1)]


def confusion_matrix(y_true, y_pred, classes: list) -> np.ndarray:
    code = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.float64)
    for t, p in zip(y_true, y_pred):
        m[code[t], code[p]] += 1.0
    return m


def normalize_confusion(m: np.ndarray) -> np.ndarray:
    """Row-normalize so each nonempty true-class row sums to 1 (diagonal = recall)."""
    sums = m.sum(axis=1, keepdims=True)
    return np.divide(m, sums, out=np.zeros_like(m), where=sums > 0)


def macro_f1(y_true, y_pred, classes: list) -> float:
    """Unweighted mean over classes of 2PR/(P+R), with 0 for empty denominators."""
    m = confusion_matrix(y_true, y_pred, classes)
    scores = []
    for i in range(len(classes)):
        tp = m[i, i]
        fp = m[:, i].sum() - tp
        fn = m[i, :].sum() - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        scores.append(f1)
    return float(np.mean(scores))


@dataclass
class CvReport:
    fold_f1: list[float]
    mean_f1: float
    std_f1: float
    confusion: np.ndarray        # pooled, row-normalized
    classes: list

    def to_rows(self) -> list[tuple]:
        rows = [("fold", i + 1, f) for i, f in enumerate(self.fold_f1)]
        rows.append(("mean", "", self.mean_f1))
        rows.append(("std", "", self.std_f1))
        return rows


def stratified_folds(y, n_folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified fold assignment; returns test-index arrays."""
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    rng = np.random.default_rng([seed, 7919])
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    cursor = 0
    for c in classes:
        members = np.flatnonzero(np.asarray([v == c for v in y.tolist()]))
        if members.size < n_folds:
            warnings.warn(f"class {c!r} has {members.size} members, fewer than {n_folds} folds; "
                          "stratification degrades")
        members = members[rng.permutation(members.size)]
        for i, row in enumerate(members):
            folds[(cursor + i) % n_folds].append(int(row))
        cursor += members.size
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def cross_validate(X, y, params: ForestParams, n_folds: int = 5) -> CvReport:
    """Stratified k-fold CV; per-fold macro F1 plus a pooled confusion matrix."""
    if n_folds < 2:
        raise ParameterError(f"n_folds must be >= 2, got {n_folds}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    folds = stratified_folds(y, n_folds, params.seed)
    pooled = np.zeros((len(classes), len(classes)))
    fold_f1 = []
    for fold_id, test_idx in enumerate(folds):
        train_mask = np.ones(y.size, dtype=bool)
        train_mask[test_idx] = False
        fold_params = ForestParams(**{**params.to_dict(), "seed": _fold_seed(params.seed, fold_id)})
        model = train_forest(X[train_mask], y[train_mask], fold_params)
        y_pred = predict(model, X[test_idx])
        y_test = y[test_idx].tolist()
        fold_f1.append(macro_f1(y_test, y_pred, classes))
        pooled += confusion_matrix(y_test, y_pred, classes)
    mean = float(np.mean(fold_f1))
    std = float(np.std(fold_f1, ddof=1)) if len(fold_f1) > 1 else 0.0
    return CvReport(fold_f1=fold_f1, mean_f1=mean, std_f1=std,
                    confusion=normalize_confusion(pooled), classes=classes)


def _fold_seed(seed: int, fold_id: int) -> int:
    return int(np.random.SeedSequence([seed, 104729, fold_id]).generate_state(1)[0])


def forest_to_dict(forest: Forest) -> dict:
    return {
        "version": 1,
        "params": forest.params.to_dict(),
        "classes": forest.classes,
        "n_features": forest.n_features,
        "feature_names": forest.feature_names,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.tolist(),
                "leaf_class": t.leaf_class.tolist(),
                "cover": t.cover.tolist(),
            }
            for t in forest.trees
        ],
    }


def forest_from_dict(d: dict) -> Forest:
    if d.get("version") != 1:
        raise DataError(f"unsupported forest document version {d.get('version')!r}")
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int32),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int32),
            right=np.asarray(t["right"], dtype=np.int32),
            counts=np.asarray(t["counts"], dtype=np.float64),
            leaf_class=np.asarray(t["leaf_class"], dtype=np.int32),
            cover=np.asarray(t["cover"], dtype=np.float64),
        )
        for t in d["trees"]
    ]
    return Forest(trees=trees, classes=list(d["classes"]), n_features=int(d["n_features"]),
                  params=ForestParams.from_dict(d["params"]), feature_names=d.get("feature_names"))
