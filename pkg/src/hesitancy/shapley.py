"""Exact tree-path Shapley attribution and permutation feature importance.

Shapley values are computed per tree against the cover-weighted conditional
expectation game: descending a split on a known feature follows the instance,
descending on an unknown feature averages the children by their background
covers. Contributions are decomposed per leaf; the elementary-symmetric
polynomial over the path's (hot, cold) feature pairs yields the exact Shapley
weight sums in polynomial time. Per-class base values equal the mean predicted
probability over the training background, so base + sum(phi) reproduces the
vote-fraction prediction to float precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DataError, ParameterError
from .forest import Forest, macro_f1, predict, predict_proba


@dataclass
class ShapTensor:
    values: np.ndarray          # (instances, features, classes)
    base_values: np.ndarray     # (classes,)
    classes: list
    feature_names: list[str]
    instance_ids: list[str] | None = None

    def long_rows(self) -> list[tuple]:
        """Rows for the long-format CSV: id,feature,class,phi."""
        rows = []
        ids = self.instance_ids or [str(i) for i in range(self.values.shape[0])]
        for i, ident in enumerate(ids):
            for j, feat in enumerate(self.feature_names):
                for c, cls in enumerate(self.classes):
                    rows.append((ident, feat, cls, float(self.values[i, j, c])))
        return rows


@dataclass
class PermutationReport:
    feature_names: list[str]
    importances: np.ndarray     # mean macro-F1 drop per feature
    stds: np.ndarray
    baseline_f1: float
    n_repeats: int

    def ranking(self) -> list[str]:
        order = np.argsort(-self.importances, kind="stable")
        return [self.feature_names[i] for i in order]


@numba.njit(cache=True)
def _shap_one_tree(feature, threshold, left, right, cover, leaf_class, root,
                   x, phi, wtable,
                   stack_node, stack_pos, stack_feat, stack_hot, stack_ratio,
                   path_feat, path_hot, path_ratio, uf, uh, uc, epoly, epoly_minus):
    sp = 0
    stack_node[sp] = root
    stack_pos[sp] = 0
    stack_feat[sp] = -1
    stack_hot[sp] = 1.0
    stack_ratio[sp] = 1.0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        pos = stack_pos[sp]
        if pos > 0:
            path_feat[pos - 1] = stack_feat[sp]
            path_hot[pos - 1] = stack_hot[sp]
            path_ratio[pos - 1] = stack_ratio[sp]
        f = feature[node]
        if f >= 0:
            if x[f] <= threshold[node]:
                hot, cold = left[node], right[node]
            else:
                hot, cold = right[node], left[node]
            total = cover[node]
            stack_node[sp] = cold
            stack_pos[sp] = pos + 1
            stack_feat[sp] = f
            stack_hot[sp] = 0.0
            stack_ratio[sp] = cover[cold] / total
            sp += 1
            stack_node[sp] = hot
            stack_pos[sp] = pos + 1
            stack_feat[sp] = f
            stack_hot[sp] = 1.0
            stack_ratio[sp] = cover[hot] / total
            sp += 1
            continue

        # leaf: merge path steps by feature (hot = AND, cold = ratio product)
        u = 0
        for e in range(pos):
            pf = path_feat[e]
            found = -1
            for q in range(u):
                if uf[q] == pf:
                    found = q
                    break
            if found >= 0:
                uh[found] *= path_hot[e]
                uc[found] *= path_ratio[e]
            else:
                uf[u] = pf
                uh[u] = path_hot[e]
                uc[u] = path_ratio[e]
                u += 1
        if u == 0:
            continue  # root is a leaf; constant tree contributes only to the base

        # elementary-symmetric polynomial over (hot, cold) pairs
        for s in range(u + 1):
            epoly[s] = 0.0
        epoly[0] = 1.0
        for q in range(u):
            hq = uh[q]
            cq = uc[q]
            top = q + 1 if q + 1 < u else u
            for s in range(top, 0, -1):
                epoly[s] = epoly[s] * cq + epoly[s - 1] * hq
            epoly[0] = epoly[0] * cq

        cls = leaf_class[node]
        for q in range(u):
            hq = uh[q]
            cq = uc[q]
            if cq > 1e-300:
                epoly_minus[0] = epoly[0] / cq
                for s in range(1, u):
                    epoly_minus[s] = (epoly[s] - epoly_minus[s - 1] * hq) / cq
            else:
                if hq == 0.0:
                    continue  # feature fully blocks this leaf both ways
                epoly_minus[u - 1] = epoly[u] / hq
                for s in range(u - 1, 0, -1):
                    epoly_minus[s - 1] = (epoly[s] - epoly_minus[s] * cq) / hq
            acc = 0.0
            for s in range(u):
                acc += wtable[u, s] * epoly_minus[s]
            phi[uf[q], cls] += (hq - cq) * acc


@numba.njit(cache=True, parallel=True)
def _shap_forest(feature, threshold, left, right, cover, leaf_class, offsets,
                 X, wtable, max_nodes, max_path, n_features, n_classes):
    # instances are independent; each thread owns its scratch and its phi slice
    n = X.shape[0]
    n_trees = offsets.size - 1
    values = np.zeros((n, n_features, n_classes), dtype=np.float64)
    for i in numba.prange(n):
        stack_node = np.empty(max_nodes + 1, dtype=np.int64)
        stack_pos = np.empty(max_nodes + 1, dtype=np.int64)
        stack_feat = np.empty(max_nodes + 1, dtype=np.int64)
        stack_hot = np.empty(max_nodes + 1, dtype=np.float64)
        stack_ratio = np.empty(max_nodes + 1, dtype=np.float64)
        path_feat = np.empty(max_path + 1, dtype=np.int64)
        path_hot = np.empty(max_path + 1, dtype=np.float64)
        path_ratio = np.empty(max_path + 1, dtype=np.float64)
        uf = np.empty(max_path + 1, dtype=np.int64)
        uh = np.empty(max_path + 1, dtype=np.float64)
        uc = np.empty(max_path + 1, dtype=np.float64)
        epoly = np.empty(max_path + 2, dtype=np.float64)
        epoly_minus = np.empty(max_path + 2, dtype=np.float64)
        phi = values[i]
        for t in range(n_trees):
            _shap_one_tree(feature, threshold, left, right, cover, leaf_class,
                           offsets[t], X[i], phi, wtable,
                           stack_node, stack_pos, stack_feat, stack_hot, stack_ratio,
                           path_feat, path_hot, path_ratio, uf, uh, uc, epoly, epoly_minus)
    return values / n_trees


def _weight_table(max_path: int) -> np.ndarray:
    """wtable[u, s] = s! (u-1-s)! / u! for subset size s among u path features."""
    table = np.zeros((max_path + 2, max_path + 2), dtype=np.float64)
    for u in range(1, max_path + 2):
        for s in range(u):
            table[u, s] = 1.0 / (u * math.comb(u - 1, s))
    return table


def base_values(forest: Forest) -> np.ndarray:
    """Per-class mean predicted probability over the training background."""
    base = np.zeros(forest.n_classes)
    for tree in forest.trees:
        root_cover = tree.cover[0]
        if root_cover == 0:
            raise DataError("forest has an empty background set; retrain to record covers")
        leaves = tree.feature < 0
        for node in np.flatnonzero(leaves):
            base[tree.leaf_class[node]] += tree.cover[node] / root_cover
    return base / len(forest.trees)


def tree_shap(forest: Forest, X, instance_ids: list[str] | None = None) -> ShapTensor:
    """Exact Shapley contributions for every instance, feature, and class."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != forest.n_features:
        raise ParameterError(f"expected {forest.n_features} features, got {X.shape[1]}")
    base = base_values(forest)

    flat = forest.flat_arrays()
    max_path = max(t.max_path_length() for t in forest.trees)
    max_nodes = max(t.n_nodes for t in forest.trees)
    wtable = _weight_table(max_path)
    values = _shap_forest(flat["feature"], flat["threshold"], flat["left"], flat["right"],
                          flat["cover"], flat["leaf_class"], flat["offsets"],
                          X, wtable, max_nodes, max_path, forest.n_features, forest.n_classes)
    names = forest.feature_names or [f"f{j}" for j in range(forest.n_features)]
    return ShapTensor(values=values, base_values=base, classes=list(forest.classes),
                      feature_names=list(names), instance_ids=instance_ids)


def permutation_importance(forest: Forest, X, y, n_repeats: int = 10, seed: int = 0) -> PermutationReport:
    """Mean macro-F1 drop when one feature column is shuffled, per feature.

    Shuffles are seeded per (feature, repeat), so reports are reproducible and
    features the forest never splits on score exactly zero.
    """
    if n_repeats < 1:
        raise ParameterError("n_repeats must be positive")
    X = np.asarray(X, dtype=np.float64)
    y = list(np.asarray(y).tolist())
    classes = forest.classes
    baseline = macro_f1(y, predict(forest, X), classes)
    d = X.shape[1]
    drops = np.zeros((d, n_repeats))
    for j in range(d):
        for r in range(n_repeats):
            rng = np.random.default_rng([seed, j, r])
            Xp = X.copy()
            Xp[:, j] = Xp[rng.permutation(X.shape[0]), j]
            drops[j, r] = baseline - macro_f1(y, predict(forest, Xp), classes)
    names = forest.feature_names or [f"f{j}" for j in range(d)]
    return PermutationReport(feature_names=list(names), importances=drops.mean(axis=1),
                             stds=drops.std(axis=1, ddof=1) if n_repeats > 1 else np.zeros(d),
                             baseline_f1=baseline, n_repeats=n_repeats)


@dataclass
class ClusterProfile:
    cluster: int
    n_instances: int
    features: list[str]            # top_n by total |phi| toward this cluster's class
    total_abs_phi: list[float]
    mean_phi: list[float]
    mean_feature_value: list[float]


def cluster_shap_profile(shap: ShapTensor, predicted: list, top_n: int = 15,
                         X=None) -> list[ClusterProfile]:
    """Per predicted cluster: features ranked by total |phi| for that class.

    ``predicted`` holds each instance's predicted class label (one per tensor
    row). Mean raw feature values per cluster accompany the ranking when X is
    given. Empty clusters are omitted.
    """
    n, d, _ = shap.values.shape
    if len(predicted) != n:
        raise ParameterError("predicted labels must align with the tensor rows")
    if X is not None:
        X = np.asarray(X, dtype=np.float64)
    profiles = []
    for c_idx, cls in enumerate(shap.classes):
        rows = [i for i, p in enumerate(predicted) if p == cls]
        if not rows:
            continue
        block = shap.values[rows, :, c_idx]          # (members, features)
        total_abs = np.abs(block).sum(axis=0)
        order = np.argsort(-total_abs, kind="stable")[:top_n]
        profiles.append(ClusterProfile(
            cluster=cls,
            n_instances=len(rows),
            features=[shap.feature_names[j] for j in order],
            total_abs_phi=[float(total_abs[j]) for j in order],
            mean_phi=[float(block[:, j].mean()) for j in order],
            mean_feature_value=[float(X[rows, j].mean()) if X is not None else math.nan
                                for j in order],
        ))
    return profiles


@dataclass
class WeeklyRanking:
    week: int
    ranking: list[str]     # feature names, most important first
    mean_f1: float


@dataclass
class RankTrajectory:
    features: list[str]
    weeks: list[int]
    ranks: dict[str, list]            # feature -> rank per week (None where absent)
    low_confidence: dict[int, bool]   # week -> mean F1 below threshold

    def rows(self) -> list[tuple]:
        out = []
        for feat in self.features:
            for w, r in zip(self.weeks, self.ranks[feat]):
                out.append((feat, w, "" if r is None else r, int(self.low_confidence[w])))
        return out


def rank_timeseries(weekly_reports: list[WeeklyRanking], features: list[str] | None = None,
                    f1_floor: float = 0.6) -> RankTrajectory:
    """Per-feature 1-based rank per week; weeks with mean F1 below the floor flagged."""
    if not weekly_reports:
        raise ParameterError("need at least one weekly ranking")
    reports = sorted(weekly_reports, key=lambda r: r.week)
    weeks = [r.week for r in reports]
    if features is None:
        seen = []
        for r in reports:
            for f in r.ranking:
                if f not in seen:
                    seen.append(f)
        features = seen
    ranks = {f: [] for f in features}
    for r in reports:
        position = {name: i + 1 for i, name in enumerate(r.ranking)}
        for f in features:
            ranks[f].append(position.get(f))
    low = {r.week: r.mean_f1 < f1_floor for r in reports}
    return RankTrajectory(features=list(features), weeks=weeks, ranks=ranks, low_confidence=low)
