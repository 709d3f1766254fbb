"""Correlation-form PCA, Pearson correlation matrix, and multicollinearity filtering.

PCA standardizes columns first (the inputs mix units such as temperatures and
search counts), eigen-decomposes the resulting correlation matrix, and keeps
the smallest component count whose cumulative explained-variance ratio meets
the target. Eigenvector signs follow a fixed convention so repeated fits are
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError


@dataclass
class PcaModel:
    mean: np.ndarray                    # per retained input field
    scale: np.ndarray                   # per-field std used for standardization
    components: np.ndarray              # (fields, retained PCs), orthonormal columns
    explained_variance_ratio: np.ndarray
    dropped_fields: list[int] = field(default_factory=list)  # zero-variance input columns

    @property
    def n_components(self) -> int:
        return self.components.shape[1]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "dropped_fields": self.dropped_fields,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            components=np.asarray(d["components"], dtype=float),
            explained_variance_ratio=np.asarray(d["explained_variance_ratio"], dtype=float),
            dropped_fields=list(d["dropped_fields"]),
        )


@dataclass
class CorrelationMatrix:
    features: list[str]
    r: np.ndarray                       # symmetric, diagonal 1
    degenerate: list[str] = field(default_factory=list)  # zero-variance columns, r forced to 0

    def pair(self, a: str, b: str) -> float:
        i, j = self.features.index(a), self.features.index(b)
        return float(self.r[i, j])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude component of each eigenvector made positive.
    out = vectors.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0:
            out[:, j] = -out[:, j]
    return out


def fit_pca(data: np.ndarray, target_variance: float = 0.95) -> PcaModel:
    """Fit correlation-form PCA keeping enough PCs to reach ``target_variance``."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ParameterError("PCA needs a 2-D matrix with at least 2 rows")
    if np.isnan(data).any():
        raise DataError("PCA input contains missing cells; impute first")
    if not 0.0 < target_variance <= 1.0:
        raise ParameterError(f"target_variance must be in (0,1], got {target_variance}")

    std = data.std(axis=0, ddof=1)
    keep = std > 0.0
    dropped = [int(i) for i in np.flatnonzero(~keep)]
    if not keep.any():
        raise DataError("all columns are constant, nothing to decompose")
    data = data[:, keep]
    mean = data.mean(axis=0)
    scale = std[keep]
    z = (data - mean) / scale

    corr = z.T @ z / (data.shape[0] - 1)
    corr = (corr + corr.T) / 2.0  # symmetrize away rounding
    eigvals, eigvecs = np.linalg.eigh(corr)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = _fix_signs(eigvecs[:, order])

    ratios = eigvals / eigvals.sum()
    cumulative = np.cumsum(ratios)
    retained = int(np.searchsorted(cumulative, target_variance - 1e-12) + 1)
    retained = min(retained, len(ratios))

    return PcaModel(
        mean=mean,
        scale=scale,
        components=eigvecs[:, :retained],
        explained_variance_ratio=ratios[:retained],
        dropped_fields=dropped,
    )


def transform(model: PcaModel, data: np.ndarray) -> np.ndarray:
    """Standardize with the model's mean/scale and project onto retained PCs."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[None, :]
    expected = len(model.mean) + len(model.dropped_fields)
    if data.shape[1] != expected:
        raise ParameterError(f"expected {expected} columns, got {data.shape[1]}")
    if model.dropped_fields:
        keep = [j for j in range(data.shape[1]) if j not in set(model.dropped_fields)]
        data = data[:, keep]
    z = (data - model.mean) / model.scale
    return z @ model.components


def pearson_matrix(data: np.ndarray, names: list[str]) -> CorrelationMatrix:
    """Pairwise Pearson r; zero-variance columns are flagged and set to r=0."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ParameterError("need at least 2 rows to correlate")
    if data.shape[1] != len(names):
        raise ParameterError("names must match the column count")
    centered = data - data.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    degenerate_mask = norms == 0.0
    safe = np.where(degenerate_mask, 1.0, norms)
    unit = centered / safe
    r = unit.T @ unit
    r = np.clip((r + r.T) / 2.0, -1.0, 1.0)
    r[degenerate_mask, :] = 0.0
    r[:, degenerate_mask] = 0.0
    np.fill_diagonal(r, 1.0)
    degenerate = [names[i] for i in np.flatnonzero(degenerate_mask)]
    return CorrelationMatrix(features=list(names), r=r, degenerate=degenerate)


def multicollinearity_filter(corr: CorrelationMatrix, threshold: float = 0.7) -> tuple[list[str], list[tuple[str, str, float]]]:
    """Greedily break up feature pairs with |r| above ``threshold``.

    Pairs are visited in decreasing |r|. From each offending pair still
    present, the member with the larger mean |r| against the remaining
    features is dropped (lexicographically later name on ties). Returns
    (kept names in input order, dropped as (name, partner, r)).
    """
    if not 0.0 < threshold < 1.0:
        raise ParameterError(f"threshold must be in (0,1), got {threshold}")
    names = corr.features
    n = len(names)
    violations = []
    for i in range(n):
        for j in range(i + 1, n):
            r = float(corr.r[i, j])
            if abs(r) > threshold:
                violations.append((abs(r), names[i], names[j], r))
    violations.sort(key=lambda v: (-v[0], v[1], v[2]))

    present = set(names)
    dropped: list[tuple[str, str, float]] = []
    index = {name: k for k, name in enumerate(names)}
    for _, a, b, r in violations:
        if a not in present or b not in present:
            continue
        others = [index[x] for x in present]

        def mean_abs(name: str) -> float:
            i = index[name]
            vals = [abs(corr.r[i, j]) for j in others if j != i]
            return sum(vals) / len(vals) if vals else 0.0

        ma, mb = mean_abs(a), mean_abs(b)
        if ma > mb:
            victim, partner = a, b
        elif mb > ma:
            victim, partner = b, a
        else:
            victim, partner = (a, b) if a > b else (b, a)
        present.remove(victim)
        dropped.append((victim, partner, r))
    kept = [name for name in names if name in present]
    return kept, dropped
