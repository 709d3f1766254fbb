"""Fisher-Jenks optimal 1-D classification with goodness-of-variance-fit selection.

The dynamic program runs over distinct sorted values weighted by their counts,
so duplicate values are never split across classes and the O(k n^2) cost is
paid on the distinct count only. GVF = (SDAM - SDCM) / SDAM, where SDAM is the
total squared deviation from the global mean and SDCM the optimal within-class
sum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class BreaksResult:
    k: int
    boundaries: list[float]      # k-1 ascending cut values (minimum of each upper class)
    class_means: list[float]
    gvf: float
    value_min: float
    value_max: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "boundaries": self.boundaries,
            "class_means": self.class_means,
            "gvf": self.gvf,
            "value_min": self.value_min,
            "value_max": self.value_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BreaksResult":
        return cls(k=d["k"], boundaries=list(d["boundaries"]), class_means=list(d["class_means"]),
                   gvf=d["gvf"], value_min=d["value_min"], value_max=d["value_max"])


@dataclass
class ClusterAssignment:
    """County labels 1..k; label order follows ascending class value (C1 lowest)."""

    labels: dict[str, int]
    k: int

    def name(self, fips: str) -> str:
        return f"C{self.labels[fips]}"

    def counts(self) -> list[int]:
        out = [0] * self.k
        for label in self.labels.values():
            out[label - 1] += 1
        return out


def jenks_breaks(values, k: int) -> BreaksResult:
    """Exact optimal k-class partition of ``values`` by total within-class SSD."""
    vals = np.asarray(sorted(float(v) for v in values), dtype=float)
    n = vals.size
    if n == 0:
        raise ParameterError("no values to classify")
    if not np.isfinite(vals).all():
        raise ParameterError("values must be finite")
    if k < 1 or k > n:
        raise ParameterError(f"k must be in 1..{n}, got {k}")

    distinct, counts = np.unique(vals, return_counts=True)
    m = distinct.size
    if k > m:
        raise ParameterError(f"k={k} exceeds the {m} distinct values (degenerate classes)")

    weights = counts.astype(float)
    cw = np.concatenate(([0.0], np.cumsum(weights)))                 # cumulative weight
    cwx = np.concatenate(([0.0], np.cumsum(weights * distinct)))     # cumulative weighted sum
    cwx2 = np.concatenate(([0.0], np.cumsum(weights * distinct ** 2)))

    def ssd(i, j):
        # within-class squared deviation of distinct[i..j] inclusive; i or j may be arrays
        w = cw[j + 1] - cw[i]
        s = cwx[j + 1] - cwx[i]
        s2 = cwx2[j + 1] - cwx2[i]
        return np.maximum(s2 - s * s / w, 0.0)  # clip prefix-sum cancellation noise

    # cost[c, j] = best total SSD splitting distinct[0..j] into c+1 classes
    cost = np.full((k, m), np.inf)
    split = np.zeros((k, m), dtype=int)   # first index of the last class
    cost[0, :] = ssd(0, np.arange(m))
    for c in range(1, k):
        for j in range(c, m):
            starts = np.arange(c, j + 1)
            total = cost[c - 1, starts - 1] + ssd(starts, j)
            best = int(np.argmin(total))
            cost[c, j] = total[best]
            split[c, j] = starts[best]

    # walk the split table back to class extents over distinct values
    extents = []
    j = m - 1
    for c in range(k - 1, -1, -1):
        i = split[c, j] if c > 0 else 0
        extents.append((i, j))
        j = i - 1
    extents.reverse()

    boundaries = [float(distinct[i]) for i, _ in extents[1:]]
    class_means = []
    for i, j in extents:
        w = cw[j + 1] - cw[i]
        class_means.append(float((cwx[j + 1] - cwx[i]) / w))

    sdam = float(ssd(0, m - 1))
    # singleton classes have zero deviation by definition, not by float accident
    sdcm = 0.0 if k == m else float(cost[k - 1, m - 1])
    gvf = 1.0 if sdam == 0.0 else (sdam - sdcm) / sdam
    gvf = min(max(gvf, 0.0), 1.0)
    return BreaksResult(k=k, boundaries=boundaries, class_means=class_means, gvf=gvf,
                        value_min=float(distinct[0]), value_max=float(distinct[-1]))


def gvf_curve(values, k_range: tuple[int, int]) -> list[tuple[int, float]]:
    """GVF for each k in the inclusive range; nondecreasing in k."""
    k_lo, k_hi = k_range
    if k_lo < 1 or k_lo > k_hi:
        raise ParameterError(f"bad k range {k_range}")
    return [(k, jenks_breaks(values, k).gvf) for k in range(k_lo, k_hi + 1)]


def assign_clusters(vhb_by_county: dict[str, float], breaks: BreaksResult) -> ClusterAssignment:
    """Assign each county to a class by half-open boundary intervals.

    A value equal to a boundary goes to the upper class; values outside the
    training range are clamped into the end classes with a warning.
    """
    bounds = np.asarray(breaks.boundaries, dtype=float)
    labels: dict[str, int] = {}
    clamped = []
    for fips in sorted(vhb_by_county):
        value = float(vhb_by_county[fips])
        if value < breaks.value_min or value > breaks.value_max:
            clamped.append(fips)
        cls = int(np.searchsorted(bounds, value, side="right"))
        labels[fips] = cls + 1
    if clamped:
        warnings.warn(f"{len(clamped)} value(s) outside the training range were clamped "
                      f"to the nearest class: {clamped[:5]}{'...' if len(clamped) > 5 else ''}")
    return ClusterAssignment(labels=labels, k=breaks.k)
