"""FIPS-keyed county panel: loading, validation, fusion, and neighbor imputation.

Input formats:
  vaccination CSV  fips,week,pct_fully_vaccinated   (fraction in [0,1])
  feature CSV      fips,<feature_1>,...             (sidecar <file>.manifest.json
                                                     declares kind and snapshot week)
  adjacency CSV    fips_a,fips_b                    (one undirected edge per row)

Missing cells are NaN until :func:`impute_missing` runs; every fill is recorded
in the returned report so the panel stays auditable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ImputationError
from .tableio import read_csv

WEEK_MIN = 1
WEEK_MAX = 53
METRIC_WINDOW = (4, 43)


def normalize_fips(raw: str) -> str | None:
    """Return the canonical 5-digit FIPS for ``raw``, or None if invalid.

    Purely numeric 4-digit codes are zero-padded first (a common CSV export
    artifact); anything else must already be 5 digits with a state prefix
    in 01..56.
    """
    code = raw.strip()
    if len(code) == 4 and code.isdigit():
        code = "0" + code
    if len(code) != 5 or not code.isdigit():
        return None
    state = int(code[:2])
    if not 1 <= state <= 56:
        return None
    return code


@dataclass
class VaccinationSeries:
    """Cumulative fraction fully vaccinated for one county, by week."""

    county: str
    q: dict[int, float]

    def weeks(self) -> list[int]:
        return sorted(self.q)


@dataclass
class AdjacencyMap:
    """Symmetric county neighbor sets, no self-loops."""

    neighbors: dict[str, set[str]]

    def of(self, fips: str) -> set[str]:
        return self.neighbors.get(fips, set())


@dataclass
class CountyPanel:
    counties: list[str]                 # sorted FIPS
    weeks: list[int]                    # sorted week ordinals
    vaccination: np.ndarray             # (n_counties, n_weeks), NaN = missing
    feature_names: list[str]
    feature_kinds: dict[str, str]       # feature -> "static" | "dynamic"
    features: np.ndarray                # (n_counties, n_features), NaN = missing
    feature_week: int | None = None     # snapshot week for dynamic features

    def county_index(self, fips: str) -> int:
        return self.counties.index(fips)

    def series(self, fips: str) -> VaccinationSeries:
        row = self.vaccination[self.county_index(fips)]
        q = {w: float(v) for w, v in zip(self.weeks, row) if not math.isnan(v)}
        return VaccinationSeries(county=fips, q=q)

    def all_series(self) -> list[VaccinationSeries]:
        return [self.series(f) for f in self.counties]

    def n_missing(self) -> int:
        return int(np.isnan(self.vaccination).sum() + np.isnan(self.features).sum())


@dataclass
class LoadReport:
    rejections: list[tuple[str, str, str]] = field(default_factory=list)  # (file, row, reason)
    missing_vaccination: list[tuple[str, int]] = field(default_factory=list)
    missing_features: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class LoadResult:
    panel: CountyPanel
    adjacency: AdjacencyMap
    report: LoadReport


@dataclass
class ImputationReport:
    vaccination_cells: list[tuple[str, int, float]] = field(default_factory=list)
    feature_cells: list[tuple[str, str, float]] = field(default_factory=list)

    def empty(self) -> bool:
        return not self.vaccination_cells and not self.feature_cells


def load_adjacency(path) -> AdjacencyMap:
    header, rows = read_csv(path)
    if [h.strip() for h in header[:2]] != ["fips_a", "fips_b"]:
        raise DataError(f"adjacency header must be fips_a,fips_b, got {header}")
    neighbors: dict[str, set[str]] = {}
    for row in rows:
        a, b = normalize_fips(row[0]), normalize_fips(row[1])
        if a is None or b is None or a == b:
            continue
        neighbors.setdefault(a, set()).add(b)
        neighbors.setdefault(b, set()).add(a)
    return AdjacencyMap(neighbors=neighbors)


def _read_manifest(feature_csv: Path) -> dict:
    sidecar = feature_csv.with_suffix(feature_csv.suffix + ".manifest.json")
    if not sidecar.exists():
        return {}
    with open(sidecar) as fh:
        return json.load(fh)


def _parse_vaccination(path, report: LoadReport):
    header, rows = read_csv(path)
    cols = [h.strip() for h in header]
    if cols[:3] != ["fips", "week", "pct_fully_vaccinated"]:
        raise DataError(f"vaccination header must be fips,week,pct_fully_vaccinated, got {header}")
    values: dict[tuple[str, int], float] = {}
    fname = str(path)
    for row in rows:
        fips = normalize_fips(row[0])
        if fips is None:
            report.rejections.append((fname, ",".join(row), f"malformed FIPS {row[0]!r}"))
            continue
        try:
            week = int(row[1])
        except ValueError:
            report.rejections.append((fname, ",".join(row), f"malformed week {row[1]!r}"))
            continue
        if not WEEK_MIN <= week <= WEEK_MAX:
            report.rejections.append((fname, ",".join(row), f"week {week} outside {WEEK_MIN}..{WEEK_MAX}"))
            continue
        key = (fips, week)
        if key in values:
            raise DataError(f"duplicate vaccination row for (fips={fips}, week={week})")
        cell = row[2].strip()
        if cell == "":
            continue  # row present, value pending imputation
        q = float(cell)
        if not 0.0 <= q <= 1.0:
            report.rejections.append((fname, ",".join(row), f"fraction {q} outside [0,1]"))
            continue
        values[key] = q
    return values


def _parse_features(path, report: LoadReport):
    header, rows = read_csv(path)
    cols = [h.strip() for h in header]
    if cols[0] != "fips":
        raise DataError(f"feature file {path} must start with a fips column, got {header}")
    names = cols[1:]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate feature names in {path}")
    table: dict[str, list[float]] = {}
    fname = str(path)
    for row in rows:
        fips = normalize_fips(row[0])
        if fips is None:
            report.rejections.append((fname, ",".join(row), f"malformed FIPS {row[0]!r}"))
            continue
        if fips in table:
            raise DataError(f"duplicate feature row for fips={fips} in {path}")
        vals = []
        for cell in row[1:]:
            cell = cell.strip()
            vals.append(float(cell) if cell != "" else math.nan)
        if len(vals) != len(names):
            report.rejections.append((fname, ",".join(row), "wrong column count"))
            continue
        table[fips] = vals
    return names, table


def load_panel(vaccination_csv, feature_csvs, adjacency_csv, week: int) -> LoadResult:
    """Fuse vaccination, feature, and adjacency files into one panel.

    The county universe is the union of counties appearing in the vaccination
    and feature files; cells a county lacks are NaN pending imputation. Rows
    with malformed FIPS are rejected and reported, never silently dropped.
    """
    if not WEEK_MIN <= week <= WEEK_MAX:
        raise DataError(f"snapshot week {week} outside {WEEK_MIN}..{WEEK_MAX}")
    report = LoadReport()
    vacc = _parse_vaccination(Path(vaccination_csv), report)

    feature_names: list[str] = []
    feature_kinds: dict[str, str] = {}
    tables: list[tuple[list[str], dict[str, list[float]]]] = []
    for fpath in feature_csvs:
        fpath = Path(fpath)
        names, table = _parse_features(fpath, report)
        manifest = _read_manifest(fpath)
        kinds = manifest.get("features", {})
        for name in names:
            if name in feature_kinds:
                raise DataError(f"feature {name!r} declared by more than one file")
            feature_kinds[name] = kinds.get(name, {}).get("kind", "static")
        feature_names.extend(names)
        tables.append((names, table))

    counties = sorted({f for f, _ in vacc} | {f for _, t in tables for f in t})
    if not counties:
        raise DataError("no valid counties found in inputs")
    weeks = sorted({w for _, w in vacc}) or [week]
    cindex = {f: i for i, f in enumerate(counties)}
    windex = {w: i for i, w in enumerate(weeks)}

    vmat = np.full((len(counties), len(weeks)), np.nan)
    for (fips, w), q in vacc.items():
        vmat[cindex[fips], windex[w]] = q

    fmat = np.full((len(counties), len(feature_names)), np.nan)
    col = 0
    for names, table in tables:
        for fips, vals in table.items():
            fmat[cindex[fips], col:col + len(names)] = vals
        col += len(names)

    for fips in counties:
        i = cindex[fips]
        for w in weeks:
            if math.isnan(vmat[i, windex[w]]):
                report.missing_vaccination.append((fips, w))
        for j, name in enumerate(feature_names):
            if math.isnan(fmat[i, j]):
                report.missing_features.append((fips, name))

    panel = CountyPanel(
        counties=counties,
        weeks=weeks,
        vaccination=vmat,
        feature_names=feature_names,
        feature_kinds=feature_kinds,
        features=fmat,
        feature_week=week,
    )
    adjacency = load_adjacency(adjacency_csv)
    return LoadResult(panel=panel, adjacency=adjacency, report=report)


def impute_missing(panel: CountyPanel, adjacency: AdjacencyMap) -> tuple[CountyPanel, ImputationReport]:
    """Fill missing cells and report every fill.

    Vaccination cells take the mean of non-missing neighbor values for the
    same week, repeated in synchronous passes until a fixpoint so that nested
    missing regions resolve from their observed boundary inward. Feature
    cells take the column median. A week whose missing counties form a
    component with no observed value anywhere raises ImputationError.
    """
    report = ImputationReport()
    vmat = panel.vaccination.copy()
    cindex = {f: i for i, f in enumerate(panel.counties)}

    for wi, week in enumerate(panel.weeks):
        col = vmat[:, wi]
        while True:
            missing = [f for f in panel.counties if math.isnan(col[cindex[f]])]
            if not missing:
                break
            fills = []
            for fips in missing:
                vals = [col[cindex[n]] for n in sorted(adjacency.of(fips)) if n in cindex]
                vals = [v for v in vals if not math.isnan(v)]
                if vals:
                    fills.append((fips, sum(vals) / len(vals)))
            if not fills:
                components = _missing_components(missing, adjacency)
                raise ImputationError(components)
            for fips, value in fills:
                col[cindex[fips]] = value
                report.vaccination_cells.append((fips, week, value))

    fmat = panel.features.copy()
    for j, name in enumerate(panel.feature_names):
        col = fmat[:, j]
        mask = np.isnan(col)
        if not mask.any():
            continue
        observed = col[~mask]
        if observed.size == 0:
            raise DataError(f"feature {name!r} has no observed values to impute from")
        median = float(np.median(observed))
        for i in np.flatnonzero(mask):
            col[i] = median
            report.feature_cells.append((panel.counties[i], name, median))

    imputed = CountyPanel(
        counties=panel.counties,
        weeks=panel.weeks,
        vaccination=vmat,
        feature_names=panel.feature_names,
        feature_kinds=panel.feature_kinds,
        features=fmat,
        feature_week=panel.feature_week,
    )
    return imputed, report


def _missing_components(missing: list[str], adjacency: AdjacencyMap) -> list[list[str]]:
    remaining = set(missing)
    components = []
    while remaining:
        seed = min(remaining)
        stack, comp = [seed], set()
        while stack:
            node = stack.pop()
            if node in comp:
                continue
            comp.add(node)
            stack.extend(n for n in adjacency.of(node) if n in remaining and n not in comp)
        components.append(sorted(comp))
        remaining -= comp
    return components


def monotonicize(series: VaccinationSeries) -> tuple[VaccinationSeries, int]:
    """Apply a running maximum in week order; returns (series, adjusted count).

    Guards the downstream rate metric against reporting corrections that
    temporarily lower a cumulative series.
    """
    adjusted = 0
    q: dict[int, float] = {}
    running = -math.inf
    for week in series.weeks():
        value = series.q[week]
        if value < running:
            q[week] = running
            adjusted += 1
        else:
            q[week] = value
            running = value
    return VaccinationSeries(county=series.county, q=q), adjusted
