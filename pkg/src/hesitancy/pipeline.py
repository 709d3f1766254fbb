"""End-to-end weekly study orchestration.

Every run is driven by a single JSON config with a mandatory master seed;
stage seeds derive deterministically from (seed, week, stage), so identical
configs produce byte-identical artifact directories. Artifacts are flat CSV
and JSON files named by week; a run manifest records the config hash and a
content hash of every emitted file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import breaks as breaks_mod
from . import metric as metric_mod
from . import numerics
from . import panel as panel_mod
from .errors import DataError, ParameterError, StageError
from .forest import ForestParams, cross_validate, forest_to_dict, predict, train_forest
from .shapley import (WeeklyRanking, cluster_shap_profile, permutation_importance,
                      rank_timeseries, tree_shap)
from .tableio import read_csv, sha256_file, sha256_text, write_csv, write_json

F1_CONFIDENCE_FLOOR = 0.6


@dataclass
class RunConfig:
    vaccination: str
    features: list[str]
    adjacency: str
    outdir: str
    seed: int
    lag: int = 1
    window: tuple[int, int] = panel_mod.METRIC_WINDOW
    k: int = 5
    multicollinearity_threshold: float = 0.7
    rf: ForestParams = field(default_factory=ForestParams)
    n_repeats: int = 10
    n_folds: int = 5
    breaks_mode: str = "recompute"        # "recompute" | "frozen"
    frozen_week: int | None = None
    population: str | None = None
    external: str | None = None
    raw_metric: bool = False              # skip monotonicization (diagnostics only)
    top_n: int = 15

    def validate(self):
        for name in ("vaccination", "adjacency"):
            if not Path(getattr(self, name)).exists():
                raise ParameterError(f"config.{name}: file not found: {getattr(self, name)}")
        for fpath in self.features:
            if not Path(fpath).exists():
                raise ParameterError(f"config.features: file not found: {fpath}")
        if self.seed is None:
            raise ParameterError("config.seed is mandatory")
        if self.breaks_mode not in ("recompute", "frozen"):
            raise ParameterError(f"breaks_mode must be recompute|frozen, got {self.breaks_mode!r}")
        if self.breaks_mode == "frozen" and self.frozen_week is None:
            raise ParameterError("frozen breaks mode needs frozen_week")
        self.rf.validate()

    def to_dict(self) -> dict:
        return {
            "vaccination": self.vaccination, "features": list(self.features),
            "adjacency": self.adjacency, "outdir": self.outdir, "seed": self.seed,
            "lag": self.lag, "window": list(self.window), "k": self.k,
            "multicollinearity_threshold": self.multicollinearity_threshold,
            "rf": self.rf.to_dict(), "n_repeats": self.n_repeats, "n_folds": self.n_folds,
            "breaks_mode": self.breaks_mode, "frozen_week": self.frozen_week,
            "population": self.population, "external": self.external,
            "raw_metric": self.raw_metric, "top_n": self.top_n,
        }

    def content_hash(self) -> str:
        return sha256_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "rf" in d:
            d["rf"] = ForestParams.from_dict(d["rf"])
        if "window" in d:
            d["window"] = tuple(d["window"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _stage_seed(master: int, week: int, stage: int) -> int:
    return int(np.random.SeedSequence([master, week, stage]).generate_state(1)[0])


@dataclass
class PreparedStudy:
    """Window-wide state shared by the weekly runs of one config."""

    panel: panel_mod.CountyPanel
    series: dict[str, metric_mod.HesitancySeries]
    kept_features: list[str]
    kept_idx: list[int]
    filter_record: dict
    frozen_breaks: breaks_mod.BreaksResult | None

    def vhb_at(self, week: int) -> dict[str, float]:
        return {f: s.vhb[week] for f, s in self.series.items() if week in s.vhb}


def prepare_study(config: RunConfig) -> PreparedStudy:
    """Ingest, impute, compute the metric over the window, and filter features."""
    config.validate()
    try:
        loaded = panel_mod.load_panel(config.vaccination, config.features, config.adjacency,
                                      week=min(max(config.window[0], 1), 53))
        imputed, _ = panel_mod.impute_missing(loaded.panel, loaded.adjacency)
    except Exception as exc:
        raise StageError("ingest", exc) from exc

    try:
        series = {}
        for s in imputed.all_series():
            if not config.raw_metric:
                s, _ = panel_mod.monotonicize(s)
            series[s.county] = metric_mod.compute_delta(s, lag=config.lag, window=config.window)
    except Exception as exc:
        raise StageError("metric", exc) from exc

    try:
        corr = numerics.pearson_matrix(imputed.features, imputed.feature_names)
        kept, dropped = numerics.multicollinearity_filter(corr, config.multicollinearity_threshold)
        filter_record = {
            "threshold": config.multicollinearity_threshold,
            "kept": kept,
            "dropped": [{"feature": v, "partner": p, "r": r} for v, p, r in dropped],
            "degenerate": corr.degenerate,
        }
        kept_idx = [imputed.feature_names.index(name) for name in kept]
    except Exception as exc:
        raise StageError("filter", exc) from exc

    frozen = None
    if config.breaks_mode == "frozen":
        try:
            values = {f: s.vhb[config.frozen_week] for f, s in series.items()
                      if config.frozen_week in s.vhb}
            if not values:
                raise DataError(f"no county defined at frozen week {config.frozen_week}")
            frozen = breaks_mod.jenks_breaks(list(values.values()), config.k)
        except Exception as exc:
            raise StageError("breaks", exc) from exc

    return PreparedStudy(panel=imputed, series=series, kept_features=kept,
                         kept_idx=kept_idx, filter_record=filter_record, frozen_breaks=frozen)


def run_week(config: RunConfig, week: int, prepared: PreparedStudy | None = None,
             write_manifest: bool = True) -> dict[str, str]:
    """Run the full stage chain for one week; returns the artifact path map.

    Stages: ingest -> impute -> metric -> breaks -> labels -> filter -> train
    -> cross-validate -> permutation importance -> shap -> profiles. Any stage
    failure aborts with the stage name attached.
    """
    lo, hi = config.window
    if not lo <= week <= hi:
        raise ParameterError(f"week {week} outside the analysis window {config.window}")
    if prepared is None:
        prepared = prepare_study(config)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = f"week{week:02d}"
    artifacts: dict[str, str] = {}
    vhb = prepared.vhb_at(week)

    try:
        weekly = [s for s in prepared.series.values()
                  if week in s.vhb or week in s.excluded]
        week_rows = [r for r in metric_mod.metric_rows(weekly) if r[1] == week]
        artifacts["metric"] = str(write_csv(outdir / f"{tag}_metric.csv",
                                            ["fips", "week", "delta", "vhb", "defined_flag"],
                                            week_rows))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("metric", exc) from exc

    try:
        if len(vhb) < config.k:
            raise DataError(f"only {len(vhb)} counties defined at week {week}")
        if prepared.frozen_breaks is not None:
            week_breaks = prepared.frozen_breaks
        else:
            week_breaks = breaks_mod.jenks_breaks(list(vhb.values()), config.k)
        artifacts["breaks"] = str(write_json(outdir / f"{tag}_breaks.json",
                                             {"mode": config.breaks_mode, **week_breaks.to_dict()}))
        assignment = breaks_mod.assign_clusters(vhb, week_breaks)
        artifacts["clusters"] = str(write_csv(outdir / f"{tag}_clusters.csv",
                                              ["fips", "vhb", "cluster"],
                                              [(f, vhb[f], assignment.labels[f])
                                               for f in sorted(vhb)]))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("breaks", exc) from exc

    artifacts["filter"] = str(write_json(outdir / f"{tag}_filter.json", prepared.filter_record))

    counties = sorted(vhb)
    row_of = {f: i for i, f in enumerate(prepared.panel.counties)}
    X = prepared.panel.features[[row_of[f] for f in counties]][:, prepared.kept_idx]
    y = np.asarray([assignment.labels[f] for f in counties])

    try:
        rf_params = ForestParams(**{**config.rf.to_dict(), "seed": _stage_seed(config.seed, week, 1)})
        forest = train_forest(X, y, rf_params, feature_names=prepared.kept_features)
        artifacts["forest"] = str(write_json(outdir / f"{tag}_forest.json", forest_to_dict(forest)))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", exc) from exc

    try:
        cv = cross_validate(X, y, rf_params, n_folds=config.n_folds)
        rows = [("fold_f1", i + 1, f) for i, f in enumerate(cv.fold_f1)]
        rows += [("mean_f1", "", cv.mean_f1), ("std_f1", "", cv.std_f1)]
        for i, ct in enumerate(cv.classes):
            for j, cp in enumerate(cv.classes):
                rows.append(("confusion", f"C{ct}->C{cp}", float(cv.confusion[i, j])))
        artifacts["cv_report"] = str(write_csv(outdir / f"{tag}_cv_report.csv",
                                               ["record", "label", "value"], rows))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("cross-validate", exc) from exc

    try:
        perm = permutation_importance(forest, X, y, n_repeats=config.n_repeats,
                                      seed=_stage_seed(config.seed, week, 2))
        order = np.argsort(-perm.importances, kind="stable")
        artifacts["permutation"] = str(write_csv(
            outdir / f"{tag}_permutation.csv",
            ["feature", "importance", "std", "baseline_f1"],
            [(perm.feature_names[i], float(perm.importances[i]), float(perm.stds[i]),
              perm.baseline_f1) for i in order]))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("permutation", exc) from exc

    try:
        shap = tree_shap(forest, X, instance_ids=counties)
        artifacts["shap"] = str(write_csv(outdir / f"{tag}_shap.csv",
                                          ["fips", "feature", "class", "phi"], shap.long_rows()))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("shap", exc) from exc

    try:
        predicted = predict(forest, X)
        profiles = cluster_shap_profile(shap, predicted, top_n=config.top_n, X=X)
        prof_rows = []
        for p in profiles:
            for rank, (feat, tot, mean_phi, mean_val) in enumerate(
                    zip(p.features, p.total_abs_phi, p.mean_phi, p.mean_feature_value), start=1):
                prof_rows.append((f"C{p.cluster}", p.n_instances, rank, feat, tot, mean_phi, mean_val))
        artifacts["shap_profiles"] = str(write_csv(
            outdir / f"{tag}_shap_profiles.csv",
            ["cluster", "n_counties", "rank", "feature", "total_abs_phi", "mean_phi",
             "mean_feature_value"], prof_rows))
    except StageError:
        raise
    except Exception as exc:
        raise StageError("profiles", exc) from exc

    if write_manifest:
        write_manifest_file(config, outdir, artifacts, weeks=[week])
    return artifacts


def write_manifest_file(config: RunConfig, outdir: Path, artifacts: dict[str, str],
                        weeks: list[int]) -> str:
    entries = {}
    for path in sorted(set(artifacts.values())):
        rel = str(Path(path).relative_to(outdir))
        entries[rel] = sha256_file(path)
    return str(write_json(outdir / "manifest.json", {
        "config_hash": config.content_hash(),
        "seed": config.seed,
        "weeks": weeks,
        "files": entries,
    }))


def run_series(config: RunConfig) -> dict[str, str]:
    """Run every week in the window, then the cross-week aggregates."""
    lo, hi = config.window
    if hi - lo < 1:
        raise ParameterError("run_series needs a window spanning at least 2 weeks")
    prepared = prepare_study(config)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    all_artifacts: dict[str, str] = {}
    weekly_rankings: list[WeeklyRanking] = []
    f1_rows: list[tuple] = []
    ran_weeks: list[int] = []
    for week in range(lo, hi + 1):
        if not prepared.vhb_at(week):
            continue
        arts = run_week(config, week, prepared=prepared, write_manifest=False)
        ran_weeks.append(week)
        for key, path in arts.items():
            all_artifacts[f"{key}_w{week}"] = path
        header, rows = read_csv(arts["permutation"])
        ranking = [r[0] for r in rows]
        _, cv_rows = read_csv(arts["cv_report"])
        mean_f1 = next(float(r[2]) for r in cv_rows if r[0] == "mean_f1")
        std_f1 = next(float(r[2]) for r in cv_rows if r[0] == "std_f1")
        f1_rows.append((week, mean_f1, std_f1))
        weekly_rankings.append(WeeklyRanking(week=week, ranking=ranking, mean_f1=mean_f1))

    if not ran_weeks:
        raise StageError("series", DataError("no week in the window had defined metric values"))

    all_artifacts["f1_trend"] = str(write_csv(outdir / "f1_trend.csv",
                                              ["week", "mean_f1", "std_f1"], f1_rows))

    trajectory = rank_timeseries(weekly_rankings, f1_floor=F1_CONFIDENCE_FLOOR)
    all_artifacts["rank_timeseries"] = str(write_csv(
        outdir / "rank_timeseries.csv",
        ["feature", "week", "rank", "low_confidence"], trajectory.rows()))

    populations = read_population(config.population) if config.population else None
    national = metric_mod.national_aggregate(list(prepared.series.values()), populations)
    all_artifacts["national_trend"] = str(write_csv(
        outdir / "national_trend.csv", ["week", "vhb"],
        [(w, national[w]) for w in sorted(national)]))

    all_artifacts["cluster_trends"] = str(write_csv(
        outdir / "cluster_trends.csv",
        ["cluster", "week", "vacc_mean", "vacc_sd", "vhb_mean", "vhb_sd"],
        _cluster_trend_rows(config, prepared, ran_weeks)))

    write_manifest_file(config, outdir, all_artifacts, weeks=ran_weeks)
    return all_artifacts


def _cluster_trend_rows(config: RunConfig, prepared: PreparedStudy, weeks: list[int]) -> list[tuple]:
    rows = []
    panel = prepared.panel
    row_of = {f: i for i, f in enumerate(panel.counties)}
    week_col = {w: i for i, w in enumerate(panel.weeks)}
    for week in weeks:
        vhb = prepared.vhb_at(week)
        if prepared.frozen_breaks is not None:
            week_breaks = prepared.frozen_breaks
        else:
            week_breaks = breaks_mod.jenks_breaks(list(vhb.values()), config.k)
        assignment = breaks_mod.assign_clusters(vhb, week_breaks)
        by_cluster: dict[int, list[str]] = {}
        for fips, label in assignment.labels.items():
            by_cluster.setdefault(label, []).append(fips)
        for label in sorted(by_cluster):
            members = by_cluster[label]
            vhb_vals = np.asarray([vhb[f] for f in members])
            if week in week_col:
                vacc_vals = np.asarray([panel.vaccination[row_of[f], week_col[week]] for f in members])
            else:
                vacc_vals = np.asarray([math.nan])
            rows.append((f"C{label}", week,
                         float(np.mean(vacc_vals)), float(np.std(vacc_vals)),
                         float(np.mean(vhb_vals)), float(np.std(vhb_vals))))
    return rows


def read_population(path) -> dict[str, float]:
    header, rows = read_csv(path)
    if [h.strip() for h in header[:2]] != ["fips", "population"]:
        raise DataError(f"population header must be fips,population, got {header}")
    out = {}
    for row in rows:
        fips = panel_mod.normalize_fips(row[0])
        if fips is not None:
            out[fips] = float(row[1])
    return out


@dataclass
class ValidationReport:
    week: int
    r: float
    n_joined: int
    scatter: list[tuple[str, float, float]]   # (fips, vhb, external)


def validate_external(series: dict[str, metric_mod.HesitancySeries], external_csv,
                      week: int) -> ValidationReport:
    """Pearson r between the weekly metric and an external FIPS-keyed estimate."""
    header, rows = read_csv(external_csv)
    if header[0].strip() != "fips" or len(header) < 2:
        raise DataError(f"external file must be fips,<estimate>, got {header}")
    external = {}
    for row in rows:
        fips = panel_mod.normalize_fips(row[0])
        if fips is not None and row[1].strip() != "":
            external[fips] = float(row[1])
    joined = [(f, s.vhb[week], external[f]) for f, s in sorted(series.items())
              if week in s.vhb and f in external]
    if len(joined) < 3:
        raise DataError(f"insufficient overlap: only {len(joined)} counties joined")
    data = np.asarray([[v, e] for _, v, e in joined])
    corr = numerics.pearson_matrix(data, ["vhb", "external"])
    return ValidationReport(week=week, r=float(corr.r[0, 1]), n_joined=len(joined), scatter=joined)
