"""Command-line entry points for the study pipeline.

Subcommands: ingest, metric, breaks, train, explain, text, validate,
run-week, run-series, synth, render. Batch stages exit 0 on success and
nonzero with a stage-tagged diagnostic on failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import breaks as breaks_mod
from . import metric as metric_mod
from . import numerics, render, synth
from . import panel as panel_mod
from . import pipeline as pipe
from . import textsignals as text_mod
from .errors import DataError, HesitancyError, ParameterError
from .forest import ForestParams, cross_validate, forest_from_dict, forest_to_dict, predict, train_forest
from .shapley import cluster_shap_profile, permutation_importance, tree_shap
from .tableio import read_csv, read_json, write_csv, write_json


def _add_common_rf_flags(p):
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--mtry", type=int, default=None, help="features considered per split")
    p.add_argument("--seed", type=int, required=True)


def _cmd_synth(args):
    paths = synth.generate_synthetic(args.counties, args.weeks, args.features, args.k,
                                     args.seed, args.out)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def _cmd_ingest(args):
    loaded = panel_mod.load_panel(args.vaccination, args.features, args.adjacency, args.week)
    imputed, imp_report = panel_mod.impute_missing(loaded.panel, loaded.adjacency)
    out = Path(args.out)
    pmat = imputed.vaccination
    rows = [(f, w, float(pmat[i, j]))
            for i, f in enumerate(imputed.counties) for j, w in enumerate(imputed.weeks)]
    write_csv(out / "panel_vaccination.csv", ["fips", "week", "pct_fully_vaccinated"], rows)
    frows = [(f, *[float(v) for v in imputed.features[i]]) for i, f in enumerate(imputed.counties)]
    write_csv(out / "panel_features.csv", ["fips"] + imputed.feature_names, frows)
    if imputed.feature_names:
        corr = numerics.pearson_matrix(imputed.features, imputed.feature_names)
        write_csv(out / "correlation.csv", ["feature"] + imputed.feature_names,
                  [(name, *[float(v) for v in corr.r[i]])
                   for i, name in enumerate(imputed.feature_names)])
    write_json(out / "ingest_report.json", {
        "rejections": [list(r) for r in loaded.report.rejections],
        "imputed_vaccination_cells": len(imp_report.vaccination_cells),
        "imputed_feature_cells": len(imp_report.feature_cells),
        "counties": len(imputed.counties),
        "weeks": imputed.weeks,
    })
    print(f"panel: {len(imputed.counties)} counties x {len(imputed.weeks)} weeks, "
          f"{len(loaded.report.rejections)} rejected rows")
    return 0


def _cmd_metric(args):
    loaded = panel_mod.load_panel(args.vaccination, [], args.adjacency, max(args.window_lo, 1))
    imputed, _ = panel_mod.impute_missing(loaded.panel, loaded.adjacency)
    all_series = []
    for s in imputed.all_series():
        if not args.raw:
            s, _ = panel_mod.monotonicize(s)
        all_series.append(metric_mod.compute_delta(s, lag=args.lag,
                                                   window=(args.window_lo, args.window_hi)))
    write_csv(args.out, ["fips", "week", "delta", "vhb", "defined_flag"],
              metric_mod.metric_rows(all_series))
    print(f"metric: {len(all_series)} counties -> {args.out}")
    return 0


def _read_metric_csv(path):
    header, rows = read_csv(path)
    if [h.strip() for h in header[:5]] != ["fips", "week", "delta", "vhb", "defined_flag"]:
        raise DataError(f"unexpected metric header {header}")
    vhb = {}
    for r in rows:
        if r[4] == "1":
            vhb.setdefault(r[0], {})[int(r[1])] = float(r[3])
    return vhb


def _cmd_breaks(args):
    vhb_by_week = _read_metric_csv(args.metric)
    values = {f: weeks[args.week] for f, weeks in vhb_by_week.items() if args.week in weeks}
    if not values:
        raise DataError(f"no defined metric values at week {args.week}")
    result = breaks_mod.jenks_breaks(list(values.values()), args.k)
    out = Path(args.out)
    write_json(out / "breaks.json", result.to_dict())
    assignment = breaks_mod.assign_clusters(values, result)
    write_csv(out / "clusters.csv", ["fips", "vhb", "cluster"],
              [(f, values[f], assignment.labels[f]) for f in sorted(values)])
    if args.curve_to:
        curve = breaks_mod.gvf_curve(list(values.values()), (1, args.curve_to))
        write_csv(out / "gvf_curve.csv", ["k", "gvf"], curve)
    print(f"breaks: k={args.k} gvf={result.gvf:.4f}")
    return 0


def _load_xy(features_csv, clusters_csv, feature_subset=None):
    fheader, frows = read_csv(features_csv)
    names = [h.strip() for h in fheader[1:]]
    table = {r[0]: [float(v) for v in r[1:]] for r in frows}
    _, crows = read_csv(clusters_csv)
    pairs = [(r[0], int(r[2])) for r in crows if r[0] in table]
    counties = [f for f, _ in pairs]
    y = [label for _, label in pairs]
    X = np.asarray([table[f] for f in counties])
    if feature_subset is not None:
        idx = [names.index(n) for n in feature_subset]
        X = X[:, idx]
        names = list(feature_subset)
    return counties, names, X, np.asarray(y)


def _cmd_train(args):
    counties, names, X, y = _load_xy(args.features, args.clusters)
    if args.threshold:
        corr = numerics.pearson_matrix(X, names)
        kept, _ = numerics.multicollinearity_filter(corr, args.threshold)
        idx = [names.index(n) for n in kept]
        X, names = X[:, idx], kept
    params = ForestParams(n_trees=args.n_trees, max_depth=args.max_depth,
                          min_leaf=args.min_leaf, n_features_per_split=args.mtry, seed=args.seed)
    forest = train_forest(X, y, params, feature_names=names)
    out = Path(args.out)
    write_json(out / "forest.json", forest_to_dict(forest))
    cv = cross_validate(X, y, params, n_folds=args.folds)
    rows = [("fold_f1", i + 1, f) for i, f in enumerate(cv.fold_f1)]
    rows += [("mean_f1", "", cv.mean_f1), ("std_f1", "", cv.std_f1)]
    for i, ct in enumerate(cv.classes):
        for j, cp in enumerate(cv.classes):
            rows.append(("confusion", f"C{ct}->C{cp}", float(cv.confusion[i, j])))
    write_csv(out / "cv_report.csv", ["record", "label", "value"], rows)
    print(f"train: {len(counties)} counties, {len(names)} features, "
          f"macro F1 {cv.mean_f1:.3f} +- {cv.std_f1:.3f}")
    return 0


def _cmd_explain(args):
    forest = forest_from_dict(read_json(args.forest))
    counties, names, X, y = _load_xy(args.features, args.clusters,
                                     feature_subset=forest.feature_names)
    out = Path(args.out)
    perm = permutation_importance(forest, X, y, n_repeats=args.repeats, seed=args.seed)
    order = np.argsort(-perm.importances, kind="stable")
    write_csv(out / "permutation.csv", ["feature", "importance", "std", "baseline_f1"],
              [(perm.feature_names[i], float(perm.importances[i]), float(perm.stds[i]),
                perm.baseline_f1) for i in order])
    shap = tree_shap(forest, X, instance_ids=counties)
    write_csv(out / "shap.csv", ["fips", "feature", "class", "phi"], shap.long_rows())
    profiles = cluster_shap_profile(shap, predict(forest, X), top_n=args.top_n, X=X)
    rows = []
    for p in profiles:
        for rank, (feat, tot, mphi, mval) in enumerate(
                zip(p.features, p.total_abs_phi, p.mean_phi, p.mean_feature_value), start=1):
            rows.append((f"C{p.cluster}", p.n_instances, rank, feat, tot, mphi, mval))
    write_csv(out / "shap_profiles.csv",
              ["cluster", "n_counties", "rank", "feature", "total_abs_phi", "mean_phi",
               "mean_feature_value"], rows)
    print(f"explain: top feature by permutation = {perm.ranking()[0]}")
    return 0


def _parse_grid(spec: str):
    out = []
    for cell in spec.split(","):
        cell = cell.strip()
        if not cell:
            continue
        try:
            out.append(float(cell))
        except ValueError:
            out.append(cell)
    if not out:
        raise ParameterError(f"empty grid spec {spec!r}")
    return out


def _cmd_text(args):
    docs = text_mod.read_tweets_csv(args.tweets)
    lexicon = text_mod.load_lexicon(args.lexicon) if args.lexicon else text_mod.default_lexicon()
    corpus = [text_mod.normalize(d.text, topic_mode=True) for d in docs]
    _, corpus = text_mod.mine_ngrams(corpus, n_max=3, min_count=args.min_count)
    ks = [int(k) for k in args.k_grid.split(",")]
    result = text_mod.grid_search_lda(corpus, ks, _parse_grid(args.alpha_grid),
                                      _parse_grid(args.beta_grid), seed=args.seed,
                                      iterations=args.iterations)
    out = Path(args.out)
    model = result.best
    per_topic, mean_c = text_mod.coherence(model, corpus, top_m=min(10, len(model.vocab)))
    write_json(out / "topics.json", {
        "K": model.K,
        "alpha": model.alpha.tolist(),
        "beta": model.beta,
        "chosen_cell": {"K": result.best_cell.K, "alpha": str(result.best_cell.alpha_spec),
                        "beta": str(result.best_cell.beta_spec),
                        "mean_coherence": result.best_cell.mean_coherence},
        "score_table": [{"K": c.K, "alpha": str(c.alpha_spec), "beta": str(c.beta_spec),
                         "mean_coherence": c.mean_coherence} for c in result.table],
        "per_topic_coherence": per_topic,
        "topics": {str(t): [{"word": w, "p": float(model.phi[t, model.vocab.index(w)])}
                            for w in model.top_words(t, 10)]
                   for t in range(model.K)},
    })
    table = text_mod.county_topic_sentiment(docs, model, lexicon)
    rows = [(c, *[float(v) for v in table.values[i]], int(table.missing[i]))
            for i, c in enumerate(table.counties)]
    write_csv(out / "tweet_sentiment.csv",
              ["fips"] + table.column_names() + ["missing"], rows)
    if args.tones:
        tones = text_mod.read_tones_csv(args.tones)
        mean_tone, rejected = text_mod.county_news_tone(tones)
        write_csv(out / "news_tone.csv", ["fips", "mean_tone"],
                  [(c, mean_tone[c]) for c in sorted(mean_tone)])
        if rejected:
            print(f"text: rejected {len(rejected)} tone records", file=sys.stderr)
    print(f"text: K={model.K}, mean coherence {mean_c:.2f}")
    return 0


def _cmd_validate(args):
    vhb_by_week = _read_metric_csv(args.metric)
    series = {}
    for fips, weeks in vhb_by_week.items():
        s = metric_mod.HesitancySeries(county=fips, lag=1)
        s.vhb = weeks
        series[fips] = s
    report = pipe.validate_external(series, args.external, args.week)
    out = Path(args.out)
    write_json(out / "validation.json",
               {"week": report.week, "pearson_r": report.r, "n_joined": report.n_joined})
    write_csv(out / "scatter.csv", ["fips", "vhb", "external"], report.scatter)
    print(f"validate: week {report.week} r={report.r:.3f} over {report.n_joined} counties")
    return 0


def _cmd_run_week(args):
    config = pipe.RunConfig.from_json(args.config)
    artifacts = pipe.run_week(config, args.week)
    for key in sorted(artifacts):
        print(f"{key}: {artifacts[key]}")
    return 0


def _cmd_run_series(args):
    config = pipe.RunConfig.from_json(args.config)
    artifacts = pipe.run_series(config)
    print(f"run-series: {len(artifacts)} artifacts in {config.outdir}")
    return 0


def _cmd_render(args):
    kind = args.kind
    out = Path(args.out)
    if kind == "choropleth":
        if not args.base:
            raise ParameterError("choropleth needs --base GeoJSON layer")
        _, rows = read_csv(args.input)
        clusters = {r[0]: int(r[2]) for r in rows}
        vhb = {r[0]: float(r[1]) for r in rows}
        layer = render.choropleth_geojson(args.base, clusters, vhb)
        write_json(out, layer)
    elif kind == "importance":
        _, rows = read_csv(args.input)
        top = rows[:15]
        svg = render.bar_chart_svg([r[0] for r in top], [float(r[1]) for r in top],
                                   args.title or "permutation importance")
        out.write_text(svg)
    elif kind == "cv":
        _, rows = read_csv(args.input)
        svg = render.errorbar_svg([float(r[0]) for r in rows], [float(r[1]) for r in rows],
                                  [float(r[2]) for r in rows], args.title or "macro F1 by week",
                                  y_label="macro F1")
        out.write_text(svg)
    elif kind == "scatter":
        _, rows = read_csv(args.input)
        svg = render.scatter_svg([float(r[1]) for r in rows], [float(r[2]) for r in rows],
                                 args.title or "metric vs external estimate",
                                 x_label="vhb", y_label="external")
        out.write_text(svg)
    elif kind == "heatmap":
        header, rows = read_csv(args.input)
        names = [r[0] for r in rows]
        matrix = [[float(v) for v in r[1:]] for r in rows]
        out.write_text(render.heatmap_svg(names, matrix, args.title or "feature correlation"))
    elif kind == "ranks":
        _, rows = read_csv(args.input)
        weeks = sorted({int(r[1]) for r in rows})
        wanted = args.series.split(",") if args.series else None
        series: dict[str, list] = {}
        shaded = sorted({int(r[1]) for r in rows if r[3] == "1"})
        for feat in sorted({r[0] for r in rows}):
            if wanted and feat not in wanted:
                continue
            by_week = {int(r[1]): (int(r[2]) if r[2] != "" else None)
                       for r in rows if r[0] == feat}
            series[feat] = [by_week.get(w) for w in weeks]
        if wanted is None:
            best = sorted(series, key=lambda f: min(r for r in series[f] if r is not None))[:3]
            series = {f: series[f] for f in best}
        out.write_text(render.rank_lines_svg(weeks, series, args.title or "feature rank over time",
                                             shaded_weeks=shaded))
    elif kind == "trend":
        _, rows = read_csv(args.input)
        clusters = sorted({r[0] for r in rows})
        parts = {}
        weeks = sorted({int(r[1]) for r in rows})
        for c in clusters:
            sub = {int(r[1]): (float(r[4]), float(r[5])) for r in rows if r[0] == c}
            parts[c] = [sub.get(w, (None, None)) for w in weeks]
        first = clusters[0]
        svg = render.errorbar_svg(weeks, [parts[first][i][0] for i in range(len(weeks))],
                                  [parts[first][i][1] for i in range(len(weeks))],
                                  args.title or f"vhb trend ({first})", y_label="vhb")
        out.write_text(svg)
    else:
        raise ParameterError(f"unknown render kind {kind!r}")
    if args.empty_check and out.stat().st_size == 0:
        raise DataError(f"render produced an empty file: {out}")
    print(f"render: {kind} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hesitancy",
                                     description="county hesitancy analytics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic input fileset")
    p.add_argument("--counties", type=int, required=True)
    p.add_argument("--weeks", type=int, required=True)
    p.add_argument("--features", type=int, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="load, fuse, and impute the county panel")
    p.add_argument("--vaccination", required=True)
    p.add_argument("--features", nargs="*", default=[])
    p.add_argument("--adjacency", required=True)
    p.add_argument("--week", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("metric", help="compute the weekly hesitancy metric")
    p.add_argument("--vaccination", required=True)
    p.add_argument("--adjacency", required=True)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--window-lo", type=int, default=panel_mod.METRIC_WINDOW[0])
    p.add_argument("--window-hi", type=int, default=panel_mod.METRIC_WINDOW[1])
    p.add_argument("--raw", action="store_true", help="skip monotonicization")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metric)

    p = sub.add_parser("breaks", help="natural-breaks clustering of one week")
    p.add_argument("--metric", required=True)
    p.add_argument("--week", type=int, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--curve-to", type=int, default=0, help="also write the GVF curve up to this k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_breaks)

    p = sub.add_parser("train", help="train and cross-validate the forest")
    p.add_argument("--features", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--threshold", type=float, default=0.7,
                   help="multicollinearity |r| cutoff, 0 disables")
    p.add_argument("--folds", type=int, default=5)
    _add_common_rf_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("explain", help="permutation importance and Shapley attribution")
    p.add_argument("--forest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--top-n", type=int, default=15)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("text", help="tweet sentiment, topics, and news tone features")
    p.add_argument("--tweets", required=True)
    p.add_argument("--tones")
    p.add_argument("--lexicon")
    p.add_argument("--k-grid", default="5,7,9,11,13,15,17,19,21,23,25,27,29")
    p.add_argument("--alpha-grid", default="0.01,0.3,0.6,0.9,symmetric,asymmetric,auto")
    p.add_argument("--beta-grid", default="0.01,0.3,0.6,0.9,symmetric")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_text)

    p = sub.add_parser("validate", help="correlate the metric with an external estimate")
    p.add_argument("--metric", required=True)
    p.add_argument("--external", required=True)
    p.add_argument("--week", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run-week", help="full stage chain for one week")
    p.add_argument("--config", required=True)
    p.add_argument("--week", type=int, required=True)
    p.set_defaults(func=_cmd_run_week)

    p = sub.add_parser("run-series", help="weekly runs plus cross-week aggregates")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run_series)

    p = sub.add_parser("render", help="render artifacts to SVG or GeoJSON")
    p.add_argument("--kind", required=True,
                   choices=["choropleth", "importance", "cv", "scatter", "heatmap", "ranks", "trend"])
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base", help="base GeoJSON layer for choropleth")
    p.add_argument("--title", default="")
    p.add_argument("--series", help="comma-separated feature names for rank lines")
    p.add_argument("--empty-check", action="store_true")
    p.set_defaults(func=_cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HesitancyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
