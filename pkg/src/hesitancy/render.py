"""Static SVG charts and GeoJSON map layers for pipeline artifacts.

Charts are written directly as SVG text with fixed-precision coordinates, so
identical inputs give byte-identical files (no plotting library state or
timestamps involved).
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import DataError, ParameterError

_W, _H = 720, 420
_MARGIN = 60
_PALETTE = ["#2166ac", "#67a9cf", "#fddbc7", "#ef8a62", "#b2182b",
            "#7b3294", "#008837", "#a6611a"]


def _f(v: float) -> str:
    return f"{v:.2f}"


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
    ]


def _scale(values, lo_pix, hi_pix):
    vmin = min(values)
    vmax = max(values)
    span = (vmax - vmin) or 1.0

    def to_pix(v):
        return lo_pix + (v - vmin) / span * (hi_pix - lo_pix)

    return to_pix, vmin, vmax


def _axes(parts, x_label="", y_label=""):
    parts.append(f'<line x1="{_MARGIN}" y1="{_H - _MARGIN}" x2="{_W - 20}" y2="{_H - _MARGIN}" '
                 'stroke="black"/>')
    parts.append(f'<line x1="{_MARGIN}" y1="{_H - _MARGIN}" x2="{_MARGIN}" y2="40" stroke="black"/>')
    if x_label:
        parts.append(f'<text x="{_W // 2}" y="{_H - 12}" text-anchor="middle" font-size="12" '
                     f'font-family="sans-serif">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="16" y="{_H // 2}" text-anchor="middle" font-size="12" '
                     f'font-family="sans-serif" transform="rotate(-90 16 {_H // 2})">{y_label}</text>')


def bar_chart_svg(labels: list[str], values: list[float], title: str, highlight=None) -> str:
    """Horizontal bar chart, longest bar first order preserved from the input."""
    if not labels or len(labels) != len(values):
        raise ParameterError("labels and values must be nonempty and aligned")
    parts = _svg_open(title)
    n = len(labels)
    row_h = (_H - _MARGIN - 50) / n
    vmax = max(max(values), 0.0) or 1.0
    vmin = min(min(values), 0.0)
    span = vmax - vmin or 1.0
    x0 = 190
    for i, (label, value) in enumerate(zip(labels, values)):
        y = 50 + i * row_h
        w = abs(value) / span * (_W - x0 - 30)
        x = x0 + (min(value, 0.0) - vmin) / span * (_W - x0 - 30)
        color = "#b2182b" if highlight and label in highlight else "#2166ac"
        parts.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(row_h * 0.7)}" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{x0 - 6}" y="{_f(y + row_h * 0.55)}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif">{label}</text>')
        parts.append(f'<text x="{_f(x0 + w + 4)}" y="{_f(y + row_h * 0.55)}" font-size="10" '
                     f'font-family="sans-serif">{value:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def errorbar_svg(xs: list[float], means: list[float], sds: list[float], title: str,
                 x_label: str = "week", y_label: str = "") -> str:
    if not xs or not (len(xs) == len(means) == len(sds)):
        raise ParameterError("xs, means, sds must be nonempty and aligned")
    parts = _svg_open(title)
    _axes(parts, x_label, y_label)
    to_x, *_ = _scale(xs, _MARGIN + 10, _W - 30)
    lo = [m - s for m, s in zip(means, sds)]
    hi = [m + s for m, s in zip(means, sds)]
    to_y, *_ = _scale(lo + hi, _H - _MARGIN - 10, 50)
    pts = " ".join(f"{_f(to_x(x))},{_f(to_y(m))}" for x, m in zip(xs, means))
    for x, m, s in zip(xs, means, sds):
        parts.append(f'<line x1="{_f(to_x(x))}" y1="{_f(to_y(m - s))}" x2="{_f(to_x(x))}" '
                     f'y2="{_f(to_y(m + s))}" stroke="#888888"/>')
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#2166ac" stroke-width="2"/>')
    for x, m in zip(xs, means):
        parts.append(f'<circle cx="{_f(to_x(x))}" cy="{_f(to_y(m))}" r="3" fill="#2166ac"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_svg(xs: list[float], ys: list[float], title: str,
                x_label: str = "", y_label: str = "") -> str:
    if not xs or len(xs) != len(ys):
        raise ParameterError("xs and ys must be nonempty and aligned")
    parts = _svg_open(title)
    _axes(parts, x_label, y_label)
    to_x, *_ = _scale(xs, _MARGIN + 10, _W - 30)
    to_y, *_ = _scale(ys, _H - _MARGIN - 10, 50)
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{_f(to_x(x))}" cy="{_f(to_y(y))}" r="2.5" '
                     'fill="#2166ac" fill-opacity="0.55"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(names: list[str], matrix, title: str) -> str:
    """Correlation heatmap: blue negative, white zero, red positive."""
    n = len(names)
    if n == 0:
        raise ParameterError("empty matrix")
    parts = _svg_open(title)
    cell = min((_W - 200) / n, (_H - 120) / n)
    x0, y0 = 180, 60

    def color(v):
        v = max(-1.0, min(1.0, v))
        if v >= 0:
            s = int(255 * (1 - v))
            return f"rgb(255,{s},{s})"
        s = int(255 * (1 + v))
        return f"rgb({s},{s},255)"

    for i in range(n):
        for j in range(n):
            parts.append(f'<rect x="{_f(x0 + j * cell)}" y="{_f(y0 + i * cell)}" '
                         f'width="{_f(cell)}" height="{_f(cell)}" fill="{color(float(matrix[i][j]))}"/>')
        parts.append(f'<text x="{x0 - 5}" y="{_f(y0 + i * cell + cell * 0.7)}" text-anchor="end" '
                     f'font-size="9" font-family="sans-serif">{names[i]}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def rank_lines_svg(weeks: list[int], series: dict[str, list], title: str,
                   shaded_weeks: list[int] | None = None) -> str:
    """Rank trajectories (rank 1 at the top); shaded weeks mark low confidence."""
    if not weeks or not series:
        raise ParameterError("need weeks and at least one series")
    parts = _svg_open(title)
    _axes(parts, "week", "rank")
    to_x, *_ = _scale(weeks, _MARGIN + 10, _W - 150)
    all_ranks = [r for rs in series.values() for r in rs if r is not None] or [1]
    to_y, *_ = _scale([min(all_ranks), max(all_ranks)], 50, _H - _MARGIN - 10)  # rank 1 on top
    if shaded_weeks:
        for w in shaded_weeks:
            x = to_x(w)
            parts.append(f'<rect x="{_f(x - 4)}" y="40" width="8" height="{_H - _MARGIN - 40}" '
                         'fill="#cccccc" fill-opacity="0.5"/>')
    for s_i, (name, ranks) in enumerate(sorted(series.items())):
        color = _PALETTE[s_i % len(_PALETTE)]
        pts = [(w, r) for w, r in zip(weeks, ranks) if r is not None]
        poly = " ".join(f"{_f(to_x(w))},{_f(to_y(r))}" for w, r in pts)
        parts.append(f'<polyline points="{poly}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_W - 140}" y="{50 + 14 * s_i}" font-size="11" fill="{color}" '
                     f'font-family="sans-serif">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def choropleth_geojson(base_geojson_path, clusters: dict[str, int], vhb: dict[str, float]) -> dict:
    """Join cluster labels and hesitancy values onto a FIPS-keyed base layer."""
    path = Path(base_geojson_path)
    if not path.exists():
        raise DataError(f"base GeoJSON layer not found: {path}")
    with open(path) as fh:
        layer = json.load(fh)
    if layer.get("type") != "FeatureCollection":
        raise DataError("base layer must be a GeoJSON FeatureCollection")
    for feature in layer.get("features", []):
        props = feature.setdefault("properties", {})
        fips = props.get("fips")
        if fips in clusters:
            props["cluster"] = int(clusters[fips])
        if fips in vhb:
            props["vhb"] = float(vhb[fips])
    return layer
