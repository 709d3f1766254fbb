"""Behavioral hesitancy metric derived from cumulative vaccination uptake.

For a county with cumulative fraction q_t fully vaccinated by week t and a lag
of ``lag`` weeks, the share of the week-(t-lag) unvaccinated who got vaccinated
by week t is

    delta_t = (q_t - q_{t-lag}) / (1 - q_{t-lag})

and the behavioral hesitancy value is its complement, vhb_t = 1 - delta_t:
the fraction of the previously unvaccinated who remained unvaccinated.
Weeks where q_{t-lag} = 1 are excluded (nothing left to vaccinate) and
recorded rather than silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DataError, ParameterError
from .panel import METRIC_WINDOW, VaccinationSeries


@dataclass
class HesitancySeries:
    county: str
    lag: int
    vhb: dict[int, float] = field(default_factory=dict)
    delta: dict[int, float] = field(default_factory=dict)
    excluded: list[int] = field(default_factory=list)  # weeks with q_{t-lag} = 1

    def weeks(self) -> list[int]:
        return sorted(self.vhb)


def compute_delta(series: VaccinationSeries, lag: int = 1,
                  window: tuple[int, int] = METRIC_WINDOW) -> HesitancySeries:
    """Compute delta and vhb per week of ``window`` where both endpoints exist.

    The input is expected to be monotonicized; on raw corrected data vhb can
    leave [0,1], which is permitted here for diagnostics but flagged by
    callers that care.
    """
    if lag < 1:
        raise ParameterError(f"lag must be a positive number of weeks, got {lag}")
    lo, hi = window
    if lo > hi:
        raise ParameterError(f"empty window {window}")
    out = HesitancySeries(county=series.county, lag=lag)
    for week in range(lo, hi + 1):
        if week not in series.q or (week - lag) not in series.q:
            continue
        q_now = series.q[week]
        q_before = series.q[week - lag]
        if q_before >= 1.0:
            out.excluded.append(week)
            continue
        delta = (q_now - q_before) / (1.0 - q_before)
        out.delta[week] = delta
        out.vhb[week] = 1.0 - delta
    if not out.vhb and not out.excluded:
        raise DataError(f"county {series.county}: no weeks in {window} have both t and t-{lag} observations")
    return out


def national_aggregate(all_series: list[HesitancySeries],
                       populations: dict[str, float] | None = None) -> dict[int, float]:
    """Population-weighted mean vhb per week over the counties defined that week.

    With ``populations`` omitted every county weighs 1 (plain mean). Weeks
    where no county is defined are omitted from the output.
    """
    if populations is not None:
        for series in all_series:
            if populations.get(series.county, 0) <= 0:
                raise ParameterError(f"county {series.county} needs a positive population weight")
    sums: dict[int, float] = {}
    weights: dict[int, float] = {}
    for series in all_series:
        w = 1.0 if populations is None else float(populations[series.county])
        for week, value in series.vhb.items():
            sums[week] = sums.get(week, 0.0) + w * value
            weights[week] = weights.get(week, 0.0) + w
    return {week: sums[week] / weights[week] for week in sorted(sums)}


def metric_rows(all_series: list[HesitancySeries]) -> list[tuple]:
    """Rows for the metric CSV: fips,week,delta,vhb,defined_flag."""
    rows = []
    for series in sorted(all_series, key=lambda s: s.county):
        weeks = sorted(set(series.vhb) | set(series.excluded))
        for week in weeks:
            if week in series.vhb:
                rows.append((series.county, week, series.delta[week], series.vhb[week], 1))
            else:
                rows.append((series.county, week, "", "", 0))
    return rows
