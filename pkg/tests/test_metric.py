import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_series
from hesitancy.errors import DataError, ParameterError
from hesitancy.metric import compute_delta, metric_rows, national_aggregate
from hesitancy.panel import VaccinationSeries, monotonicize


def two_week_series(q_before, q_now):
    return VaccinationSeries(county="01001", q={4: q_before, 5: q_now})


class TestComputeDelta:
    def test_worked_example_060_070(self):
        # 10% absolute gain on a 60% base: a quarter of the unvaccinated got the shot
        hs = compute_delta(two_week_series(0.60, 0.70), lag=1, window=(5, 5))
        assert hs.delta[5] == pytest.approx(0.25, abs=1e-12)
        assert hs.vhb[5] == pytest.approx(0.75, abs=1e-12)

    def test_worked_example_070_080(self):
        hs = compute_delta(two_week_series(0.70, 0.80), lag=1, window=(5, 5))
        assert hs.vhb[5] == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_no_uptake_change(self):
        hs = compute_delta(two_week_series(0.5, 0.5), lag=1, window=(5, 5))
        assert hs.delta[5] == 0.0
        assert hs.vhb[5] == 1.0

    def test_fully_vaccinated_base_excluded(self):
        hs = compute_delta(two_week_series(1.0, 1.0), lag=1, window=(5, 5))
        assert hs.excluded == [5]
        assert 5 not in hs.vhb

    def test_bad_lag(self):
        with pytest.raises(ParameterError):
            compute_delta(two_week_series(0.1, 0.2), lag=0)
        with pytest.raises(ParameterError):
            compute_delta(two_week_series(0.1, 0.2), lag=-2)

    def test_empty_overlap(self):
        series = VaccinationSeries(county="01001", q={50: 0.2, 51: 0.3})
        with pytest.raises(DataError):
            compute_delta(series, lag=1, window=(4, 43))

    def test_lag_two(self):
        series = VaccinationSeries(county="01001", q={4: 0.2, 5: 0.3, 6: 0.4})
        hs = compute_delta(series, lag=2, window=(6, 6))
        assert hs.vhb[6] == pytest.approx((1 - 0.4) / (1 - 0.2), abs=1e-12)

    @given(st.lists(st.floats(min_value=0.0, max_value=0.999), min_size=2, max_size=12))
    @settings(max_examples=80, deadline=None)
    def test_complement_holds_exactly_and_bounds(self, values):
        series, _ = monotonicize(make_series("01001", values, start_week=4))
        hs = compute_delta(series, lag=1, window=(4, 4 + len(values)))
        for week in hs.vhb:
            assert hs.vhb[week] + hs.delta[week] == 1.0
            assert 0.0 <= hs.delta[week] <= 1.0
            assert 0.0 <= hs.vhb[week] <= 1.0

    def test_telescoping_over_double_lag(self):
        q = {4: 0.2, 5: 0.35, 6: 0.5}
        series = VaccinationSeries(county="01001", q=q)
        short = compute_delta(series, lag=1, window=(4, 6))
        double = compute_delta(series, lag=2, window=(6, 6))
        assert double.vhb[6] == pytest.approx(short.vhb[6] * short.vhb[5], rel=1e-12)

    def test_higher_uptake_means_lower_vhb(self):
        base = 0.6
        vhbs = [compute_delta(two_week_series(base, q), lag=1, window=(5, 5)).vhb[5]
                for q in (0.62, 0.66, 0.70, 0.80)]
        assert vhbs == sorted(vhbs, reverse=True)

    def test_equal_gain_from_higher_base_scores_lower(self):
        # both counties gain 10 points; the one starting at 70% ends lower
        low = compute_delta(two_week_series(0.60, 0.70), lag=1, window=(5, 5)).vhb[5]
        high = compute_delta(two_week_series(0.70, 0.80), lag=1, window=(5, 5)).vhb[5]
        assert high < low


class TestNationalAggregate:
    def make(self, county, vhb_by_week):
        hs = compute_delta(VaccinationSeries(county=county, q={4: 0.0, 5: 0.0}),
                           lag=1, window=(5, 5))
        hs.vhb = dict(vhb_by_week)
        return hs

    def test_population_weighted_mean(self):
        series = [self.make("01001", {5: 0.8}), self.make("01003", {5: 0.9})]
        out = national_aggregate(series, {"01001": 100, "01003": 300})
        assert out[5] == pytest.approx(0.875, abs=1e-12)

    def test_single_county_identity(self):
        out = national_aggregate([self.make("01001", {5: 0.7})], {"01001": 10})
        assert out[5] == 0.7

    def test_equal_weights(self):
        series = [self.make("01001", {5: 0.7}), self.make("01003", {5: 0.9})]
        out = national_aggregate(series, {"01001": 50, "01003": 50})
        assert out[5] == pytest.approx(0.8, abs=1e-12)

    def test_unweighted_mode(self):
        series = [self.make("01001", {5: 0.7}), self.make("01003", {5: 0.9})]
        assert national_aggregate(series, None)[5] == pytest.approx(0.8, abs=1e-12)

    def test_nonpositive_population_rejected(self):
        with pytest.raises(ParameterError):
            national_aggregate([self.make("01001", {5: 0.7})], {"01001": 0})

    def test_week_without_counties_omitted(self):
        series = [self.make("01001", {5: 0.7})]
        out = national_aggregate(series, None)
        assert 6 not in out


def test_metric_rows_include_excluded_flags():
    defined = compute_delta(two_week_series(0.6, 0.7), lag=1, window=(5, 5))
    excluded = compute_delta(VaccinationSeries(county="01003", q={4: 1.0, 5: 1.0}),
                             lag=1, window=(5, 5))
    rows = metric_rows([defined, excluded])
    assert ("01001", 5, defined.delta[5], defined.vhb[5], 1) in rows
    assert ("01003", 5, "", "", 0) in rows
