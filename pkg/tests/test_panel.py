import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_adjacency, make_panel, make_series
from hesitancy.errors import DataError, ImputationError
from hesitancy.panel import (impute_missing, load_panel, monotonicize, normalize_fips)


class TestNormalizeFips:
    def test_valid_codes(self):
        assert normalize_fips("01001") == "01001"
        assert normalize_fips("56045") == "56045"

    def test_four_digit_numeric_is_zero_padded(self):
        assert normalize_fips("1003") == "01003"

    def test_invalid_codes(self):
        assert normalize_fips("103") is None        # too short even after padding
        assert normalize_fips("99001") is None      # state prefix outside 01..56
        assert normalize_fips("00001") is None
        assert normalize_fips("abcde") is None
        assert normalize_fips("123456") is None


class TestLoadPanel:
    def test_full_join(self, three_county_files):
        result = load_panel(three_county_files["vaccination"], three_county_files["features"],
                            three_county_files["adjacency"], week=5)
        panel = result.panel
        assert panel.counties == ["01001", "01003", "02013"]
        assert panel.weeks == [4, 5, 6]
        assert panel.n_missing() == 0
        assert not result.report.rejections
        assert panel.feature_kinds == {"income": "static", "internet": "dynamic"}

    def test_county_missing_vaccination_is_flagged(self, tmp_path, three_county_files):
        vacc = tmp_path / "v2.csv"
        vacc.write_text("fips,week,pct_fully_vaccinated\n01001,4,0.10\n01003,4,0.15\n")
        result = load_panel(vacc, three_county_files["features"],
                            three_county_files["adjacency"], week=4)
        # 02013 appears only in the feature file: present but pending imputation
        assert "02013" in result.panel.counties
        assert ("02013", 4) in result.report.missing_vaccination

    def test_malformed_fips_rejected_with_diagnostic(self, tmp_path, three_county_files):
        vacc = tmp_path / "v3.csv"
        vacc.write_text("fips,week,pct_fully_vaccinated\n01001,4,0.10\n103,4,0.2\nxxxxx,4,0.2\n")
        result = load_panel(vacc, [], three_county_files["adjacency"], week=4)
        assert result.panel.counties == ["01001"]
        assert len(result.report.rejections) == 2
        assert "103" in result.report.rejections[0][1]

    def test_padded_fips_joins(self, tmp_path, three_county_files):
        # 4-digit codes are a CSV export artifact; they normalize rather than reject
        vacc = tmp_path / "v4.csv"
        vacc.write_text("fips,week,pct_fully_vaccinated\n1003,4,0.10\n")
        result = load_panel(vacc, [], three_county_files["adjacency"], week=4)
        assert result.panel.counties == ["01003"]

    def test_duplicate_fips_week_errors(self, tmp_path, three_county_files):
        vacc = tmp_path / "v5.csv"
        vacc.write_text("fips,week,pct_fully_vaccinated\n01001,4,0.10\n01001,4,0.11\n")
        with pytest.raises(DataError, match="01001.*week=4|week=4.*01001"):
            load_panel(vacc, [], three_county_files["adjacency"], week=4)

    def test_join_is_order_independent(self, tmp_path, three_county_files):
        shuffled = tmp_path / "v6.csv"
        lines = three_county_files["vaccination"].read_text().strip().splitlines()
        shuffled.write_text("\n".join([lines[0]] + lines[:0:-1]) + "\n")
        a = load_panel(three_county_files["vaccination"], three_county_files["features"],
                       three_county_files["adjacency"], week=5).panel
        b = load_panel(shuffled, three_county_files["features"],
                       three_county_files["adjacency"], week=5).panel
        assert a.counties == b.counties
        np.testing.assert_array_equal(a.vaccination, b.vaccination)
        np.testing.assert_array_equal(a.features, b.features)


class TestImputeMissing:
    def test_two_neighbor_mean(self):
        panel = make_panel(["01001", "01003", "01005"], [[math.nan], [0.2], [0.4]])
        adjacency = make_adjacency([("01001", "01003"), ("01001", "01005")])
        imputed, report = impute_missing(panel, adjacency)
        assert imputed.vaccination[0, 0] == pytest.approx(0.3, abs=0)
        assert report.vaccination_cells == [("01001", 1, 0.3)]

    def test_no_missing_is_identity(self):
        panel = make_panel(["01001", "01003"], [[0.1], [0.2]])
        imputed, report = impute_missing(panel, make_adjacency([("01001", "01003")]))
        np.testing.assert_array_equal(imputed.vaccination, panel.vaccination)
        assert report.empty()

    def test_chain_fills_in_two_passes(self):
        # A(missing) - B(missing) - C(0.6): pass 1 fills B, pass 2 fills A
        panel = make_panel(["01001", "01003", "01005"],
                           [[math.nan], [math.nan], [0.6]])
        adjacency = make_adjacency([("01001", "01003"), ("01003", "01005")])
        imputed, report = impute_missing(panel, adjacency)
        assert imputed.vaccination[0, 0] == 0.6
        assert imputed.vaccination[1, 0] == 0.6
        # B filled before A: report order shows the pass structure
        assert [c[0] for c in report.vaccination_cells] == ["01003", "01001"]

    def test_component_without_observations_errors(self):
        panel = make_panel(["01001", "01003", "01005"], [[math.nan], [math.nan], [0.5]])
        adjacency = make_adjacency([("01001", "01003")])  # island pair, no observed neighbor
        with pytest.raises(ImputationError) as err:
            impute_missing(panel, adjacency)
        assert ["01001", "01003"] in err.value.components

    def test_idempotent(self):
        panel = make_panel(["01001", "01003", "01005"],
                           [[math.nan, 0.5], [0.2, math.nan], [0.4, 0.3]])
        adjacency = make_adjacency([("01001", "01003"), ("01001", "01005"), ("01003", "01005")])
        once, _ = impute_missing(panel, adjacency)
        twice, report = impute_missing(once, adjacency)
        np.testing.assert_array_equal(once.vaccination, twice.vaccination)
        assert report.empty()

    def test_imputed_value_within_neighbor_range(self):
        rng = np.random.default_rng(5)
        counties = [f"01{i:03d}" for i in range(1, 11)]
        values = rng.uniform(0, 1, size=(10, 1))
        values[3, 0] = math.nan
        edges = [(counties[3], counties[j]) for j in (0, 1, 2, 4)]
        panel = make_panel(counties, values)
        imputed, _ = impute_missing(panel, make_adjacency(edges))
        neighbor_vals = [values[j, 0] for j in (0, 1, 2, 4)]
        assert min(neighbor_vals) <= imputed.vaccination[3, 0] <= max(neighbor_vals)

    def test_feature_cells_take_column_median(self):
        panel = make_panel(["01001", "01003", "01005"], [[0.1], [0.2], [0.3]],
                           feature_names=["income"],
                           features=[[1.0], [math.nan], [5.0]])
        imputed, report = impute_missing(panel, make_adjacency([]))
        assert imputed.features[1, 0] == 3.0
        assert report.feature_cells == [("01003", "income", 3.0)]


class TestMonotonicize:
    def test_running_max(self):
        series, adjusted = monotonicize(make_series("01001", [0.1, 0.3, 0.25, 0.4]))
        assert [series.q[w] for w in series.weeks()] == [0.1, 0.3, 0.3, 0.4]
        assert adjusted == 1

    def test_already_nondecreasing_unchanged(self):
        series, adjusted = monotonicize(make_series("01001", [0.1, 0.2, 0.3]))
        assert [series.q[w] for w in series.weeks()] == [0.1, 0.2, 0.3]
        assert adjusted == 0

    def test_all_equal_unchanged(self):
        series, adjusted = monotonicize(make_series("01001", [0.2, 0.2, 0.2]))
        assert [series.q[w] for w in series.weeks()] == [0.2, 0.2, 0.2]
        assert adjusted == 0

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_and_preserves_peak_final(self, values):
        once, _ = monotonicize(make_series("01001", values))
        twice, adjusted = monotonicize(once)
        assert twice.q == once.q
        assert adjusted == 0
        if values and values[-1] == max(values):
            assert once.q[len(values)] == values[-1]
