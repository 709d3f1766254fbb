import math

import numpy as np
import pytest

from hesitancy.errors import DataError, ParameterError
from hesitancy.numerics import (CorrelationMatrix, PcaModel, fit_pca, multicollinearity_filter,
                                pearson_matrix, transform)


def pearson_oracle(x, y):
    """Two-pass textbook Pearson r."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    mx = sum(x) / len(x)
    my = sum(y) / len(y)
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    dx = math.sqrt(sum((a - mx) ** 2 for a in x))
    dy = math.sqrt(sum((b - my) ** 2 for b in y))
    return num / (dx * dy)


def correlated_pair(rho, n=64):
    """Two zero-mean columns whose sample correlation is rho to machine precision."""
    u = np.zeros(n)
    u[: n // 2] = 1.0
    u[n // 2:] = -1.0
    w = np.resize([1.0, -1.0], n).astype(float)
    w -= w.mean()
    w -= (w @ u) / (u @ u) * u
    b = rho * u + math.sqrt(1.0 - rho * rho) * math.sqrt((u @ u) / (w @ w)) * w
    return u, b


class TestFitPca:
    def test_single_varying_axis(self):
        data = np.column_stack([np.arange(10.0), np.full(10, 3.0), np.full(10, -1.0)])
        model = fit_pca(data, target_variance=0.95)
        assert model.n_components == 1
        assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-12)
        assert model.dropped_fields == [1, 2]

    def test_analytic_two_field_rho_08(self):
        a, b = correlated_pair(0.8)
        model = fit_pca(np.column_stack([a, b]), target_variance=1.0)
        np.testing.assert_allclose(model.explained_variance_ratio, [0.9, 0.1], atol=1e-9)
        # eigenvectors of [[1, rho], [rho, 1]] are (1, 1)/sqrt(2) and (1, -1)/sqrt(2)
        np.testing.assert_allclose(np.abs(model.components),
                                   np.full((2, 2), 1 / math.sqrt(2)), atol=1e-9)

    def test_weather_like_seven_fields_need_three_pcs(self):
        rng = np.random.default_rng(7)
        n = 500
        latent = rng.normal(size=(n, 3)) * np.array([2.0, 1.2, 0.7])
        mix = rng.normal(size=(3, 7))
        data = latent @ mix + 0.23 * rng.normal(size=(n, 7))
        model = fit_pca(data, target_variance=0.95)
        assert model.n_components == 3

    def test_orthonormal_components_and_reconstruction(self):
        rng = np.random.default_rng(11)
        data = rng.normal(size=(100, 10))
        model = fit_pca(data, target_variance=1.0)
        gram = model.components.T @ model.components
        np.testing.assert_allclose(gram, np.eye(model.n_components), atol=1e-9)
        z = (data - model.mean) / model.scale
        recon = transform(model, data) @ model.components.T
        np.testing.assert_allclose(recon, z, atol=1e-9)

    def test_ratios_sum_to_one(self):
        rng = np.random.default_rng(13)
        model = fit_pca(rng.normal(size=(60, 6)), target_variance=1.0)
        assert model.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-9)
        diffs = np.diff(model.explained_variance_ratio)
        assert (diffs <= 1e-12).all()

    def test_all_constant_errors(self):
        with pytest.raises(DataError):
            fit_pca(np.ones((5, 3)))

    def test_bad_target(self):
        with pytest.raises(ParameterError):
            fit_pca(np.random.default_rng(0).normal(size=(5, 3)), target_variance=0.0)

    def test_serialization_round_trip(self):
        model = fit_pca(np.random.default_rng(3).normal(size=(30, 4)), target_variance=0.9)
        clone = PcaModel.from_dict(model.to_dict())
        np.testing.assert_array_equal(clone.components, model.components)
        np.testing.assert_array_equal(clone.mean, model.mean)


class TestTransform:
    def test_mean_row_maps_to_zero(self):
        rng = np.random.default_rng(17)
        data = rng.normal(size=(40, 5))
        model = fit_pca(data, target_variance=1.0)
        scores = transform(model, data.mean(axis=0))
        np.testing.assert_allclose(scores, np.zeros((1, model.n_components)), atol=1e-9)

    def test_orthogonal_projection_preserves_distances(self):
        rng = np.random.default_rng(19)
        data = rng.normal(size=(200, 6))
        model = fit_pca(data, target_variance=1.0)
        z = (data - model.mean) / model.scale
        scores = transform(model, data)
        for i, j in [(0, 1), (5, 17), (100, 42)]:
            orig = np.linalg.norm(z[i] - z[j])
            proj = np.linalg.norm(scores[i] - scores[j])
            assert proj == pytest.approx(orig, abs=1e-9)

    def test_unit_step_along_component(self):
        rng = np.random.default_rng(23)
        data = rng.normal(size=(50, 4))
        model = fit_pca(data, target_variance=1.0)
        row = model.mean + model.scale * model.components[:, 0]
        scores = transform(model, row)[0]
        assert scores[0] > 0
        np.testing.assert_allclose(scores[1:], 0.0, atol=1e-9)

    def test_dimension_mismatch(self):
        model = fit_pca(np.random.default_rng(1).normal(size=(10, 3)))
        with pytest.raises(ParameterError):
            transform(model, np.zeros((2, 5)))


class TestPearsonMatrix:
    def test_self_correlation_is_one(self):
        x = np.arange(5.0)
        corr = pearson_matrix(np.column_stack([x, x]), ["a", "b"])
        assert corr.pair("a", "b") == pytest.approx(1.0, abs=1e-12)

    def test_anticorrelation_is_minus_one(self):
        x = np.arange(5.0)
        corr = pearson_matrix(np.column_stack([x, -x]), ["a", "b"])
        assert corr.pair("a", "b") == pytest.approx(-1.0, abs=1e-12)

    def test_hand_computed_example(self):
        x, y = [1, 2, 3], [2, 4, 7]
        expected = pearson_oracle(x, y)   # 0.9933992677987828
        corr = pearson_matrix(np.column_stack([x, y]).astype(float), ["x", "y"])
        assert corr.pair("x", "y") == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.9933992677987828, abs=1e-15)

    def test_matches_two_pass_oracle_on_random_data(self):
        rng = np.random.default_rng(29)
        data = rng.normal(size=(10, 5))
        names = [f"f{i}" for i in range(5)]
        corr = pearson_matrix(data, names)
        for i in range(5):
            for j in range(5):
                expected = pearson_oracle(data[:, i], data[:, j])
                assert corr.r[i, j] == pytest.approx(expected, abs=1e-12)

    def test_zero_variance_column_flagged(self):
        data = np.column_stack([np.arange(4.0), np.full(4, 2.0)])
        corr = pearson_matrix(data, ["a", "const"])
        assert corr.degenerate == ["const"]
        assert corr.r[0, 1] == 0.0
        assert corr.r[1, 1] == 1.0

    def test_too_few_rows(self):
        with pytest.raises(ParameterError):
            pearson_matrix(np.ones((1, 2)), ["a", "b"])


def matrix_from_pairs(names, pairs):
    n = len(names)
    r = np.eye(n)
    idx = {name: i for i, name in enumerate(names)}
    for a, b, v in pairs:
        r[idx[a], idx[b]] = r[idx[b], idx[a]] = v
    return CorrelationMatrix(features=list(names), r=r)


class TestMulticollinearityFilter:
    def test_high_pair_split_low_pair_kept(self):
        # the 0.783 pair loses a member at threshold 0.7; the 0.676 pair survives
        rng = np.random.default_rng(31)
        n = 400
        z1 = rng.normal(size=n)
        z2 = rng.normal(size=n)
        e = rng.normal(size=(n, 2))
        high_a = z1
        high_b = 0.783 * z1 + math.sqrt(1 - 0.783 ** 2) * e[:, 0]
        low_a = z2
        low_b = 0.676 * z2 + math.sqrt(1 - 0.676 ** 2) * e[:, 1]
        data = np.column_stack([high_a, high_b, low_a, low_b])
        names = ["high_a", "high_b", "low_a", "low_b"]
        corr = pearson_matrix(data, names)
        assert abs(corr.pair("high_a", "high_b") - 0.783) < 0.05
        assert abs(corr.pair("low_a", "low_b") - 0.676) < 0.05
        kept, dropped = multicollinearity_filter(corr, threshold=0.7)
        assert "low_a" in kept and "low_b" in kept
        assert len({"high_a", "high_b"} & set(kept)) == 1
        assert len(dropped) == 1

    def test_exact_engineered_correlations(self):
        r = matrix_from_pairs(["hs", "college", "income"],
                              [("hs", "college", -0.783), ("college", "income", 0.676)])
        kept, dropped = multicollinearity_filter(CorrelationMatrix(["hs", "college", "income"], r.r),
                                                 threshold=0.7)
        assert "income" in kept
        assert len(dropped) == 1 and abs(dropped[0][2]) == pytest.approx(0.783)

    def test_no_violations_keeps_all(self):
        corr = matrix_from_pairs(["a", "b", "c"], [("a", "b", 0.3), ("b", "c", -0.5)])
        kept, dropped = multicollinearity_filter(corr, threshold=0.7)
        assert kept == ["a", "b", "c"]
        assert dropped == []

    def test_threshold_monotone_kept_sets(self):
        rng = np.random.default_rng(37)
        data = rng.normal(size=(50, 6))
        data[:, 3] = 0.9 * data[:, 0] + 0.2 * rng.normal(size=50)
        data[:, 4] = 0.8 * data[:, 1] + 0.3 * rng.normal(size=50)
        names = [f"f{i}" for i in range(6)]
        corr = pearson_matrix(data, names)
        previous = None
        for threshold in (0.3, 0.5, 0.7, 0.9):
            kept, _ = multicollinearity_filter(corr, threshold)
            if previous is not None:
                assert set(previous) <= set(kept)
            previous = kept

    def test_deterministic_tie_break_drops_later_name(self):
        corr = matrix_from_pairs(["alpha", "zeta"], [("alpha", "zeta", 0.95)])
        kept, dropped = multicollinearity_filter(corr, threshold=0.7)
        assert kept == ["alpha"]
        assert dropped[0][0] == "zeta"

    def test_bad_threshold(self):
        corr = matrix_from_pairs(["a", "b"], [])
        with pytest.raises(ParameterError):
            multicollinearity_filter(corr, threshold=1.5)
