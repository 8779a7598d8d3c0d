"""Tests for the respondent design and OLS fitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid_design, random_design
from models.regression import (
    DesignPartition,
    full_sample_fit,
    gram_inverse,
    hat_value,
    ols_fit,
    partitioned_inverse_expansion,
    projection_matrices,
)
from utils.errors import ConfigurationError, RankDeficientError


class TestDesignPartition:

    def test_missing_is_sorted_complement(self):
        design = grid_design(10, [7, 0, 3, 9, 5])
        np.testing.assert_array_equal(design.missing, [1, 2, 4, 6, 8])
        np.testing.assert_array_equal(design.respondents, [7, 0, 3, 9, 5])
        assert (design.n, design.p, design.r) == (10, 2, 5)

    def test_views_follow_index_sets(self):
        design = grid_design(10, [7, 0, 3, 9, 5])
        np.testing.assert_array_equal(design.x_resp, design.x_all[[7, 0, 3, 9, 5]])
        np.testing.assert_array_equal(design.x_miss, design.x_all[[1, 2, 4, 6, 8]])

    def test_assemble_places_values_by_unit(self):
        design = grid_design(8, [4, 0, 6, 2, 7])
        y = design.assemble(np.array([40.0, 0.0, 60.0, 20.0, 70.0]), np.array([10.0, 30.0, 50.0]))
        np.testing.assert_array_equal(y, [0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0])

    def test_too_few_respondents(self):
        with pytest.raises(ConfigurationError, match="r > p \\+ 2"):
            grid_design(10, [0, 1, 2, 3])

    def test_duplicate_respondents(self):
        with pytest.raises(ConfigurationError, match="distinct"):
            grid_design(10, [0, 1, 2, 3, 3])

    def test_respondent_out_of_range(self):
        with pytest.raises(ConfigurationError, match="outside"):
            grid_design(10, [0, 1, 2, 3, 10])

    def test_rank_deficient_respondents_report_rank(self):
        x = np.column_stack([np.ones(10), np.arange(10.0)])
        x[:6, 1] = 1.0
        with pytest.raises(RankDeficientError) as excinfo:
            DesignPartition(x, np.arange(6))
        assert excinfo.value.rank == 1
        assert excinfo.value.p == 2

    def test_collinear_columns(self):
        x = np.column_stack([np.ones(10), np.arange(10.0), 2.0 * np.arange(10.0)])
        with pytest.raises(RankDeficientError):
            DesignPartition(x, np.arange(8))

    def test_first_r(self, design_20_16):
        np.testing.assert_array_equal(design_20_16.respondents, np.arange(16))
        np.testing.assert_array_equal(design_20_16.missing, [16, 17, 18, 19])

    def test_arrays_are_read_only(self):
        design = grid_design(10, np.arange(6))
        with pytest.raises(ValueError):
            design.x_all[0, 0] = 1.0
        with pytest.raises(ValueError):
            design.gram_inv_resp[0, 0] = 1.0


class TestOlsFit:

    def test_exact_fit_has_zero_variance(self, design_20_16):
        y = design_20_16.x_resp @ np.array([2.0, 4.0])
        fit = ols_fit(design_20_16, y)
        np.testing.assert_allclose(fit.beta_hat, [2.0, 4.0], rtol=1e-10)
        assert fit.sigma2_hat == 0.0
        assert fit.dof == 14

    def test_large_outcome_level_keeps_residual_variance(self, design_20_16):
        rng = np.random.default_rng(21)
        noise = rng.standard_normal(design_20_16.r)
        signal = design_20_16.x_resp @ np.array([2.0, 4.0]) + noise
        fit = ols_fit(design_20_16, 1e11 + signal)
        reference = ols_fit(design_20_16, signal)
        assert fit.sigma2_hat > 0.1
        assert fit.sigma2_hat == pytest.approx(reference.sigma2_hat, rel=1e-2)
        assert fit.beta_hat[1] == pytest.approx(reference.beta_hat[1], abs=1e-3)

    def test_large_outcome_level_exact_fit(self, design_20_16):
        y = 1e11 + design_20_16.x_resp @ np.array([2.0, 4.0])
        assert ols_fit(design_20_16, y).sigma2_hat == 0.0

    def test_intercept_only_mean_and_variance(self):
        design = DesignPartition(np.ones((8, 1)), np.arange(5))
        fit = ols_fit(design, np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        np.testing.assert_allclose(fit.beta_hat, [3.0])
        assert fit.sigma2_hat == pytest.approx(2.5)
        np.testing.assert_allclose(fit.xtx_inv, [[0.2]])

    def test_matches_explicit_two_by_two_inverse(self):
        rng = np.random.default_rng(3)
        x = np.column_stack([np.ones(10), rng.standard_normal(10)])
        y = x @ np.array([1.0, -2.0]) + rng.standard_normal(10)
        design = DesignPartition(x, np.arange(10))
        fit = ols_fit(design, y)

        a, b, d = x[:, 0] @ x[:, 0], x[:, 0] @ x[:, 1], x[:, 1] @ x[:, 1]
        inv = np.array([[d, -b], [-b, a]]) / (a * d - b * b)
        beta = inv @ (x.T @ y)
        resid = y - x @ beta
        np.testing.assert_allclose(fit.beta_hat, beta, rtol=1e-10)
        np.testing.assert_allclose(fit.xtx_inv, inv, rtol=1e-10)
        assert fit.sigma2_hat == pytest.approx(resid @ resid / 8, rel=1e-10)

    def test_matches_numpy_lstsq(self):
        design = random_design(11, 30, 4, 20)
        rng = np.random.default_rng(0)
        y = rng.standard_normal(20)
        fit = ols_fit(design, y)
        np.testing.assert_allclose(fit.beta_hat, np.linalg.lstsq(design.x_resp, y, rcond=None)[0], rtol=1e-10)

    def test_wrong_length(self, design_20_16):
        with pytest.raises(ConfigurationError):
            ols_fit(design_20_16, np.zeros(15))

    def test_non_finite_outcome(self, design_20_16):
        y = np.zeros(16)
        y[3] = np.nan
        with pytest.raises(ConfigurationError, match="non-finite"):
            ols_fit(design_20_16, y)

    def test_cov_factor_reproduces_inverse(self, design_20_16):
        fit = ols_fit(design_20_16, np.arange(16.0) ** 1.5)
        np.testing.assert_allclose(fit.cov_factor @ fit.cov_factor.T, fit.xtx_inv, rtol=1e-12)

    def test_full_sample_fit_uses_all_units(self, design_20_16):
        y = np.linspace(0.0, 1.0, 20) ** 2
        fit = full_sample_fit(design_20_16, y)
        assert fit.dof == 18
        np.testing.assert_allclose(fit.beta_hat, np.linalg.lstsq(design_20_16.x_all, y, rcond=None)[0], rtol=1e-10)


class TestHatValue:

    def test_intercept_only_is_one_over_r(self):
        design = DesignPartition(np.ones((9, 1)), np.arange(6))
        fit = ols_fit(design, np.arange(6.0))
        assert hat_value(fit, [1.0], [1.0]) == pytest.approx(1.0 / 6.0)

    def test_symmetric(self, design_20_16):
        fit = ols_fit(design_20_16, np.arange(16.0))
        x_i, x_j = design_20_16.x_all[2], design_20_16.x_all[18]
        assert hat_value(fit, x_i, x_j) == pytest.approx(hat_value(fit, x_j, x_i), rel=1e-14)

    def test_matches_projection_matrix_entry(self):
        rng = np.random.default_rng(5)
        x = np.column_stack([np.ones(8), rng.standard_normal(8)])
        design = DesignPartition(x, np.arange(8))
        fit = ols_fit(design, rng.standard_normal(8))
        proj, resid_maker = projection_matrices(x)
        assert hat_value(fit, x[0], x[0]) == pytest.approx(proj[0, 0], rel=1e-10)
        np.testing.assert_allclose(proj + resid_maker, np.eye(8), atol=1e-12)

    def test_dimension_mismatch(self, design_20_16):
        fit = ols_fit(design_20_16, np.arange(16.0))
        with pytest.raises(ConfigurationError):
            hat_value(fit, [1.0, 2.0, 3.0], [1.0, 2.0])


class TestPartitionedInverse:

    def test_no_missing_returns_full_inverse(self):
        design = grid_design(12, np.arange(12))
        np.testing.assert_array_equal(partitioned_inverse_expansion(design), design.gram_inv_all)

    def test_intercept_only_scalar_identity(self):
        design = DesignPartition(np.ones((10, 1)), np.arange(6))
        expansion = partitioned_inverse_expansion(design)
        assert expansion[0, 0] == pytest.approx(1 / 10 + 4 / 100 + 16 / (100 * 6))
        assert expansion[0, 0] == pytest.approx(1 / 6)

    def test_random_design_matches_direct_inverse(self):
        design = random_design(2, 12, 3, 7)
        direct = np.linalg.inv(design.x_resp.T @ design.x_resp)
        np.testing.assert_allclose(partitioned_inverse_expansion(design), direct, rtol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 5), data=st.data())
    def test_identity_on_random_designs(self, seed, p, data):
        n = data.draw(st.integers(p + 6, 50))
        r = data.draw(st.integers(p + 3, n))
        design = random_design(seed, n, p, r)
        direct = gram_inverse(design.x_resp)
        scale = np.max(np.abs(direct))
        np.testing.assert_allclose(partitioned_inverse_expansion(design), direct, rtol=1e-10, atol=1e-10 * scale)
