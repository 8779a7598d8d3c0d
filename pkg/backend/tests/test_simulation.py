"""Tests for the Monte Carlo harness."""

import functools
import pickle

import numpy as np
import pytest

from models import simulation
from models.simulation import (
    SimulationRunner,
    draw_response,
    generate_population,
    pre_percent,
    run_cell,
    simulate_replicate,
    true_value,
    z_statistic,
)
from utils.errors import ConfigurationError, DegeneratePosteriorError, NumericalError, ReplicateError
from utils.schema import Estimand, Prior, PriorMethod, SimulationConfig

BOTH = [PriorMethod.SW, PriorMethod.NEW]


class TestGeneratePopulation:

    def test_covariate_grid(self):
        x, y = generate_population(20, np.random.default_rng(0))
        assert x[0] == pytest.approx(5 + 10 / 21)
        assert x[-1] == pytest.approx(5 + 200 / 21)
        assert y.shape == (20,)

    @pytest.mark.parametrize("n", [1, 20, 200, 2001])
    def test_covariate_mean_is_ten(self, n):
        x, _ = generate_population(n, np.random.default_rng(0))
        assert x.mean() == pytest.approx(10.0, rel=1e-12)

    def test_outcome_model(self):
        rng = np.random.default_rng(1)
        errors = []
        for _ in range(2000):
            x, y = generate_population(20, rng)
            errors.append(y - 2.0 - 4.0 * x)
        errors = np.concatenate(errors)
        assert abs(errors.mean()) < 4 / np.sqrt(errors.size)
        assert errors.var() == pytest.approx(1.0, abs=0.03)

    def test_true_values(self):
        assert true_value(Estimand.MEAN) == 42.0
        assert true_value(Estimand.SLOPE) == 4.0

    def test_invalid_n(self):
        with pytest.raises(ConfigurationError):
            generate_population(0, np.random.default_rng(0))


class TestDrawResponse:

    def test_full_response(self):
        np.testing.assert_array_equal(draw_response(20, 1.0, np.random.default_rng(0)), np.arange(20))

    def test_fixed_size(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            respondents = draw_response(20, 0.8, rng)
            assert respondents.size == 16
            assert np.unique(respondents).size == 16

    def test_too_few_respondents(self):
        with pytest.raises(ConfigurationError):
            draw_response(20, 0.2, np.random.default_rng(0))

    def test_inclusion_frequency(self):
        rng = np.random.default_rng(3)
        replicates = 20_000
        counts = np.zeros(20)
        for _ in range(replicates):
            counts[draw_response(20, 0.6, rng)] += 1
        se = np.sqrt(0.6 * 0.4 / replicates)
        assert np.all(np.abs(counts / replicates - 0.6) < 4 * se)


class TestPrePercent:

    def test_equal_variances(self):
        assert pre_percent(0.2, 0.2) == 100.0

    def test_published_value(self):
        assert round(pre_percent(0.150521, 0.142537), 2) == 94.70

    def test_smaller_new_variance(self):
        assert pre_percent(1.0, 0.9) < 100

    def test_nonpositive_sw_variance(self):
        with pytest.raises(ConfigurationError):
            pre_percent(0.0, 1.0)


class TestZStatistic:

    def test_hand_example(self):
        assert z_statistic([1, 1, 1, 1], [0, 0, 2, 2]) == pytest.approx(-2.0)

    def test_exact_match_gives_zero(self):
        theta = np.array([0.0, 1.0, 3.0, 2.0, 4.0])
        v = np.full(5, np.var(theta, ddof=1))
        assert z_statistic(v, theta) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_inputs(self):
        with pytest.raises(NumericalError):
            z_statistic([1.0, 1.0, 1.0], [5.0, 5.0, 5.0])

    def test_too_few_samples(self):
        with pytest.raises(ConfigurationError):
            z_statistic([1.0, 2.0], [1.0, 2.0])

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            z_statistic([1.0, 2.0, 3.0], [1.0, 2.0])


@pytest.fixture(scope="module")
def small_cell():
    return run_cell(20, 0.6, BOTH, m=5, replicates=400, seed=11)


class TestRunCell:

    def test_summary_layout(self, small_cell):
        assert small_cell.r == 12
        assert len(small_cell.summaries) == 4
        for estimand in (Estimand.MEAN, Estimand.SLOPE):
            assert small_cell.get(estimand, PriorMethod.SW).pre_percent is None
            assert small_cell.get(estimand, PriorMethod.NEW).pre_percent > 0

    def test_pre_matches_variances(self, small_cell):
        sw = small_cell.get(Estimand.MEAN, PriorMethod.SW)
        new = small_cell.get(Estimand.MEAN, PriorMethod.NEW)
        assert new.pre_percent == pytest.approx(100 * new.mc_variance / sw.mc_variance)

    def test_point_estimates_unbiased(self, small_cell):
        for summary in small_cell.summaries:
            assert abs(summary.mc_mean - summary.true_value) < 4 * summary.mc_mean_se

    def test_summary_ranges(self, small_cell):
        for summary in small_cell.summaries:
            assert 0.0 <= summary.coverage_percent <= 100.0
            assert summary.mean_ci_length > 0
            assert 0 < summary.mean_df < 18
            assert summary.relative_bias == pytest.approx(summary.empirical_bias / summary.mc_variance)

    def test_analytic_bias(self, small_cell):
        for estimand in (Estimand.MEAN, Estimand.SLOPE):
            assert small_cell.get(estimand, PriorMethod.NEW).analytic_bias == 0.0
            assert small_cell.get(estimand, PriorMethod.SW).analytic_bias > 0.0

    def test_sw_draws_do_not_depend_on_other_methods(self, small_cell):
        alone = run_cell(20, 0.6, [PriorMethod.SW], m=5, replicates=400, seed=11)
        assert alone.get(Estimand.MEAN, PriorMethod.SW) == small_cell.get(Estimand.MEAN, PriorMethod.SW)

    def test_reproducible(self):
        a = run_cell(20, 0.8, BOTH, m=3, replicates=30, seed=5)
        b = run_cell(20, 0.8, BOTH, m=3, replicates=30, seed=5)
        assert a == b

    def test_worker_count_does_not_change_results(self):
        serial = run_cell(20, 0.8, BOTH, m=3, replicates=60, seed=9, workers=1)
        parallel = run_cell(20, 0.8, BOTH, m=3, replicates=60, seed=9, workers=2)
        assert serial.model_dump_json() == parallel.model_dump_json()

    def test_seed_changes_results(self):
        a = run_cell(20, 0.8, [PriorMethod.NEW], m=3, replicates=30, seed=5)
        b = run_cell(20, 0.8, [PriorMethod.NEW], m=3, replicates=30, seed=6)
        assert a.summaries[0].mc_mean != b.summaries[0].mc_mean

    def test_custom_prior(self):
        cell = run_cell(20, 0.8, [PriorMethod.CUSTOM], m=3, replicates=30, seed=5,
                        estimands=[Estimand.SLOPE], custom_prior=Prior(nu0=4.0, sigma0_sq=0.0))
        assert cell.summaries[0].method == PriorMethod.CUSTOM
        assert cell.summaries[0].analytic_bias < 0.0
        assert cell.summaries[0].pre_percent is None

    @pytest.mark.parametrize("kwargs", [
        dict(rate=0.1),
        dict(replicates=2),
        dict(m=1),
        dict(level=1.0),
        dict(methods=[]),
        dict(methods=[PriorMethod.SW, PriorMethod.SW]),
    ])
    def test_invalid_cells(self, kwargs):
        args = dict(n=20, rate=0.8, methods=BOTH, m=5, replicates=10, seed=1)
        args.update(kwargs)
        with pytest.raises(ConfigurationError):
            run_cell(**args)

    def test_replicate_failure_reports_provenance(self, monkeypatch):
        def failing(*args, **kwargs):
            raise DegeneratePosteriorError("posterior scale is zero")

        monkeypatch.setattr(simulation, "multiple_impute", failing)
        with pytest.raises(ReplicateError) as excinfo:
            simulate_replicate(20, 0.6, [(PriorMethod.SW, Prior.sw())], 5, 7, 123, 0.95, [Estimand.MEAN])
        assert excinfo.value.replicate == 7
        assert excinfo.value.seed_path == (20, 600, 7, 0)
        assert isinstance(excinfo.value.cause, DegeneratePosteriorError)

    def test_replicate_error_survives_pickling(self):
        error = ReplicateError("n=20,rate=0.6", 3, (20, 600, 3, 0), DegeneratePosteriorError("zero"))
        restored = pickle.loads(pickle.dumps(error))
        assert restored.replicate == 3
        assert restored.seed_path == (20, 600, 3, 0)
        assert str(restored) == str(error)


class TestEmpiricalVersusAnalyticBias:

    def test_sw_small_cell(self):
        cell = run_cell(20, 0.4, [PriorMethod.SW], m=5, replicates=3000, seed=21)
        for summary in cell.summaries:
            assert abs(summary.empirical_bias - summary.analytic_bias) < 4 * summary.empirical_bias_se


class TestSimulationRunner:

    def test_runs_every_cell(self):
        config = SimulationConfig(n_values=[20], rates=[0.8, 0.6], replicates=20, m=3)
        results = SimulationRunner(config).run()
        assert [(c.n, c.rate) for c in results] == [(20, 0.8), (20, 0.6)]
        assert all(len(c.summaries) == 4 for c in results)


# Published values per cell:
# (estimand, n, rate, SW variance, PRE, SW relative bias, SW z, NEW mean CI length, SW coverage, NEW coverage)
PUBLISHED = [
    (Estimand.MEAN, 20, 0.8, 0.066533, 99.2, 0.0624, 9.33, 1.0996, 95.4, 95.0),
    (Estimand.MEAN, 20, 0.6, 0.095951, 98.2, 0.1520, 21.27, 1.4032, 95.9, 94.7),
    (Estimand.MEAN, 20, 0.4, 0.150521, 94.7, 0.3221, 37.23, 1.9213, 96.4, 94.7),
    (Estimand.MEAN, 200, 0.8, 0.006594, 99.8, -0.0086, -1.36, 0.3223, 95.0, 94.9),
    (Estimand.MEAN, 200, 0.6, 0.009069, 99.9, 0.0040, 0.61, 0.3928, 94.8, 94.7),
    (Estimand.MEAN, 200, 0.4, 0.014143, 99.6, 0.0155, 2.29, 0.5170, 94.8, 94.6),
    (Estimand.SLOPE, 20, 0.8, 0.008873, 99.0, 0.0706, 10.39, 0.4020, 95.5, 95.0),
    (Estimand.SLOPE, 20, 0.6, 0.013148, 98.5, 0.1560, 21.21, 0.5175, 95.8, 94.7),
    (Estimand.SLOPE, 20, 0.4, 0.018190, 95.9, 0.3418, 37.81, 0.6696, 96.7, 94.9),
    (Estimand.SLOPE, 200, 0.8, 0.000780, 99.9, 0.0129, 2.03, 0.1121, 95.2, 95.1),
    (Estimand.SLOPE, 200, 0.6, 0.001084, 100.0, 0.0175, 2.69, 0.1364, 95.0, 95.0),
    (Estimand.SLOPE, 200, 0.4, 0.001681, 99.6, 0.0240, 3.60, 0.1789, 95.0, 94.7),
]
SMALL_SAMPLE = [row for row in PUBLISHED if row[1] == 20]


@functools.lru_cache(maxsize=None)
def published_cell(n, rate):
    return run_cell(n, rate, BOTH, m=5, replicates=50_000, seed=20040401)


@pytest.mark.slow
class TestPublishedTables:

    @pytest.mark.parametrize("row", PUBLISHED)
    def test_every_cell(self, row):
        estimand, n, rate, _, _, _, _, _, sw_coverage, new_coverage = row
        cell = published_cell(n, rate)
        sw = cell.get(estimand, PriorMethod.SW)
        new = cell.get(estimand, PriorMethod.NEW)
        for summary in (sw, new):
            assert abs(summary.mc_mean - summary.true_value) < 4 * summary.mc_mean_se
        assert abs(new.relative_bias) < 0.02
        assert abs(new.z_statistic) < 4
        assert abs(sw.coverage_percent - sw_coverage) < 0.7
        assert abs(new.coverage_percent - new_coverage) < 0.7

    @pytest.mark.parametrize("row", SMALL_SAMPLE)
    def test_small_sample_cell(self, row):
        estimand, n, rate, sw_variance, pre, sw_rb, sw_z, new_length, _, _ = row
        cell = published_cell(n, rate)
        sw = cell.get(estimand, PriorMethod.SW)
        new = cell.get(estimand, PriorMethod.NEW)
        assert sw.mc_variance == pytest.approx(sw_variance, rel=0.03)
        assert abs(new.pre_percent - pre) < 1.5
        assert abs(sw.relative_bias - sw_rb) < 0.03
        assert sw.z_statistic == pytest.approx(sw_z, rel=0.15)
        assert new.mean_ci_length == pytest.approx(new_length, rel=0.03)
