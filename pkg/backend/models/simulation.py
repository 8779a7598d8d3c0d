"""
Monte Carlo harness for the factorial imputation experiment.

Each replicate draws a population from Y = 2 + 4x + e on the fixed grid
x_i = 5 + 10 i / (n + 1), keeps a uniformly drawn subset of exactly
r = round(rate * n) respondents, multiply imputes the rest under every
requested method and records, per estimand, the Rubin point and variance
estimates together with interval diagnostics.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from models.combiner import (
    alternative_variance,
    analyze_regression,
    barnard_rubin_df,
    confidence_interval,
)
from models.imputation import multiple_impute
from models.moments import coefficient_moments
from models.regression import DesignPartition
from utils import rng as streams
from utils.errors import ConfigurationError, ImputationError, NumericalError, ReplicateError
from utils.schema import (
    SIMULATION_P,
    CellResult,
    Estimand,
    EstimandSummary,
    Prior,
    PriorMethod,
    SimulationConfig,
    respondent_count,
)

logger = logging.getLogger(__name__)

TRUE_BETA = np.array([2.0, 4.0])

# Covariate rows defining each estimand as x0'beta
ESTIMAND_CONTRASTS = {
    Estimand.MEAN: np.array([1.0, 10.0]),
    Estimand.SLOPE: np.array([0.0, 1.0]),
}

# Imputation substream tag per method; fixed so a method's draws do not
# depend on which other methods run alongside it
METHOD_TAGS = {
    PriorMethod.SW: 0,
    PriorMethod.NEW: 1,
    PriorMethod.CUSTOM: 2,
}

# Columns of the per-replicate record
THETA, RUBIN, ALTERNATIVE, HIT, LENGTH, DF, ANALYTIC_BIAS = range(7)
N_COLUMNS = 7


def true_value(estimand: Estimand) -> float:
    return float(ESTIMAND_CONTRASTS[estimand] @ TRUE_BETA)


def covariate_grid(n: int) -> np.ndarray:
    """x_i = 5 + 10 i / (n + 1), i = 1..n"""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    return 5.0 + 10.0 * np.arange(1, n + 1) / (n + 1)


def design_matrix(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(x), x])


def generate_population(n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed covariate grid and y_i = 2 + 4 x_i + e_i with standard normal errors"""
    x = covariate_grid(n)
    y = TRUE_BETA[0] + TRUE_BETA[1] * x + rng.standard_normal(n)
    return x, y


def draw_response(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Exactly round(rate * n) respondents drawn without replacement, as sorted 0-based indices"""
    if not 0.0 < rate <= 1.0:
        raise ConfigurationError(f"response rate {rate} outside (0, 1]")
    r = respondent_count(n, rate)
    if r <= SIMULATION_P + 2:
        raise ConfigurationError(f"n={n}, rate={rate} gives r={r} <= p + 2 = {SIMULATION_P + 2}")
    return np.sort(rng.choice(n, size=r, replace=False))


def pre_percent(var_sw: float, var_new: float) -> float:
    """Percentage relative efficiency 100 * Var(new) / Var(SW)"""
    if not var_sw > 0.0:
        raise ConfigurationError(f"var_sw must be positive, got {var_sw}")
    return 100.0 * var_new / var_sw


def _mean(values: np.ndarray) -> float:
    return math.fsum(values) / values.size


def _bias_parts(vhat_samples: Sequence[float], theta_samples: Sequence[float]) -> Tuple[float, float, float]:
    """(E_L(V) - Var_L(theta), per-replicate standard deviation of that contrast, Var_L(theta))"""
    v = np.asarray(vhat_samples, dtype=float)
    theta = np.asarray(theta_samples, dtype=float)
    if v.shape != theta.shape or v.ndim != 1:
        raise ConfigurationError(f"samples must be equal-length vectors, got {v.shape} and {theta.shape}")
    size = v.size
    if size < 3:
        raise ConfigurationError(f"need at least 3 replicates, got {size}")
    mean_v = _mean(v)
    dev = theta - _mean(theta)
    sq_dev = dev * dev
    var_theta = math.fsum(sq_dev) / (size - 1)
    contrast = v - mean_v + var_theta - sq_dev
    spread = math.sqrt(math.fsum(contrast * contrast) / size)
    return mean_v - var_theta, spread, var_theta


def z_statistic(vhat_samples: Sequence[float], theta_samples: Sequence[float]) -> float:
    """
    z for H0: E(V_hat) = Var(theta_hat),

        sqrt(L) [E_L(V) - Var_L(theta)] / sqrt(E_L{[V - E_L(V) + Var_L(theta) - (theta - E_L(theta))^2]^2})

    Raises:
        NumericalError: the denominator is zero
    """
    bias, spread, _ = _bias_parts(vhat_samples, theta_samples)
    if spread == 0.0:
        raise NumericalError("z-statistic denominator is zero")
    return math.sqrt(len(vhat_samples)) * bias / spread


def cell_label(n: int, rate: float) -> str:
    return f"n={n},rate={rate}"


def simulate_replicate(n: int, rate: float, priors: Sequence[Tuple[PriorMethod, Prior]], m: int,
                       replicate: int, seed: int, level: float,
                       estimands: Sequence[Estimand]) -> np.ndarray:
    """
    One Monte Carlo replicate.

    Returns:
        Array of shape (len(estimands), len(priors), N_COLUMNS)
    """
    population_path = streams.seed_path(n, rate, replicate, streams.STAGE_POPULATION)
    try:
        x, y = generate_population(n, streams.stream(seed, population_path))
        respondents = draw_response(n, rate, streams.stream(
            seed, streams.seed_path(n, rate, replicate, streams.STAGE_RESPONSE)))
        design = DesignPartition(design_matrix(x), respondents)
        y_resp = y[respondents]
        complete_df = design.n - design.p

        record = np.empty((len(estimands), len(priors), N_COLUMNS))
        for b, (method, prior) in enumerate(priors):
            imputation_rng = streams.stream(seed, streams.seed_path(
                n, rate, replicate, streams.STAGE_IMPUTATION, METHOD_TAGS[method]))
            mi = multiple_impute(design, y_resp, prior, m, imputation_rng)
            beta_estimate = analyze_regression(design, mi)
            exact_bias = coefficient_moments(design, 1.0, m, prior).bias_rubin

            for a, estimand in enumerate(estimands):
                x0 = ESTIMAND_CONTRASTS[estimand]
                est = beta_estimate.contrast(x0)
                point = float(est.point[0])
                total = float(est.rubin_total[0, 0])
                df = barnard_rubin_df(float(est.within[0, 0]), float(est.between[0, 0]), m, complete_df)
                interval = confidence_interval(point, total, df, level)
                record[a, b, THETA] = point
                record[a, b, RUBIN] = total
                record[a, b, ALTERNATIVE] = float(alternative_variance(mi.fit, est, x0[None, :])[0, 0])
                record[a, b, HIT] = float(interval.covers(true_value(estimand)))
                record[a, b, LENGTH] = interval.length
                record[a, b, DF] = df
                record[a, b, ANALYTIC_BIAS] = float(x0 @ exact_bias @ x0)
        return record
    except (ImputationError, np.linalg.LinAlgError, FloatingPointError) as e:
        raise ReplicateError(cell_label(n, rate), replicate, population_path, e)


def _simulate_batch(args):
    """
    Run a contiguous block of replicates.

    Module level so ProcessPoolExecutor can pickle it.
    """
    start, stop, n, rate, priors, m, seed, level, estimands = args
    block = np.empty((stop - start, len(estimands), len(priors), N_COLUMNS))
    for offset, replicate in enumerate(range(start, stop)):
        block[offset] = simulate_replicate(n, rate, priors, m, replicate, seed, level, estimands)
    return start, block


def _summarize(estimand: Estimand, method: PriorMethod, records: np.ndarray) -> EstimandSummary:
    theta = records[:, THETA]
    rubin = records[:, RUBIN]
    size = theta.size
    bias, spread, var_theta = _bias_parts(rubin, theta)
    if spread == 0.0:
        raise NumericalError(f"degenerate Monte Carlo output for {estimand.value}/{method.value}")
    mean_alternative = _mean(records[:, ALTERNATIVE])
    coverage = _mean(records[:, HIT])
    return EstimandSummary(
        estimand=estimand,
        method=method,
        true_value=true_value(estimand),
        mc_mean=_mean(theta),
        mc_mean_se=math.sqrt(var_theta / size),
        mc_variance=var_theta,
        mean_rubin_variance=_mean(rubin),
        relative_bias=bias / var_theta,
        z_statistic=math.sqrt(size) * bias / spread,
        empirical_bias=bias,
        empirical_bias_se=spread / math.sqrt(size),
        analytic_bias=_mean(records[:, ANALYTIC_BIAS]),
        mean_alternative_variance=mean_alternative,
        alternative_relative_bias=(mean_alternative - var_theta) / var_theta,
        mean_ci_length=_mean(records[:, LENGTH]),
        coverage_percent=100.0 * coverage,
        coverage_se=100.0 * math.sqrt(coverage * (1.0 - coverage) / size),
        mean_df=_mean(records[:, DF]),
    )


def _chunk_bounds(replicates: int, n_chunks: int) -> List[Tuple[int, int]]:
    edges = np.linspace(0, replicates, n_chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_cell(n: int, rate: float, methods: Sequence[PriorMethod], m: int, replicates: int, seed: int,
             level: float = 0.95, estimands: Optional[Sequence[Estimand]] = None,
             custom_prior: Optional[Prior] = None, workers: int = 1,
             show_progress: bool = False) -> CellResult:
    """
    Simulate one (n, rate) cell under every method.

    All methods share the population and response draws of a replicate.
    Records are assembled in replicate order before aggregation, so the result
    does not depend on the worker count.

    Raises:
        ConfigurationError: invalid cell parameters
        ReplicateError: a replicate failed; carries its index and seed path
    """
    estimands = list(estimands or [Estimand.MEAN, Estimand.SLOPE])
    methods = [PriorMethod(method) for method in methods]
    if not methods:
        raise ConfigurationError("at least one method is required")
    if len(set(methods)) != len(methods):
        raise ConfigurationError("methods must be distinct")
    if replicates < 3:
        raise ConfigurationError(f"need at least 3 replicates, got {replicates}")
    if m < 2:
        raise ConfigurationError(f"need m >= 2 imputations, got {m}")
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"confidence level must be in (0, 1), got {level}")
    r = respondent_count(n, rate)
    if not 0.0 < rate <= 1.0 or r <= SIMULATION_P + 2:
        raise ConfigurationError(f"cell n={n}, rate={rate} needs r > p + 2, got r={r}")

    custom_prior = custom_prior or Prior()
    priors = [(method, Prior.from_method(method, custom_prior.nu0, custom_prior.sigma0_sq)) for method in methods]
    workers = max(1, int(workers))
    n_chunks = min(replicates, workers * 4) if workers > 1 else min(replicates, 100)
    batch_args = [
        (start, stop, n, rate, priors, m, seed, level, estimands)
        for start, stop in _chunk_bounds(replicates, n_chunks)
    ]
    logger.info(
        f"Running cell n={n}, rate={rate} (r={r}): methods={[p.value for p in methods]}, "
        f"m={m}, L={replicates}, workers={workers}"
    )

    blocks: Dict[int, np.ndarray] = {}
    pbar = tqdm(total=replicates, desc=f"Cell n={n} r/n={rate}", unit="rep", ncols=100,
                disable=not show_progress)
    try:
        if workers == 1:
            for args in batch_args:
                start, block = _simulate_batch(args)
                blocks[start] = block
                pbar.update(block.shape[0])
        else:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = [executor.submit(_simulate_batch, args) for args in batch_args]
                for future in as_completed(futures):
                    start, block = future.result()
                    blocks[start] = block
                    pbar.update(block.shape[0])
    finally:
        pbar.close()

    records = np.concatenate([blocks[start] for start in sorted(blocks)], axis=0)

    summaries = []
    for a, estimand in enumerate(estimands):
        by_method = {method: _summarize(estimand, method, records[:, a, b, :]) for b, method in enumerate(methods)}
        sw = by_method.get(PriorMethod.SW)
        for method, summary in by_method.items():
            if sw is not None and method != PriorMethod.SW:
                summary = summary.model_copy(update={"pre_percent": pre_percent(sw.mc_variance, summary.mc_variance)})
            summaries.append(summary)

    logger.info(f"Finished cell n={n}, rate={rate}")
    return CellResult(n=n, rate=rate, r=r, m=m, replicates=replicates, seed=seed, summaries=summaries)


class SimulationRunner:
    """Runs the full factorial described by a SimulationConfig"""

    def __init__(self, config: SimulationConfig, workers: int = 1, show_progress: bool = False):
        self.config = config
        self.workers = max(1, int(workers))
        self.show_progress = show_progress
        logger.info(
            f"SimulationRunner initialized: n={config.n_values}, rates={config.rates}, "
            f"methods={[m.value for m in config.methods]}, L={config.replicates}, seed={config.seed}"
        )

    def cells(self) -> List[Tuple[int, float]]:
        return [(n, rate) for n in self.config.n_values for rate in self.config.rates]

    def run_one(self, n: int, rate: float) -> CellResult:
        config = self.config
        return run_cell(
            n=n,
            rate=rate,
            methods=config.methods,
            m=config.m,
            replicates=config.replicates,
            seed=config.seed,
            level=config.level,
            estimands=config.estimands,
            custom_prior=Prior(nu0=config.custom_nu0, sigma0_sq=config.custom_sigma0_sq),
            workers=self.workers,
            show_progress=self.show_progress,
        )

    def run(self) -> List[CellResult]:
        results = [self.run_one(n, rate) for n, rate in self.cells()]
        logger.info(f"Completed {len(results)} cells")
        return results
