"""
Request-level services shared by the CLI and the API routers.
"""

import logging

import numpy as np

from models.combiner import (
    LinearEstimatorSpec,
    alternative_variance,
    analyze_regression,
    barnard_rubin_df,
    confidence_interval,
)
from models.imputation import RegressionImputer
from models.moments import coefficient_moments, linear_estimator_moments
from models.regression import DesignPartition
from utils import rng as streams
from utils.errors import ConfigurationError
from utils.schema import (
    CoefficientInterval,
    EstimandMoments,
    ImputeRequest,
    ImputeResponse,
    MomentsRequest,
    MomentsResponse,
    Prior,
)

logger = logging.getLogger(__name__)


def moments_report(request: MomentsRequest) -> MomentsResponse:
    """Exact moments for a design, prior and optional scalar contrasts"""
    try:
        x_all = np.asarray(request.design.x, dtype=float)
    except ValueError:
        raise ConfigurationError("design.x must be a list of equal-length rows")
    design = DesignPartition(x_all, np.asarray(request.design.respondents, dtype=np.intp))
    report = coefficient_moments(design, request.sigma2, request.m, request.prior)

    estimands = []
    for x0 in request.contrasts:
        spec = LinearEstimatorSpec.from_contrast(design, x0)
        linear = linear_estimator_moments(spec, design, request.sigma2, request.m, request.prior)
        estimands.append(EstimandMoments(x0=list(x0), var_point=linear.var_point,
                                         bias_rubin=linear.bias_rubin, u_term=linear.u_term))

    return MomentsResponse(
        lam=report.params.lam,
        lam0=report.params.lam0,
        lam1=report.params.lam1,
        var_point=report.var_point.tolist(),
        expected_within=report.expected_within.tolist(),
        expected_between=report.expected_between.tolist(),
        bias_rubin=report.bias_rubin.tolist(),
        sigma2=report.sigma2,
        estimands=estimands,
    )


def impute_report(request: ImputeRequest) -> ImputeResponse:
    """Multiply impute a dataset and combine the regression coefficients"""
    try:
        x = np.asarray(request.x, dtype=float)
    except ValueError:
        raise ConfigurationError("x must be a list of equal-length rows")
    y = np.array([np.nan if value is None else value for value in request.y], dtype=float)
    if x.ndim != 2:
        raise ConfigurationError("x must be a list of equal-length rows")

    prior = Prior.from_method(request.method, request.nu0, request.sigma0_sq)
    imputer = RegressionImputer(prior, request.m)
    design, mi = imputer.impute_dataset(x, y, streams.stream(request.seed, (0,)))
    estimate = analyze_regression(design, mi)
    alternative = alternative_variance(mi.fit, estimate)
    complete_df = design.n - design.p

    coefficients = []
    for index in range(design.p):
        within = float(estimate.within[index, index])
        between = float(estimate.between[index, index])
        df = barnard_rubin_df(within, between, request.m, complete_df)
        interval = confidence_interval(float(estimate.point[index]), float(estimate.rubin_total[index, index]),
                                       df, request.level)
        coefficients.append(CoefficientInterval(
            index=index,
            estimate=interval.center,
            within=within,
            between=between,
            rubin_variance=float(estimate.rubin_total[index, index]),
            alternative_variance=float(alternative[index, index]),
            df=df,
            lower=interval.lower,
            upper=interval.upper,
        ))

    logger.info(f"Imputed {design.n - design.r} missing outcomes {request.m} times with method={request.method.value}")
    return ImputeResponse(
        m=mi.m,
        completed=mi.completed.tolist(),
        sigma_star_sq=[draw.sigma_star_sq for draw in mi.draws],
        coefficients=coefficients,
    )
