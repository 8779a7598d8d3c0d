"""
Exact finite-sample moments of the multiple imputation estimators.

Nothing here samples. These closed forms are the analytic side of every
stochastic check in the package.

Under a scaled inverse chi-square prior (nu0, sigma0^2) the posterior draw
satisfies E(sigma*^2) = lam_eff * sigma^2 with

    lam_eff = lam0 + lam1 * sigma0^2 / sigma^2,

and lam_eff takes the place of the Schenker-Welsh inflation factor
lam = (r - p) / (r - p - 2) in every formula below.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from models.combiner import LinearEstimatorSpec
from models.regression import DesignPartition
from utils.errors import ConfigurationError
from utils.schema import Prior

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LambdaParams:
    """Inflation factors of the posterior draw of sigma^2"""
    lam: float
    lam0: float
    lam1: float

    def effective(self, sigma0_sq: float, sigma2: float) -> float:
        """E(sigma*^2) / sigma^2"""
        return self.lam0 + self.lam1 * sigma0_sq / sigma2


@dataclass(frozen=True, eq=False)
class MomentReport:
    """Exact moments for the imputed regression coefficient"""
    var_point: np.ndarray
    expected_within: np.ndarray
    expected_between: np.ndarray
    bias_rubin: np.ndarray
    sigma2: float
    params: LambdaParams


class LinearMoments(NamedTuple):
    var_point: float
    bias_rubin: float
    u_term: float


@dataclass(frozen=True, eq=False)
class VarianceDecomposition:
    """Var(beta_M) = sampling + missingness + imputation"""
    sampling: np.ndarray
    missingness: np.ndarray
    imputation: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.sampling + self.missingness + self.imputation


def _check_sigma2(sigma2: float) -> None:
    if not sigma2 > 0.0:
        raise ConfigurationError(f"sigma2 must be positive, got {sigma2}")


def _check_m(m: int) -> None:
    if m < 2:
        raise ConfigurationError(f"need m >= 2 imputations, got {m}")


def _sym(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def lambda_params(r: int, p: int, prior: Prior) -> LambdaParams:
    """
    lam = (r-p)/(r-p-2), lam0 = (r-p)/(nu0+r-p-2), lam1 = nu0/(nu0+r-p-2).

    Raises:
        ConfigurationError: r - p - 2 <= 0 or nu0 + r - p - 2 <= 0
    """
    dof = r - p
    if dof - 2 <= 0:
        raise ConfigurationError(f"need r > p + 2, got r={r}, p={p}")
    denom = prior.nu0 + dof - 2
    if denom <= 0:
        raise ConfigurationError(f"nu0 + r - p - 2 must be positive, got {denom}")
    return LambdaParams(lam=dof / (dof - 2), lam0=dof / denom, lam1=prior.nu0 / denom)


def posterior_mean_sigma(r: int, p: int, prior: Prior, sigma2: float) -> float:
    """Unconditional E(sigma*^2) = (nu0 sigma0^2 + (r - p) sigma^2) / (nu0 + r - p - 2)"""
    denom = prior.nu0 + r - p - 2
    if denom <= 0:
        raise ConfigurationError(f"nu0 + r - p - 2 must be positive, got {denom}")
    return (prior.nu0 * prior.sigma0_sq + (r - p) * sigma2) / denom


def _lam_eff(design: DesignPartition, sigma2: float, prior: Prior) -> float:
    return lambda_params(design.r, design.p, prior).effective(prior.sigma0_sq, sigma2)


def imputed_covariance(design: DesignPartition, i: int, j: int, k: int, s: int,
                       sigma2: float, prior: Prior) -> float:
    """
    Covariance between entries i and j of completed datasets k and s.

    Units are 0-based, imputations 1-based. Observed entries are the same in
    every completed dataset, so observed pairs return delta_ij sigma^2.

        observed i, imputed j        h_ij sigma^2
        imputed i, j, k != s         h_ij sigma^2
        imputed i != j, k == s       (1 + lam) h_ij sigma^2
        imputed i == j, k == s       (1 + lam) h_ii sigma^2 + lam sigma^2
    """
    for unit in (i, j):
        if not 0 <= unit < design.n:
            raise ConfigurationError(f"unit index {unit} outside 0..{design.n - 1}")
    if k < 1 or s < 1:
        raise ConfigurationError(f"imputation indices are 1-based, got k={k}, s={s}")
    _check_sigma2(sigma2)

    obs_i = bool(design.is_respondent[i])
    obs_j = bool(design.is_respondent[j])
    if obs_i and obs_j:
        return sigma2 if i == j else 0.0

    h_ij = float(design.x_all[i] @ design.gram_inv_resp @ design.x_all[j])
    if obs_i or obs_j or k != s:
        return h_ij * sigma2
    lam = _lam_eff(design, sigma2, prior)
    cov = (1.0 + lam) * h_ij * sigma2
    if i == j:
        cov += lam * sigma2
    return cov


def coefficient_moments(design: DesignPartition, sigma2: float, m: int, prior: Prior) -> MomentReport:
    """
    Exact moments of the imputed regression coefficient beta_{M,n}.

        Var(beta_M)  = G_r s2 + lam/M (G_r - G_n) s2
        E(W)         = G_n {1 + (lam - 1)(n - r)/(n - p)} s2
        E(B)         = lam (G_r - G_n) s2
        Bias(T)      = (lam - 1) {G_n (n - r)/(n - p) + G_r - G_n} s2

    with G_r = (X_r'X_r)^-1, G_n = (X_n'X_n)^-1 and lam the effective factor.
    """
    _check_sigma2(sigma2)
    _check_m(m)
    params = lambda_params(design.r, design.p, prior)
    lam = params.effective(prior.sigma0_sq, sigma2)
    g_r = design.gram_inv_resp
    g_n = design.gram_inv_all
    diff = g_r - g_n
    share = (design.n - design.r) / (design.n - design.p)

    var_point = _sym(g_r * sigma2 + (lam / m) * diff * sigma2)
    expected_within = _sym(g_n * (1.0 + (lam - 1.0) * share) * sigma2)
    expected_between = _sym(lam * diff * sigma2)
    bias_rubin = _sym((lam - 1.0) * (g_n * share + diff) * sigma2)
    logger.debug(f"Exact moments for n={design.n}, r={design.r}, p={design.p}, m={m}, lam_eff={lam:.6g}")
    return MomentReport(
        var_point=var_point,
        expected_within=expected_within,
        expected_between=expected_between,
        bias_rubin=bias_rubin,
        sigma2=sigma2,
        params=params,
    )


def linear_estimator_moments(spec: LinearEstimatorSpec, design: DesignPartition, sigma2: float, m: int,
                      prior: Prior) -> LinearMoments:
    """
    Exact variance and Rubin-variance bias of a congenial linear estimator.

    Congeniality (Cov(theta_n, theta_inf - theta_n) = 0) is assumed, not checked;
    see spec_congeniality_gap.

    Returns:
        LinearMoments(var_point, bias_rubin, u_term) with u_term free of sigma^2
    """
    if spec.n != design.n:
        raise ConfigurationError(f"estimator has n={spec.n} but design has n={design.n}")
    _check_sigma2(sigma2)
    _check_m(m)
    lam = _lam_eff(design, sigma2, prior)

    obs, miss = design.respondents, design.missing
    alpha_o = spec.alpha[obs]
    alpha_m = spec.alpha[miss]
    # h_ij for every unit i against every missing unit j
    h_all_m = design.x_all @ design.gram_inv_resp @ design.x_miss.T
    h_om = h_all_m[obs]
    h_mm = h_all_m[miss]

    quad_mm = float(alpha_m @ h_mm @ alpha_m)
    var_point = (
        float(alpha_o @ alpha_o) + 2.0 * float(alpha_o @ h_om @ alpha_m) + quad_mm
        + (lam / m) * (quad_mm + float(alpha_m @ alpha_m))
    ) * sigma2

    omega_mm = spec.omega[np.ix_(miss, miss)]
    u_term = float(np.sum((omega_mm + np.outer(alpha_m, alpha_m)) * (h_mm + np.eye(miss.size))))
    residual = 2.0 * float(np.sum(spec.omega[:, miss] * h_all_m))
    bias_rubin = residual * sigma2 + (lam - 1.0) * u_term * sigma2
    return LinearMoments(var_point=var_point, bias_rubin=bias_rubin, u_term=u_term)


def spec_congeniality_gap(spec: LinearEstimatorSpec, design: DesignPartition) -> float:
    """
    Cov(theta_n, theta_inf - theta_n) / sigma^2 = alpha_o' H_om alpha_m - alpha_m' alpha_m.

    Zero when the estimator is congenial with the imputation model.
    """
    alpha_o = spec.alpha[design.respondents]
    alpha_m = spec.alpha[design.missing]
    h_om = design.x_resp @ design.gram_inv_resp @ design.x_miss.T
    return float(alpha_o @ h_om @ alpha_m) - float(alpha_m @ alpha_m)


def _linear_maps(design: DesignPartition):
    """p x n matrices A_r, A_n with beta_r = A_r y and beta_n = A_n y"""
    a_r = np.zeros((design.p, design.n))
    a_r[:, design.respondents] = design.gram_inv_resp @ design.x_resp.T
    a_n = design.gram_inv_all @ design.x_all.T
    return a_r, a_n


def congeniality_gap(design: DesignPartition, sigma2: float = 1.0) -> np.ndarray:
    """
    Var(beta_r - beta_n) - [Var(beta_r) - Var(beta_n)], from the explicit
    linear maps. Zero matrix for the regression coefficient.
    """
    _check_sigma2(sigma2)
    a_r, a_n = _linear_maps(design)
    d = a_r - a_n
    return _sym((d @ d.T - (a_r @ a_r.T - a_n @ a_n.T)) * sigma2)


def variance_decomposition(design: DesignPartition, sigma2: float, m: int, prior: Prior) -> VarianceDecomposition:
    """
    Sampling, missingness and imputation parts of Var(beta_{M,n}).

    Each part is built from its own linear map rather than from G_r - G_n, so
    the sum checks the closed form in coefficient_moments.
    """
    _check_sigma2(sigma2)
    _check_m(m)
    lam = _lam_eff(design, sigma2, prior)
    a_r, a_n = _linear_maps(design)
    d = a_r - a_n

    # beta_M - beta_r = mean_k G_n X_m' (y~_m,k - X_m beta_r)
    g_n = design.gram_inv_all
    x_m = design.x_miss
    imputed_cov = x_m @ design.gram_inv_resp @ x_m.T + np.eye(x_m.shape[0])
    imputation = (lam / m) * g_n @ x_m.T @ imputed_cov @ x_m @ g_n * sigma2

    return VarianceDecomposition(
        sampling=_sym(a_n @ a_n.T * sigma2),
        missingness=_sym(d @ d.T * sigma2),
        imputation=_sym(imputation),
    )
