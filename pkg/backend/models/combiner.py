"""
Combining rules for multiply-imputed data.

Covers the imputed full-sample regression, Rubin's rules, the alternative
variance estimator built from the respondent fit, general linear estimators
(theta_hat = alpha'y, V_hat = y'Omega y), Barnard-Rubin degrees of freedom and
Student-t intervals.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from models.imputation import MultipleImputation
from models.regression import (
    DesignPartition,
    RegressionFit,
    projection_matrices,
    roundoff_residual_bound,
)
from utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

# Absolute accuracy of Student-t quantiles
T_QUANTILE_XTOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearEstimatorSpec:
    """
    Complete-data estimator theta_hat = sum_i alpha_i y_i with variance
    estimator V_hat = sum_ij Omega_ij y_i y_j, indexed by unit.
    """
    alpha: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        omega = np.asarray(self.omega, dtype=float)
        n = alpha.size
        if omega.shape != (n, n):
            raise ConfigurationError(f"omega must be {n} x {n}, got {omega.shape}")
        scale = max(float(np.max(np.abs(omega))), 1.0) if n else 1.0
        if not np.allclose(omega, omega.T, rtol=0.0, atol=1e-12 * scale):
            raise ConfigurationError("omega must be symmetric")
        omega = (omega + omega.T) / 2.0
        if n and float(np.min(np.linalg.eigvalsh(omega))) < -1e-10 * scale:
            raise ConfigurationError("omega must be positive semidefinite")
        alpha.flags.writeable = False
        omega.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", omega)

    @property
    def n(self) -> int:
        return self.alpha.size

    @classmethod
    def from_contrast(cls, design: DesignPartition, x0: Sequence[float]) -> "LinearEstimatorSpec":
        """
        Fitted value x0'beta_hat_n with V_hat = x0'(X_n'X_n)^-1 x0 sigma_hat_n^2.

        alpha = X_n (X_n'X_n)^-1 x0 and Omega = c [I - X_n (X_n'X_n)^-1 X_n'] with
        c = x0'(X_n'X_n)^-1 x0 / (n - p).
        """
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (design.p,):
            raise ConfigurationError(f"x0 must have length p={design.p}, got shape {x0.shape}")
        g_n = design.gram_inv_all
        alpha = design.x_all @ (g_n @ x0)
        _, resid_maker = projection_matrices(design.x_all)
        c = float(x0 @ g_n @ x0) / (design.n - design.p)
        return cls(alpha=alpha, omega=c * resid_maker)

    @classmethod
    def regression_coefficient(cls, design: DesignPartition, index: int) -> "LinearEstimatorSpec":
        """Coordinate `index` of beta_hat_n with its usual variance estimator"""
        if not 0 <= index < design.p:
            raise ConfigurationError(f"coefficient index {index} outside 0..{design.p - 1}")
        return cls.from_contrast(design, np.eye(design.p)[index])

    @classmethod
    def mean_at(cls, design: DesignPartition, x0: Sequence[float]) -> "LinearEstimatorSpec":
        """
        Mean response at covariate row x0. At the design mean row this is the
        sample mean of y with variance estimator sigma_hat_n^2 / n.
        """
        return cls.from_contrast(design, x0)


@dataclass(frozen=True, eq=False)
class MiEstimate:
    """Rubin's combination of M complete-data analyses"""
    point: np.ndarray
    within: np.ndarray
    between: np.ndarray
    rubin_total: np.ndarray
    m: int

    @property
    def q(self) -> int:
        return self.point.size

    def contrast(self, x0: Sequence[float]) -> "MiEstimate":
        """Combined estimate of x0'theta; equal to combining x0'theta_hat_k directly"""
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.q,):
            raise ConfigurationError(f"contrast must have length {self.q}, got shape {x0.shape}")
        point = np.array([x0 @ self.point])
        within = np.array([[x0 @ self.within @ x0]])
        between = np.array([[x0 @ self.between @ x0]])
        return MiEstimate(point, within, between, within + (1.0 + 1.0 / self.m) * between, self.m)


@dataclass(frozen=True)
class IntervalEstimate:
    """Symmetric Student-t interval"""
    center: float
    half_width: float
    df: float
    level: float

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def imputed_regression_fits(design: DesignPartition, completed: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Full-sample regression on each row of an (m, n) array of completed datasets.

    Returns:
        (betas of shape (m, p), sigma2 of shape (m,)) with (n - p)-denominator
        residual variances
    """
    completed = np.atleast_2d(np.asarray(completed, dtype=float))
    if completed.shape[1] != design.n:
        raise ConfigurationError(f"completed vectors must have length n={design.n}, got {completed.shape[1]}")
    g_n = design.gram_inv_all
    solve = design.x_all @ g_n
    betas = completed @ solve
    resid = completed - betas @ design.x_all.T
    betas = betas + resid @ solve
    resid = completed - betas @ design.x_all.T
    rss = np.einsum("ij,ij->i", resid, resid)
    exact = np.sqrt(rss) <= roundoff_residual_bound(design.x_all, completed, betas)
    rss = np.where(exact, 0.0, rss)
    return betas, rss / (design.n - design.p)


def imputed_regression_fit(design: DesignPartition, completed: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    beta_hat_I = (X_n'X_n)^-1 X_n' y~ and V_hat_I = (X_n'X_n)^-1 sigma_hat_I^2.
    """
    completed = np.asarray(completed, dtype=float)
    if completed.shape != (design.n,):
        raise ConfigurationError(f"completed must have length n={design.n}, got shape {completed.shape}")
    betas, sigma2 = imputed_regression_fits(design, completed[None, :])
    return betas[0], design.gram_inv_all * sigma2[0]


def combine(per_imputation: Iterable[Tuple[object, object]]) -> MiEstimate:
    """
    Rubin's rules.

    Args:
        per_imputation: M (point, variance) pairs; points are q-vectors or
            scalars, variances q x q matrices or scalars

    Returns:
        MiEstimate with W = mean variance, B = sample covariance of points
        (M - 1 denominator) and T = W + (1 + 1/M) B
    """
    pairs = list(per_imputation)
    m = len(pairs)
    if m < 2:
        raise ConfigurationError(f"need at least 2 imputations to combine, got {m}")
    points = np.array([np.atleast_1d(np.asarray(pt, dtype=float)) for pt, _ in pairs])
    q = points.shape[1]
    try:
        variances = np.array([np.asarray(v, dtype=float).reshape(q, q) for _, v in pairs])
    except ValueError:
        raise ConfigurationError(f"variances must be {q} x {q} to match the points")
    return _combine_arrays(points, variances)


def _combine_arrays(points: np.ndarray, variances: np.ndarray) -> MiEstimate:
    m = points.shape[0]
    point = points.mean(axis=0)
    within = variances.mean(axis=0)
    within = (within + within.T) / 2.0
    dev = points - point
    between = dev.T @ dev / (m - 1)
    between = (between + between.T) / 2.0
    rubin_total = within + (1.0 + 1.0 / m) * between
    return MiEstimate(point=point, within=within, between=between, rubin_total=rubin_total, m=m)


def analyze_regression(design: DesignPartition, mi: MultipleImputation) -> MiEstimate:
    """Combine the M imputed full-sample regressions"""
    betas, sigma2 = imputed_regression_fits(design, mi.completed)
    variances = sigma2[:, None, None] * design.gram_inv_all[None, :, :]
    return _combine_arrays(betas, variances)


def apply_linear_estimator(spec: LinearEstimatorSpec, completed: Sequence[float]) -> Tuple[float, float]:
    """(alpha'y~, y~'Omega y~) on one completed vector"""
    y = np.asarray(completed, dtype=float)
    if y.shape != (spec.n,):
        raise ConfigurationError(f"completed must have length n={spec.n}, got shape {y.shape}")
    return float(spec.alpha @ y), float(y @ spec.omega @ y)


def analyze_linear_estimator(spec: LinearEstimatorSpec, mi: MultipleImputation) -> MiEstimate:
    """Combine a general linear estimator over the M completed datasets"""
    return combine(apply_linear_estimator(spec, row) for row in mi.completed)


def alternative_variance(fit_resp: RegressionFit, estimate: MiEstimate,
                         contrast: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Var_hat(beta_hat_r) + B / M, where Var_hat(beta_hat_r) = (X_r'X_r)^-1 sigma_hat_r^2.

    Args:
        fit_resp: Respondent fit
        estimate: Combined estimate of beta (q = p) or of contrast @ beta
        contrast: Optional q x p matrix L; the respondent term becomes L Var_hat L'
    """
    var_resp = fit_resp.xtx_inv * fit_resp.sigma2_hat
    if contrast is not None:
        contrast = np.atleast_2d(np.asarray(contrast, dtype=float))
        if contrast.shape[1] != fit_resp.p:
            raise ConfigurationError(f"contrast must have {fit_resp.p} columns, got {contrast.shape}")
        var_resp = contrast @ var_resp @ contrast.T
    if var_resp.shape != estimate.between.shape:
        raise ConfigurationError(
            f"respondent variance {var_resp.shape} does not conform with between {estimate.between.shape}"
        )
    return var_resp + estimate.between / estimate.m


def barnard_rubin_df(within: float, between: float, m: int, complete_df: float) -> float:
    """
    Small-sample degrees of freedom for multiple imputation inference.

        gamma    = (1 + 1/m) B / (W + (1 + 1/m) B)
        nu_m     = (m - 1) / gamma^2
        nu_obs   = nu_com (nu_com + 1) / (nu_com + 3) (1 - gamma)
        df       = (1/nu_m + 1/nu_obs)^-1
    """
    if not within > 0.0:
        raise ConfigurationError(f"within-imputation variance must be positive, got {within}")
    if between < 0.0:
        raise ConfigurationError(f"between-imputation variance must be >= 0, got {between}")
    if m < 2:
        raise ConfigurationError(f"need m >= 2, got {m}")
    if not complete_df > 0.0:
        raise ConfigurationError(f"complete-data df must be positive, got {complete_df}")
    inflated = (1.0 + 1.0 / m) * between
    gamma = inflated / (within + inflated)
    nu_obs = complete_df * (complete_df + 1.0) / (complete_df + 3.0) * (1.0 - gamma)
    inv_nu_m = gamma * gamma / (m - 1)
    return 1.0 / (inv_nu_m + 1.0 / nu_obs)


def student_t_cdf(t: float, df: float) -> float:
    """Student-t CDF through the regularized incomplete beta function"""
    tail = 0.5 * special.betainc(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t >= 0 else tail


def student_t_quantile(prob: float, df: float) -> float:
    """Inverse of student_t_cdf by bracketed root finding; df may be fractional"""
    if not 0.0 < prob < 1.0:
        raise ConfigurationError(f"probability must be in (0, 1), got {prob}")
    if not df > 0.0:
        raise ConfigurationError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(df):
        return float(special.ndtri(prob))
    if prob == 0.5:
        return 0.0
    if prob < 0.5:
        return -student_t_quantile(1.0 - prob, df)

    upper = max(1.0, float(special.ndtri(prob)))
    while student_t_cdf(upper, df) < prob:
        upper *= 2.0
    return optimize.brentq(lambda t: student_t_cdf(t, df) - prob, 0.0, upper,
                           xtol=T_QUANTILE_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def confidence_interval(point: float, total_variance: float, df: float, level: float = 0.95) -> IntervalEstimate:
    """point +/- t_{(1-level)/2, df} sqrt(total_variance)"""
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"confidence level must be in (0, 1), got {level}")
    if total_variance < 0.0:
        raise ConfigurationError(f"total variance must be >= 0, got {total_variance}")
    t = student_t_quantile(1.0 - (1.0 - level) / 2.0, df)
    return IntervalEstimate(center=float(point), half_width=t * math.sqrt(total_variance), df=float(df), level=level)
