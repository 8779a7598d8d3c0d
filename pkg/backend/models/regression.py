"""
Fixed-design linear algebra for the respondent / nonrespondent split.

Gram matrices are factored with a Cholesky decomposition; inverses are
materialized from the factor because the moment formulas consume them densely.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
from scipy import linalg

from utils.errors import ConfigurationError, RankDeficientError

logger = logging.getLogger(__name__)

# Cholesky pivot L_kk^2 below PIVOT_TOL * max(diag(G)) means rank deficiency
PIVOT_TOL = 1e-12
# Multiple of machine epsilon in the roundoff bound of an exact-fit residual
ROUNDOFF_FACTOR = 8.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def gram_factor(x: np.ndarray, label: str = "design") -> np.ndarray:
    """
    Lower Cholesky factor of X'X with a scale-relative singularity check.

    Raises:
        RankDeficientError: a pivot falls below PIVOT_TOL * max diagonal
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    gram = x.T @ x
    scale = float(np.max(np.diag(gram))) if p else 0.0
    if scale <= 0.0:
        raise RankDeficientError(f"{label} Gram matrix is zero", 0, p)
    try:
        chol = linalg.cholesky(gram, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError):
        rank = int(np.linalg.matrix_rank(x))
        raise RankDeficientError(f"{label} Gram matrix is not positive definite", rank, p)
    pivots = np.diag(chol) ** 2
    if np.any(pivots < PIVOT_TOL * scale):
        rank = int(np.sum(pivots >= PIVOT_TOL * scale))
        raise RankDeficientError(f"{label} Gram matrix is numerically singular", rank, p)
    return chol


def gram_inverse(x: np.ndarray, label: str = "design") -> np.ndarray:
    """(X'X)^-1 materialized from the Cholesky factor"""
    chol = gram_factor(x, label)
    inv = linalg.cho_solve((chol, True), np.eye(chol.shape[0]))
    return (inv + inv.T) / 2.0


@dataclass(frozen=True, eq=False)
class DesignPartition:
    """
    Fixed covariates for all n units plus the respondent index set.

    Respondents keep the order they were given in; y_resp vectors are aligned
    with that order. Missing units are the sorted complement.
    """
    x_all: np.ndarray
    respondents: np.ndarray
    missing: np.ndarray = field(init=False)

    def __post_init__(self):
        x_all = np.asarray(self.x_all, dtype=float)
        if x_all.ndim == 1:
            x_all = x_all[:, None]
        if x_all.ndim != 2:
            raise ConfigurationError(f"x_all must be a matrix, got shape {x_all.shape}")
        n, p = x_all.shape
        if not np.all(np.isfinite(x_all)):
            raise ConfigurationError("x_all contains non-finite values")

        resp = np.asarray(self.respondents)
        if resp.ndim != 1 or (resp.size and not np.issubdtype(resp.dtype, np.integer)):
            raise ConfigurationError("respondents must be a 1-d integer index array")
        resp = resp.astype(np.intp)
        if resp.size and (resp.min() < 0 or resp.max() >= n):
            raise ConfigurationError(f"respondent index outside 0..{n - 1}")
        if np.unique(resp).size != resp.size:
            raise ConfigurationError("respondent indices must be distinct")
        r = resp.size
        if r <= p + 2:
            raise ConfigurationError(f"need r > p + 2, got r={r}, p={p}")

        mask = np.ones(n, dtype=bool)
        mask[resp] = False
        missing = np.flatnonzero(mask).astype(np.intp)

        object.__setattr__(self, "x_all", _frozen(x_all))
        resp.flags.writeable = False
        missing.flags.writeable = False
        object.__setattr__(self, "respondents", resp)
        object.__setattr__(self, "missing", missing)

        # full column rank of both designs
        gram_factor(self.x_resp, "respondent")
        gram_factor(self.x_all, "full-sample")

    @classmethod
    def first_r(cls, x_all: np.ndarray, r: int) -> "DesignPartition":
        """Design where units 0..r-1 respond"""
        return cls(x_all, np.arange(r))

    @property
    def n(self) -> int:
        return self.x_all.shape[0]

    @property
    def p(self) -> int:
        return self.x_all.shape[1]

    @property
    def r(self) -> int:
        return self.respondents.size

    @cached_property
    def x_resp(self) -> np.ndarray:
        return _frozen(self.x_all[self.respondents])

    @cached_property
    def x_miss(self) -> np.ndarray:
        return _frozen(self.x_all[self.missing].reshape(-1, self.p))

    @cached_property
    def gram_inv_resp(self) -> np.ndarray:
        """(X_r'X_r)^-1"""
        return _frozen(gram_inverse(self.x_resp, "respondent"))

    @cached_property
    def gram_inv_all(self) -> np.ndarray:
        """(X_n'X_n)^-1"""
        return _frozen(gram_inverse(self.x_all, "full-sample"))

    @cached_property
    def is_respondent(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.respondents] = True
        mask.flags.writeable = False
        return mask

    def assemble(self, y_resp: np.ndarray, y_miss: np.ndarray) -> np.ndarray:
        """Full n-vector with respondent and missing entries in unit order"""
        out = np.empty(self.n)
        out[self.respondents] = y_resp
        out[self.missing] = y_miss
        return out


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """OLS fit on the respondents"""
    beta_hat: np.ndarray
    sigma2_hat: float
    xtx_inv: np.ndarray
    dof: int
    cov_factor: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.beta_hat.size


def ols_fit(design: DesignPartition, y_resp: Sequence[float]) -> RegressionFit:
    """
    Fit Y = X beta + e on the respondents.

    Args:
        design: Design partition
        y_resp: Outcomes aligned with design.respondents

    Returns:
        RegressionFit with beta_hat, sigma2_hat = RSS / (r - p), (X_r'X_r)^-1
    """
    y = np.asarray(y_resp, dtype=float)
    if y.shape != (design.r,):
        raise ConfigurationError(f"y_resp must have length r={design.r}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ConfigurationError("y_resp contains non-finite values")
    return _fit(design.x_resp, y, design.gram_inv_resp)


def roundoff_residual_bound(x: np.ndarray, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """
    Largest residual norm that floating-point error alone produces for an exact fit:

        ROUNDOFF_FACTOR * eps * sqrt(n) * (||y|| + ||X||_2 ||beta||)

    y and beta may be single vectors or stacked row-wise.
    """
    eps = np.finfo(float).eps
    scale = np.linalg.norm(y, axis=-1) + np.linalg.norm(x, 2) * np.linalg.norm(beta, axis=-1)
    return ROUNDOFF_FACTOR * eps * np.sqrt(x.shape[0]) * scale


def _fit(x: np.ndarray, y: np.ndarray, xtx_inv: np.ndarray) -> RegressionFit:
    n, p = x.shape
    beta = xtx_inv @ (x.T @ y)
    resid = y - x @ beta
    # one refinement step leaves only the rounding of y - X beta in an exact fit
    beta = beta + xtx_inv @ (x.T @ resid)
    resid = y - x @ beta
    rss = float(resid @ resid)
    if np.sqrt(rss) <= roundoff_residual_bound(x, y, beta):
        rss = 0.0
    dof = n - p
    cov_factor = linalg.cholesky(xtx_inv, lower=True)
    return RegressionFit(
        beta_hat=_frozen(beta),
        sigma2_hat=rss / dof,
        xtx_inv=_frozen(xtx_inv),
        dof=dof,
        cov_factor=_frozen(cov_factor),
    )


def full_sample_fit(design: DesignPartition, y_all: Sequence[float]) -> RegressionFit:
    """OLS on all n units (complete data)"""
    y = np.asarray(y_all, dtype=float)
    if y.shape != (design.n,):
        raise ConfigurationError(f"y must have length n={design.n}, got shape {y.shape}")
    return _fit(design.x_all, y, design.gram_inv_all)


def hat_value(fit: RegressionFit, x_i: Sequence[float], x_j: Sequence[float]) -> float:
    """h_ij = x_i' (X_r'X_r)^-1 x_j"""
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != (fit.p,) or x_j.shape != (fit.p,):
        raise ConfigurationError(f"covariate vectors must have length p={fit.p}, got {x_i.shape} and {x_j.shape}")
    return float(x_i @ fit.xtx_inv @ x_j)


def partitioned_inverse_expansion(design: DesignPartition) -> np.ndarray:
    """
    Right-hand side of the partitioned-inverse identity

        G_n + G_n A G_n + G_n A G_r A G_n,   A = X_{n-r}'X_{n-r},

    with G_n = (X_n'X_n)^-1 and G_r = (X_r'X_r)^-1. Equals G_r.
    """
    g_n = design.gram_inv_all
    g_r = design.gram_inv_resp
    a = design.x_miss.T @ design.x_miss
    g_n_a = g_n @ a
    return g_n + g_n_a @ g_n + g_n_a @ g_r @ a @ g_n


def projection_matrices(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(X(X'X)^-1X', I - X(X'X)^-1X') for an n x p design"""
    x = np.asarray(x, dtype=float)
    proj = x @ gram_inverse(x) @ x.T
    return proj, np.eye(x.shape[0]) - proj
