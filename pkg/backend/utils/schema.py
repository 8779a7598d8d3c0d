import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Number of regression coefficients in the simulation model Y = 2 + 4x + e
SIMULATION_P = 2


def respondent_count(n: int, rate: float) -> int:
    """r = round(rate * n), rounding halves up"""
    return int(math.floor(rate * n + 0.5))


class PriorMethod(str, Enum):
    """Imputation method, identified by its prior on sigma^2"""
    SW = "sw"
    NEW = "new"
    CUSTOM = "custom"


class Estimand(str, Enum):
    """Quantities estimated in the simulation study"""
    MEAN = "mean"
    SLOPE = "slope"


class Prior(BaseModel):
    """Scaled inverse chi-square prior (nu0, sigma0^2) on sigma^2"""
    model_config = ConfigDict(frozen=True)

    nu0: float = Field(default=0.0, ge=0.0, description="Prior degrees of freedom")
    sigma0_sq: float = Field(default=0.0, ge=0.0, description="Prior scale")

    @classmethod
    def sw(cls) -> "Prior":
        return cls(nu0=0.0, sigma0_sq=0.0)

    @classmethod
    def new(cls) -> "Prior":
        return cls(nu0=2.0, sigma0_sq=0.0)

    @classmethod
    def from_method(cls, method: PriorMethod, nu0: float = 0.0, sigma0_sq: float = 0.0) -> "Prior":
        method = PriorMethod(method)
        if method == PriorMethod.SW:
            return cls.sw()
        if method == PriorMethod.NEW:
            return cls.new()
        return cls(nu0=nu0, sigma0_sq=sigma0_sq)


# === SIMULATION SCHEMAS ===

class SimulationConfig(BaseModel):
    """Factorial Monte Carlo experiment"""
    n_values: List[int] = Field(default=[20, 200], description="Sample sizes (factor C)")
    rates: List[float] = Field(default=[0.8, 0.6, 0.4], description="Response rates r/n (factor B)")
    methods: List[PriorMethod] = Field(default=[PriorMethod.SW, PriorMethod.NEW], description="Imputation methods (factor A)")
    m: int = Field(default=5, ge=2, description="Imputations per sample")
    replicates: int = Field(default=50_000, ge=3, description="Monte Carlo samples L per cell")
    seed: int = Field(default=20040401, ge=0, lt=2**64, description="Root seed")
    estimands: List[Estimand] = Field(default=[Estimand.MEAN, Estimand.SLOPE], description="Estimands to summarize")
    level: float = Field(default=0.95, gt=0.0, lt=1.0, description="Confidence level")
    custom_nu0: float = Field(default=0.0, ge=0.0, description="nu0 used by the custom method")
    custom_sigma0_sq: float = Field(default=0.0, ge=0.0, description="sigma0^2 used by the custom method")

    @field_validator("rates")
    @classmethod
    def _check_rates(cls, rates: List[float]) -> List[float]:
        for rate in rates:
            if not 0.0 < rate <= 1.0:
                raise ValueError(f"response rate {rate} outside (0, 1]")
        return rates

    @model_validator(mode="after")
    def _check_cells(self) -> "SimulationConfig":
        if not self.n_values or not self.rates or not self.methods or not self.estimands:
            raise ValueError("n_values, rates, methods and estimands must be non-empty")
        for n in self.n_values:
            for rate in self.rates:
                r = respondent_count(n, rate)
                if r <= SIMULATION_P + 2:
                    raise ValueError(f"cell n={n}, rate={rate} has r={r} <= p + 2 = {SIMULATION_P + 2}")
        return self

    def prior_for(self, method: PriorMethod) -> Prior:
        return Prior.from_method(method, self.custom_nu0, self.custom_sigma0_sq)


class EstimandSummary(BaseModel):
    """Monte Carlo summary for one estimand under one method in one cell"""
    estimand: Estimand
    method: PriorMethod
    true_value: float = Field(..., description="Population value of the estimand")
    mc_mean: float = Field(..., description="E_L(theta_hat)")
    mc_mean_se: float = Field(..., description="Monte Carlo standard error of mc_mean")
    mc_variance: float = Field(..., description="Var_L(theta_hat), L-1 denominator")
    mean_rubin_variance: float = Field(..., description="E_L(V_hat) for Rubin's estimator")
    relative_bias: float = Field(..., description="[E_L(V_hat) - Var_L(theta_hat)] / Var_L(theta_hat)")
    z_statistic: float = Field(..., description="z for H0: E(V_hat) = Var(theta_hat)")
    empirical_bias: float = Field(..., description="E_L(V_hat) - Var_L(theta_hat)")
    empirical_bias_se: float = Field(..., description="Standard error of empirical_bias")
    analytic_bias: float = Field(..., description="Exact bias averaged over drawn response patterns")
    mean_alternative_variance: float = Field(..., description="E_L of the alternative variance estimator")
    alternative_relative_bias: float = Field(..., description="Relative bias of the alternative variance estimator")
    mean_ci_length: float = Field(..., description="Mean confidence interval length")
    coverage_percent: float = Field(..., ge=0.0, le=100.0, description="Interval coverage in percent")
    coverage_se: float = Field(..., description="Standard error of coverage_percent")
    mean_df: float = Field(..., description="Mean Barnard-Rubin degrees of freedom")
    pre_percent: Optional[float] = Field(default=None, gt=0.0, description="PRE against the SW method")


class CellResult(BaseModel):
    """All summaries for one (n, rate) cell"""
    n: int
    rate: float
    r: int
    m: int
    replicates: int
    seed: int
    summaries: List[EstimandSummary] = Field(default=[], description="One entry per estimand x method")

    def get(self, estimand: Estimand, method: PriorMethod) -> EstimandSummary:
        for summary in self.summaries:
            if summary.estimand == estimand and summary.method == method:
                return summary
        raise KeyError(f"no summary for {estimand.value}/{method.value} in cell n={self.n}, rate={self.rate}")


# === API SCHEMAS ===

class HealthResponse(BaseModel):
    """Health check response"""
    status: str
    version: str


class DesignPayload(BaseModel):
    """Covariate matrix and respondent indices"""
    x: List[List[float]] = Field(..., description="n x p covariate rows")
    respondents: List[int] = Field(..., description="0-based indices of responding units")


class MomentsRequest(BaseModel):
    """Request model for the exact-moments report"""
    design: DesignPayload
    sigma2: float = Field(default=1.0, gt=0.0, description="True error variance")
    m: int = Field(default=5, ge=2, description="Number of imputations")
    prior: Prior = Field(default_factory=Prior.sw, description="Imputation prior")
    contrasts: List[List[float]] = Field(default=[], description="Covariate rows x0 for scalar estimands")


class EstimandMoments(BaseModel):
    """Exact moments of a scalar linear estimator x0'beta"""
    x0: List[float]
    var_point: float
    bias_rubin: float
    u_term: float


class MomentsResponse(BaseModel):
    """Exact moments of the multiple imputation estimators"""
    lam: float
    lam0: float
    lam1: float
    var_point: List[List[float]]
    expected_within: List[List[float]]
    expected_between: List[List[float]]
    bias_rubin: List[List[float]]
    sigma2: float
    estimands: List[EstimandMoments] = Field(default=[], description="Moments for requested contrasts")


class ImputeRequest(BaseModel):
    """Request model for one-shot multiple imputation"""
    x: List[List[float]] = Field(..., description="n x p covariate rows")
    y: List[Optional[float]] = Field(..., description="Outcomes; null marks a missing value")
    method: PriorMethod = Field(default=PriorMethod.NEW, description="Imputation method")
    nu0: float = Field(default=0.0, ge=0.0, description="nu0 for the custom method")
    sigma0_sq: float = Field(default=0.0, ge=0.0, description="sigma0^2 for the custom method")
    m: int = Field(default=5, ge=2, le=1000, description="Number of imputations")
    seed: int = Field(default=0, ge=0, description="Root seed")
    level: float = Field(default=0.95, gt=0.0, lt=1.0, description="Confidence level")


class CoefficientInterval(BaseModel):
    """Combined inference for one regression coefficient"""
    index: int
    estimate: float
    within: float
    between: float
    rubin_variance: float
    alternative_variance: float
    df: float
    lower: float
    upper: float


class ImputeResponse(BaseModel):
    """Completed datasets and combined regression inference"""
    m: int
    completed: List[List[float]]
    sigma_star_sq: List[float]
    coefficients: List[CoefficientInterval]


class SimulateCellRequest(BaseModel):
    """Request model for a single, small simulation cell"""
    n: int = Field(default=20, ge=5, description="Sample size")
    rate: float = Field(default=0.8, gt=0.0, le=1.0, description="Response rate")
    methods: List[PriorMethod] = Field(default=[PriorMethod.SW, PriorMethod.NEW])
    m: int = Field(default=5, ge=2, le=100)
    replicates: int = Field(default=1000, ge=3, le=20_000, description="Capped for interactive use")
    seed: int = Field(default=20040401, ge=0)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
