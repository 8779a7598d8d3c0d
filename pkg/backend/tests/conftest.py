import numpy as np
import pytest

from models.regression import DesignPartition
from models.simulation import covariate_grid, design_matrix


def grid_design(n: int, respondents) -> DesignPartition:
    """Design on the simulation covariate grid with an intercept column"""
    return DesignPartition(design_matrix(covariate_grid(n)), np.asarray(respondents, dtype=np.intp))


def random_design(seed: int, n: int, p: int, r: int) -> DesignPartition:
    """Intercept plus p - 1 standard normal covariates, r respondents in random order"""
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    respondents = rng.permutation(n)[:r]
    return DesignPartition(x, respondents)


@pytest.fixture
def design_20_16():
    """n=20 simulation design where the first 16 units respond"""
    return DesignPartition.first_r(design_matrix(covariate_grid(20)), 16)


@pytest.fixture
def design_20_12():
    rng = np.random.default_rng(7)
    return grid_design(20, np.sort(rng.choice(20, size=12, replace=False)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
