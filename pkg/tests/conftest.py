"""Shared fixtures."""

import numpy as np
import pytest
from scipy import stats

from imkit.const import DEFAULT_SEED
from imkit.inference.models.gaussian import gaussian_mean_model
from imkit.inference.random_sets import symmetric_prs


@pytest.fixture
def rng():
    return np.random.default_rng(DEFAULT_SEED)


@pytest.fixture
def gaussian_mean():
    """x = mu + u with u standard normal."""
    return gaussian_mean_model(1, 1.0)


@pytest.fixture
def gaussian_prs(gaussian_mean):
    return symmetric_prs(gaussian_mean.aux, 0.0)


@pytest.fixture
def normal_pl():
    """Closed-form plausibility 2 Phi(-|x - mu|) of the Gaussian mean."""

    def pl(x, mu):
        return 2.0 * stats.norm.cdf(-np.abs(x - np.asarray(mu)))

    return pl
