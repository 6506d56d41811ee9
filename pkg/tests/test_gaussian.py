"""Tests for the Gaussian catalog models."""

import numpy as np
import pytest

from imkit.inference.exceptions.im_exception import ConfigurationException
from imkit.inference.models.gaussian import (
    gaussian_location_scale_conditional,
    gaussian_location_scale_model,
    gaussian_mean_conditional,
    gaussian_mean_model,
    location_scale_characteristic,
    observed_characteristic,
    standardized_configuration,
)


def test_mean_model_validation():
    with pytest.raises(ConfigurationException):
        gaussian_mean_model(0)
    with pytest.raises(ConfigurationException):
        gaussian_mean_model(2, sigma=0.0)


def test_differences_do_not_depend_on_mean(rng):
    """x_1 - x_2 = sigma (u_1 - u_2) for every mu."""
    assoc = gaussian_mean_model(2, sigma=1.5)
    u = rng.standard_normal(2)
    for mu in (-3.0, 0.0, 4.2):
        x = assoc.forward(u, [mu])
        assert x[0] - x[1] == pytest.approx(1.5 * (u[0] - u[1]))


def test_characteristic_is_observed(rng):
    """eta(U) = H(X) for any location and scale."""
    u = rng.standard_normal(4)
    for mu, sigma in ((0.0, 1.0), (2.5, 0.3), (-1.0, 7.0)):
        x = mu + sigma * u
        assert observed_characteristic(x) == pytest.approx(location_scale_characteristic(u))
        assert np.allclose(standardized_configuration(x), standardized_configuration(u))


def test_configuration_of_constant_data():
    with pytest.raises(ConfigurationException):
        standardized_configuration([1.0, 1.0, 1.0])


def test_location_scale_needs_three_points():
    with pytest.raises(ConfigurationException):
        gaussian_location_scale_model(2)
    with pytest.raises(ConfigurationException):
        gaussian_location_scale_conditional([1.0, 2.0])


def test_mean_conditional_solve():
    x = np.array([1.0, 2.0, 4.5])
    cond = gaussian_mean_conditional(x)
    assert cond.q == 1
    assert cond.solve(x, [2.0]) == pytest.approx([x.mean() - 2.0])
    assert np.allclose(cond.conditioning_values, (x - x.mean())[:-1])


def test_location_scale_conditional_solve():
    x = np.array([0.5, 1.5, -0.2, 2.2, 1.0])
    cond = gaussian_location_scale_conditional(x)
    v = cond.solve(x, [1.0, 2.0])
    assert v[0] == pytest.approx((x.mean() - 1.0) / 2.0)
    assert v[1] == pytest.approx(x.std(ddof=1) / 2.0)
    assert np.allclose(cond.conditioning_values, standardized_configuration(x))


def test_location_scale_conditional_prs_is_closed_form():
    """The conditional law has CDFs, so the default PRS needs no Monte Carlo."""
    x = np.array([0.5, 1.5, -0.2, 2.2, 1.0])
    cond = gaussian_location_scale_conditional(x)
    prs = cond.default_prs()
    assert prs.has_closed_form
    assert prs.containment_prob(np.array(cond.center)) == pytest.approx(1.0)
