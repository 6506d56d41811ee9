"""Tests for associations, parameter spaces and auxiliary laws."""

import numpy as np
import pytest
from scipy import stats

from imkit.inference.association import Association, AuxiliaryDistribution, ParameterSpace
from imkit.inference.exceptions.association_exception import InversionException, StencilException
from imkit.inference.exceptions.im_exception import ConfigurationException, DomainException
from imkit.inference.models.brownian import brownian_q_association
from imkit.inference.models.gaussian import gaussian_location_scale_model, gaussian_mean_model


def _cubic_association():
    """x = theta + u^3 without an explicit inverse."""
    return Association(
        name="cubic",
        n_data=2,
        params=ParameterSpace.real_line(1),
        aux=AuxiliaryDistribution.iid(stats.norm(), 2),
        forward_map=lambda u, theta: theta[0] + u**3,
    )


def test_parameter_space_rejects_boundary_values():
    """Open bounds exclude the endpoints and name the offending coordinate."""
    space = ParameterSpace((-np.inf, 0.0), (np.inf, np.inf), ("mu", "sigma"))
    assert space.contains([0.0, 1.0])
    assert not space.contains([0.0, 0.0])
    with pytest.raises(DomainException, match="sigma"):
        space.check([0.0, 0.0])
    with pytest.raises(DomainException):
        space.check([1.0])


def test_parameter_space_rejects_empty_interval():
    with pytest.raises(ConfigurationException):
        ParameterSpace((1.0,), (1.0,))


@pytest.mark.parametrize("n", [1, 4])
def test_gaussian_mean_round_trip(n, rng):
    """inverse(forward(u)) recovers u."""
    assoc = gaussian_mean_model(n, 2.0)
    for _ in range(20):
        u = rng.standard_normal(n)
        assert assoc.round_trip_error(u, [rng.normal()]) <= 1e-12


def test_location_scale_round_trip(rng):
    assoc = gaussian_location_scale_model(5)
    u = rng.standard_normal(5)
    assert assoc.round_trip_error(u, [1.5, 0.3]) <= 1e-12


def test_monotone_inverse_without_closed_form():
    """Bracketing root solves invert coordinate-monotone maps."""
    assoc = _cubic_association()
    x = np.array([3.0, -7.5])
    u = assoc.inverse(x, [1.0])
    assert np.allclose(u, np.cbrt(x - 1.0), atol=1e-10)


def test_monotone_inverse_bounded_support():
    """Bracketing respects a finite auxiliary support."""
    assoc = Association(
        name="uniform-scale",
        n_data=1,
        params=ParameterSpace((0.0,), (np.inf,)),
        aux=AuxiliaryDistribution.iid(stats.uniform(), 1),
        forward_map=lambda u, theta: theta[0] * u,
    )
    assert np.allclose(assoc.inverse([0.6], [2.0]), [0.3], atol=1e-12)


def test_analytic_partials_match_differences(rng):
    """Analytic du/dtheta agrees with central differences of the inverse."""
    assoc = gaussian_location_scale_model(4)
    x = rng.normal(size=4)
    theta = [0.4, 1.7]
    analytic = assoc.du_dtheta(x, theta)
    numeric = assoc.du_dtheta(x, theta, method="fd")
    assert analytic.shape == (4, 2)
    assert np.allclose(analytic, numeric, atol=1e-7)


def test_fd_partials_without_analytic_form():
    """Implicit cubic partials are -1 / (3 u^2)."""
    assoc = _cubic_association()
    x = np.array([3.0, -7.5])
    u = np.cbrt(x - 1.0)
    assert np.allclose(assoc.du_dtheta(x, [1.0])[:, 0], -1.0 / (3.0 * u**2), rtol=1e-5)
    with pytest.raises(ConfigurationException):
        assoc.du_dtheta(x, [1.0], method="analytic")


def test_stencil_leaving_space_is_reported():
    """A central step across sigma = 0 is refused."""
    assoc = gaussian_location_scale_model(3)
    with pytest.raises(StencilException, match="sigma"):
        assoc.du_dtheta([0.1, 0.2, 0.3], [0.0, 5e-7], method="fd")


def test_inverse_outside_model_range():
    """Zero Brownian statistics have no log-scale auxiliary value."""
    assoc = brownian_q_association(3)
    with pytest.raises(InversionException):
        assoc.inverse([0.0, 1.0, 2.0], [1.0, 0.5])


def test_dimension_mismatch():
    assoc = gaussian_mean_model(3)
    with pytest.raises(ConfigurationException):
        assoc.inverse([1.0, 2.0], [0.0])


def test_sample_data_is_seeded():
    """Same seed, same simulated data."""
    assoc = gaussian_mean_model(3)
    assert np.array_equal(assoc.sample_data([1.0], 7), assoc.sample_data([1.0], 7))
    assert not np.array_equal(assoc.sample_data([1.0], 7), assoc.sample_data([1.0], 8))


def test_auxiliary_medians():
    """Medians drive the default PRS centre."""
    assert AuxiliaryDistribution.iid(stats.norm(), 2).median == 0.0
    chi2 = AuxiliaryDistribution.iid(stats.chi2(1), 2)
    assert chi2.median == pytest.approx(stats.chi2(1).median())
    log_chi2 = AuxiliaryDistribution.log_of(stats.chi2(1), 2)
    assert log_chi2.median == pytest.approx(np.log(stats.chi2(1).median()))


def test_log_auxiliary_density_integrates_to_one():
    """Change of variables keeps log(chi2) a proper density."""
    from scipy import integrate

    aux = AuxiliaryDistribution.log_of(stats.chi2(1), 1)
    mass, _ = integrate.quad(lambda v: np.exp(aux.log_density(np.array([v]))), -40, 5)
    assert mass == pytest.approx(1.0, abs=1e-6)
