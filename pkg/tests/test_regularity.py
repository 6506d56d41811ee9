"""Tests for separability, location transforms and degeneracy."""

import numpy as np
import pytest

from imkit.const import MODEL_GAUSSIAN_LOCATION_SCALE, MODEL_GAUSSIAN_MEAN
from imkit.inference.characteristics import invariant_conditioning_variables, verify_local_conditioning
from imkit.inference.exceptions.im_exception import ConfigurationException
from imkit.inference.exceptions.regularity_exception import InconclusiveException, SingularModelException
from imkit.inference.models.gaussian import standardized_configuration
from imkit.inference.models.model_factory import ModelFactory
from imkit.inference.regularity import (
    CoordinateModel,
    classify,
    degeneracy_rank_test,
    describe_form,
    extract_location_transform,
    n_sample_separability,
    separability_test,
    two_parameter_test,
)

POSITIVE = (0.5, 2.0)


def _location(n=2):
    return CoordinateModel.common(
        lambda theta, u: theta[0] + u, n=n, p=1, g_theta=lambda theta, u: [np.ones_like(u)],
        g_u=lambda theta, u: np.ones_like(u), name="location",
    )


def _scale(n=2):
    return CoordinateModel.common(lambda theta, u: theta[0] * u, n=n, p=1, name="scale")


def _curved(n=2):
    return CoordinateModel.common(lambda theta, u: theta[0] + u + theta[0] * u**2, n=n, p=1, name="curved")


def _location_scale(n=3):
    return CoordinateModel.common(
        lambda theta, u: theta[0] + theta[1] * u, n=n, p=2,
        g_theta=lambda theta, u: [np.ones_like(u), u], g_u=lambda theta, u: theta[1],
        name="location-scale",
    )


def test_location_is_separable():
    report = separability_test(_location(), POSITIVE, POSITIVE)
    assert report.regular
    assert report.h_theta_dependence <= 1e-8
    assert report.mixed_log_partial <= 1e-8


def test_curved_model_is_not_separable():
    report = separability_test(_curved(), POSITIVE, POSITIVE)
    assert not report.regular
    assert report.offending_index == 2


def test_separability_needs_one_parameter():
    with pytest.raises(ConfigurationException):
        separability_test(_location_scale(), POSITIVE, POSITIVE)


def test_parameter_free_model_is_singular():
    model = CoordinateModel.common(lambda theta, u: u + 0.0 * theta[0], n=2, p=1, name="flat")
    with pytest.raises(SingularModelException):
        separability_test(model, POSITIVE, POSITIVE)


def test_n_sample_separability_names_offending_coordinate():
    """Only the third coordinate bends with theta."""

    def g(i, theta, u):
        return theta[0] + u + (theta[0] * u**2 if i == 2 else 0.0)

    model = CoordinateModel(n=3, p=1, g=g, name="mixed")
    report = n_sample_separability(model, POSITIVE, POSITIVE)
    assert not report.regular
    assert report.offending_index == 3
    assert n_sample_separability(_location(3), POSITIVE, POSITIVE).regular


def test_scale_transform_is_logarithmic():
    """x = theta u becomes a location model in log u and log theta."""
    model = _scale()
    report = separability_test(model, POSITIVE, POSITIVE)
    assert report.regular
    transform = extract_location_transform(model, report, POSITIVE, POSITIVE)
    assert describe_form(transform) == "location after log transform"
    assert transform.residual <= 1e-6
    u = np.array([0.7, 1.6])
    anchor = transform.u_anchor
    assert np.allclose(transform.v(0, u), transform.theta_anchor * np.log(u / anchor), atol=1e-8)


def test_transform_needs_regular_model():
    model = _curved()
    report = separability_test(model, POSITIVE, POSITIVE)
    with pytest.raises(ConfigurationException):
        extract_location_transform(model, report, POSITIVE, POSITIVE)


def test_location_scale_two_parameter_test():
    report = two_parameter_test(_location_scale(), (-2.0, 2.0), [(-1.0, 1.0), POSITIVE])
    assert report.regular
    assert 0 < report.excluded_fraction < 0.5


def test_two_parameter_test_inconclusive():
    """Duplicated location parameters leave the determinant zero everywhere."""
    model = CoordinateModel.common(
        lambda theta, u: theta[0] + theta[1] + u, n=3, p=2,
        g_theta=lambda theta, u: [np.ones_like(u), np.ones_like(u)], name="duplicate",
    )
    with pytest.raises(InconclusiveException):
        two_parameter_test(model, POSITIVE, [POSITIVE, POSITIVE])


def test_two_parameter_test_needs_common_form():
    model = CoordinateModel(n=3, p=2, g=lambda i, theta, u: theta[0] + theta[1] * u)
    with pytest.raises(ConfigurationException):
        two_parameter_test(model, POSITIVE, [POSITIVE, POSITIVE])


def test_degenerate_three_parameter_model():
    model = CoordinateModel.common(
        lambda theta, u: theta[0] + theta[1] + theta[2] * u, n=6, p=3,
        g_theta=lambda theta, u: [np.ones_like(u), np.ones_like(u), u], g_u=lambda theta, u: theta[2],
    )
    report = degeneracy_rank_test(model, [1.0, 1.0, 1.0], np.linspace(0.5, 2.0, 6))
    assert report.degenerate
    assert report.numerical_rank == 2
    assert len(report.null_directions) == 1
    direction = np.abs(report.null_directions[0])
    assert np.allclose(direction, [np.sqrt(0.5), np.sqrt(0.5), 0.0], atol=1e-8)


def test_quadratic_three_parameter_model_is_full_rank():
    model = CoordinateModel.common(lambda theta, u: theta[0] + theta[1] * u + theta[2] * u**2, n=6, p=3)
    report = degeneracy_rank_test(model, [1.0, 1.0, 1.0], np.linspace(0.5, 2.0, 6))
    assert not report.degenerate
    assert report.numerical_rank == 3


def test_degeneracy_needs_enough_points():
    model = CoordinateModel.common(lambda theta, u: theta[0] + theta[1] * u + theta[2] * u**2, n=6, p=3)
    with pytest.raises(ConfigurationException):
        degeneracy_rank_test(model, [1.0, 1.0, 1.0], [0.5, 1.0, 1.5])


@pytest.mark.parametrize(
    ("model", "u_range", "theta_ranges", "verdict"),
    [
        (_location(), POSITIVE, [POSITIVE], "regular: location"),
        (_scale(), POSITIVE, [POSITIVE], "regular: location after log transform"),
        (_curved(), POSITIVE, [POSITIVE], "not regular"),
        (_location_scale(), (-2.0, 2.0), [(-1.0, 1.0), POSITIVE], "regular: location-scale"),
    ],
)
def test_classify_verdicts(model, u_range, theta_ranges, verdict):
    assert classify(model, u_range, theta_ranges).verdict == verdict


def test_classify_degenerate_verdict():
    model = CoordinateModel.common(
        lambda theta, u: theta[0] + theta[1] + theta[2] * u, n=6, p=3,
        g_theta=lambda theta, u: [np.ones_like(u), np.ones_like(u), u], name="duplicate",
    )
    result = classify(model, POSITIVE, [POSITIVE, POSITIVE, POSITIVE])
    assert result.verdict == "degenerate, rank 2"
    assert result.to_dict()["details"]["degeneracy"]["numerical_rank"] == 2


def test_regular_catalog_models_admit_certified_conditioning(rng):
    """Catalog models classified regular carry theta-free conditioning variables at random anchors."""
    mean = ModelFactory.build(MODEL_GAUSSIAN_MEAN, n=3)
    assert classify(mean.coordinate_model, POSITIVE, [POSITIVE]).verdict == "regular: location"
    for _ in range(10):
        theta0 = [rng.uniform(-2.0, 2.0)]
        variables = invariant_conditioning_variables(mean.association, theta0, sample_size=3)
        assert len(variables) == 2
        assert all(variable.certified(1e-6) for variable in variables)

    location_scale = ModelFactory.build(MODEL_GAUSSIAN_LOCATION_SCALE, n=4)
    verdict = classify(location_scale.coordinate_model, (-2.0, 2.0), [(-1.0, 1.0), POSITIVE]).verdict
    assert verdict == "regular: location-scale"
    for _ in range(10):
        theta0 = (rng.uniform(-2.0, 2.0), rng.uniform(0.5, 3.0))
        for k in range(2):
            derivative = verify_local_conditioning(
                lambda u, k=k: standardized_configuration(u)[k], location_scale.association, theta0, sample_size=3
            )
            assert derivative <= 1e-6


def test_transform_is_constant_on_level_sets():
    """Points with equal V(u) + delta(theta) share one forward value across a 50 x 50 grid."""
    model = _scale()
    report = separability_test(model, POSITIVE, POSITIVE)
    transform = extract_location_transform(model, report, POSITIVE, POSITIVE)

    u_reference = np.linspace(*POSITIVE, 2001)
    v_reference = transform.v(0, u_reference)
    x_reference = model.value(0, [np.full_like(u_reference, transform.theta_anchor)], u_reference)

    u, theta = np.meshgrid(np.linspace(*POSITIVE, 50), np.linspace(*POSITIVE, 50), indexing="ij")
    level = transform.v(0, u) + transform.delta(theta)
    inside = (level >= v_reference[0]) & (level <= v_reference[-1])
    assert np.count_nonzero(inside) > 1000
    x = model.value(0, [theta], u)
    assert np.allclose(x[inside], np.interp(level[inside], v_reference, x_reference), rtol=1e-5)


@pytest.mark.parametrize(
    ("g", "g_theta", "g_u"),
    [
        (
            lambda theta, u: theta[0] + theta[1] * u + theta[2] * u**2,
            lambda theta, u: [np.ones_like(u), u, u**2],
            lambda theta, u: theta[1] + 2.0 * theta[2] * u,
        ),
        (
            lambda theta, u: theta[0] + theta[1] + theta[2] * u,
            lambda theta, u: [np.ones_like(u), np.ones_like(u), u],
            lambda theta, u: theta[2],
        ),
    ],
)
def test_rank_is_invariant_under_reparameterization(g, g_theta, g_u):
    """Shifting theta_3 by theta_1 leaves the numerical rank unchanged."""
    theta = np.array([1.0, 0.5, 2.0])
    shifted = np.array([theta[0], theta[1], theta[2] + theta[0]])

    def back(phi):
        return [phi[0], phi[1], phi[2] - phi[0]]

    def shifted_g_theta(phi, u):
        d1, d2, d3 = g_theta(back(phi), u)
        return [d1 - d3, d2, d3]

    original = CoordinateModel.common(g, n=6, p=3, g_theta=g_theta, g_u=g_u)
    reparameterized = CoordinateModel.common(
        lambda phi, u: g(back(phi), u), n=6, p=3, g_theta=shifted_g_theta,
        g_u=lambda phi, u: g_u(back(phi), u),
    )
    u_points = np.linspace(0.5, 2.0, 6)
    first = degeneracy_rank_test(original, theta, u_points)
    second = degeneracy_rank_test(reparameterized, shifted, u_points)
    assert first.numerical_rank == second.numerical_rank
    assert first.degenerate == second.degenerate


def test_loosening_tolerance_never_revokes_regularity():
    tolerances = [1e-9, 1e-7, 1e-5, 1e-3, 1e-1, 10.0]
    slightly_curved = CoordinateModel.common(
        lambda theta, u: theta[0] + u + 1e-4 * theta[0] * u**2, n=2, p=1, name="slightly curved"
    )
    checks = [
        lambda tol: separability_test(_location(), POSITIVE, POSITIVE, tol=tol),
        lambda tol: separability_test(_scale(), POSITIVE, POSITIVE, tol=tol),
        lambda tol: separability_test(_curved(), POSITIVE, POSITIVE, tol=tol),
        lambda tol: separability_test(slightly_curved, POSITIVE, POSITIVE, tol=tol),
        lambda tol: n_sample_separability(_curved(3), POSITIVE, POSITIVE, tol=tol),
        lambda tol: two_parameter_test(_location_scale(), (-2.0, 2.0), [(-1.0, 1.0), POSITIVE], tol=tol),
    ]
    for check in checks:
        verdicts = [check(tol).regular for tol in tolerances]
        assert verdicts == sorted(verdicts), verdicts
