"""Tests for the corrupted Brownian motion model."""

from dataclasses import replace

import numpy as np
import pytest
from scipy import linalg, stats

from imkit.inference.association import AuxiliaryDistribution
from imkit.inference.characteristics import PicardConfig, picard_solve
from imkit.inference.engine import (
    conditional_plausibility,
    conditional_validity_diagnostic,
    plausibility_curve,
)
from imkit.inference.exceptions.im_exception import ConfigurationException, DomainException, NumericalException
from imkit.inference.exceptions.solver_exception import QuadratureException
from imkit.inference.models.brownian import (
    BrownianModel,
    brownian_beta,
    brownian_beta_field,
    brownian_conditional_im,
    brownian_conditioning,
    brownian_eigensystem,
    brownian_marginal_field,
    brownian_matrix,
    brownian_q_association,
    brownian_ratio_association,
    brownian_statistics,
    brownian_v_association,
    brownian_xi_posterior,
    build_slice_density,
    ratio_argmax,
    ratio_statistic,
    simulate_brownian_path,
)
from imkit.inference.random_sets import symmetric_prs


def test_eigenvalues_small_case():
    lambdas, _ = brownian_eigensystem(3)
    assert np.allclose(lambdas, [2 - np.sqrt(2), 2, 2 + np.sqrt(2)], atol=1e-12)


@pytest.mark.parametrize("n", [3, 8, 32])
def test_eigensystem_matches_dense_solver(n):
    """Closed form agrees with a dense symmetric eigensolver."""
    lambdas, eigvecs = brownian_eigensystem(n)
    dense_values, dense_vectors = np.linalg.eigh(brownian_matrix(n))
    assert np.max(np.abs(lambdas - dense_values)) <= 1e-10
    assert lambdas.sum() == pytest.approx(2 * n)
    assert np.allclose(eigvecs.T @ eigvecs, np.eye(n), atol=1e-12)
    for i in range(n):
        angle = linalg.subspace_angles(eigvecs[:, [i]], dense_vectors[:, [i]])
        assert np.max(angle) <= 1e-8


def test_eigen_reconstruction():
    lambdas, eigvecs = brownian_eigensystem(6)
    assert np.allclose((eigvecs * lambdas) @ eigvecs.T, brownian_matrix(6), atol=1e-12)


def test_model_validation():
    with pytest.raises(ConfigurationException):
        BrownianModel.create(2, 1.0, 1.0)
    with pytest.raises(DomainException):
        BrownianModel.create(5, 1.0, 0.0)
    model = BrownianModel.from_psi(10, 2.0, 5.0)
    assert model.phi == pytest.approx(0.5)
    assert model.psi == pytest.approx(5.0)
    assert np.allclose(model.q_scales(), 2.0 * (model.lambdas + 0.5))


def test_statistics_remove_intercept():
    """Differencing removes the intercept; Q sums to the squared differences."""
    base = simulate_brownian_path(8, 1.0, 2.0, seed=3)
    shifted = simulate_brownian_path(8, 1.0, 2.0, seed=3, intercept=5.0)
    assert base.size == 9
    assert np.allclose(brownian_statistics(base), brownian_statistics(shifted), atol=1e-12)
    assert brownian_statistics(base).sum() == pytest.approx(np.sum(np.diff(base) ** 2))
    assert np.allclose(brownian_statistics(np.full(5, 2.0)), 0.0)


def test_simulation_is_seeded():
    assert np.array_equal(simulate_brownian_path(5, 1.0, 1.0, 4), simulate_brownian_path(5, 1.0, 1.0, 4))


def test_q_association_round_trip(rng):
    assoc = brownian_q_association(6)
    u = rng.chisquare(1, size=6)
    assert assoc.round_trip_error(u, [1.3, 0.4]) <= 1e-12
    assert np.allclose(assoc.du_dtheta(assoc.forward(u, [1.3, 0.4]), [1.3, 0.4]),
                       assoc.du_dtheta(assoc.forward(u, [1.3, 0.4]), [1.3, 0.4], method="fd"),
                       rtol=1e-5)


def test_xi_posterior_matches_dense_formula(rng):
    n, sigma2, psi = 8, 1.5, 3.0
    z = rng.normal(size=n)
    posterior = brownian_xi_posterior(z, sigma2, psi)
    phi = psi / n
    sigma = brownian_matrix(n)
    precision = np.linalg.inv(sigma) + np.eye(n) / phi
    dense_cov = sigma2 * np.linalg.inv(precision)
    dense_mean = np.linalg.inv(precision) @ np.linalg.solve(sigma, z)
    assert np.allclose(posterior.mean, dense_mean, atol=1e-10)
    assert np.allclose(posterior.cov, dense_cov, atol=1e-10)
    assert np.allclose(posterior.cov, posterior.cov.T)
    assert np.min(np.linalg.eigvalsh(posterior.cov)) > 0


def test_xi_posterior_limits():
    z = np.array([0.5, -1.0, 2.0, 0.3])
    assert np.allclose(brownian_xi_posterior(np.zeros(4), 1.0, 1.0).mean, 0.0)
    assert np.allclose(brownian_xi_posterior(z, 1.0, 1e8).mean, z, atol=1e-5)
    with pytest.raises(DomainException):
        brownian_xi_posterior(z, 1.0, 0.0)


@pytest.mark.slow
def test_xi_posterior_mean_by_regression(rng):
    """Regressing simulated increments on Z recovers the posterior mean operator."""
    n, sigma2, psi, draws = 4, 1.0, 4.0, 10000
    phi = psi / n
    xi = rng.normal(scale=np.sqrt(sigma2 * phi), size=(draws, n))
    noise = rng.normal(scale=np.sqrt(sigma2), size=(draws, n + 1))
    z = xi + np.diff(noise, axis=1)
    coefficients, *_ = np.linalg.lstsq(z, xi, rcond=None)
    lambdas, eigvecs = brownian_eigensystem(n)
    operator = eigvecs @ np.diag(phi / (lambdas + phi)) @ eigvecs.T
    assert np.max(np.abs(coefficients.T - operator)) <= 0.06


def test_conditioning_coefficients():
    q = np.array([0.5, 1.2, 2.0, 0.7, 3.1])
    conditioning = brownian_conditioning(q, (0.2, 0.8))
    assert conditioning.indices == (2, 3, 4)
    assert np.allclose(conditioning.coefficients.sum(axis=1), -1.0)
    lambdas, _ = brownian_eigensystem(5)
    inv = 1.0 / (lambdas + 0.8)
    c = conditioning.coefficients
    assert np.allclose(inv[2:] + c[:, 0] * inv[0] + c[:, 1] * inv[1], 0.0, atol=1e-14)


def test_conditioning_rejects_bad_input():
    with pytest.raises(DomainException):
        brownian_conditioning([1.0, 0.0, 2.0], (0.0, 1.0))
    with pytest.raises(ConfigurationException):
        brownian_conditioning([1.0, 2.0, 3.0], (0.0, 1.0), pair=(1, 1))
    with pytest.raises(ConfigurationException):
        brownian_conditioning([1.0, 2.0], (0.0, 1.0))


def _simulated_statistics(n=5, seed=12):
    return brownian_statistics(simulate_brownian_path(n, 1.0, 2.0, seed))


def test_slice_density_is_normalized():
    q = _simulated_statistics()
    cond = brownian_conditional_im(q, (0.0, 0.4))
    density = cond.metadata["density"]
    assert density.total_mass() == pytest.approx(1.0, abs=1e-5)
    assert density.quadrature_error <= 1e-6 * np.exp(density.log_norm)


def test_slice_density_without_mass_raises():
    """Conditioning values far outside the slice range leave nothing to normalize."""
    conditioning = brownian_conditioning(_simulated_statistics(), (0.0, 0.4))
    far = replace(conditioning, observed_values=np.full(conditioning.observed_values.shape, 1e4))
    with pytest.raises(QuadratureException) as raised:
        build_slice_density(far)
    assert isinstance(raised.value, NumericalException)


def test_conditional_sampler_stays_in_box():
    q = _simulated_statistics()
    cond = brownian_conditional_im(q, (0.0, 0.4))
    density = cond.metadata["density"]
    draws = cond.sample(3, 500)
    assert draws.shape == (500, 2)
    assert np.all(draws >= density.lower - 1e-12)
    assert np.all(draws <= density.upper + 1e-12)
    assert cond.round_trip_error(draws[0], (0.0, 0.4)) <= 1e-12


def test_conditional_plausibility_far_from_data():
    """A tiny scale pushes the log statistics past the slice box."""
    q = _simulated_statistics()
    cond = brownian_conditional_im(q, (0.0, 0.4))
    near = conditional_plausibility(cond, None, q, (0.0, 0.4), n_draws=2000, seed=5)
    far = conditional_plausibility(cond, None, q, (-10.0, 0.4), n_draws=2000, seed=5)
    assert 0.0 <= near <= 1.0
    assert far == 0.0


def test_ratio_plausibility_peaks_at_closed_form():
    """Ratio pl is 1 where (lambda_1 + phi) / (lambda_2 + phi) = Q_1 / Q_2."""
    q = np.array([1.0, 2.0, 3.0, 1.5, 2.5])
    assoc = brownian_ratio_association(5)
    prs = symmetric_prs(assoc.aux, assoc.aux.median)
    grid = np.linspace(0.01, 3.0, 300)
    curve = plausibility_curve(assoc, prs, ratio_statistic(q), grid)
    expected = ratio_argmax(q)
    assert expected == pytest.approx((0.5 - (2 - np.sqrt(3))) / 0.5)
    assert abs(curve.argmax()[0] - expected) <= grid[1] - grid[0]
    assert np.max(curve.pl) == pytest.approx(1.0, abs=0.01)


def test_pair_profile_peaks_with_ratio_curve():
    """Profiling the (Q_1, Q_2) plausibility over ln sigma^2 peaks where the ratio curve does."""
    q = np.array([1.0, 2.0, 3.0, 1.5, 2.5])
    grid = np.linspace(0.01, 3.0, 300)
    ratio = brownian_ratio_association(5)
    ratio_curve = plausibility_curve(
        ratio, symmetric_prs(ratio.aux, ratio.aux.median), ratio_statistic(q), grid
    )

    v_assoc = brownian_v_association(5)
    pair_aux = AuxiliaryDistribution.log_of(stats.chi2(1), 2)
    pair_prs = symmetric_prs(pair_aux, pair_aux.median)
    log_sigma2 = np.linspace(-4.0, 6.0, 5001)
    profile = np.array([
        np.max(pair_prs.containment_prob(v_assoc.inverse(q, (0.0, phi))[:2] - log_sigma2[:, None]))
        for phi in grid
    ])
    assert abs(int(np.argmax(profile)) - int(np.argmax(ratio_curve.pl))) <= 1
    assert np.max(profile) == pytest.approx(1.0, abs=0.01)


def test_ratio_argmax_without_crossing():
    assert ratio_argmax([2.0, 2.0, 1.0]) == np.inf


def test_beta_sums_to_one():
    q = _simulated_statistics(n=7)
    beta = brownian_beta(q, 0.6)
    assert beta.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(beta > 0)


def test_marginal_field_matches_differences(rng):
    """dB/dphi agrees with central differences over random inputs."""
    n = 6
    for _ in range(100):
        q = rng.chisquare(1, size=n) + 1e-3
        phi = rng.uniform(0.05, 5.0)
        h = 1e-6 * phi
        numeric = (brownian_beta(q, phi + h) - brownian_beta(q, phi - h))[:-1] / (2 * h)
        assert np.allclose(brownian_marginal_field(q, phi), numeric, rtol=1e-5, atol=1e-7)


def test_beta_field_trajectory():
    """The characteristic through B(phi0) is B(phi0 + tau)."""
    q = np.array([0.4, 1.1, 2.5, 0.9, 1.7])
    phi0 = 1.0
    cfield = brownian_beta_field(5, phi0)
    head = brownian_beta(q, phi0)[:-1]
    trajectory = picard_solve(cfield, head, [0.0], PicardConfig(half_widths=(0.2,), radius=1.0))
    for tau in (-0.2, 0.1, 0.2):
        assert np.allclose(trajectory.evaluate([tau]), brownian_beta(q, phi0 + tau)[:-1], atol=1e-9)


def test_marginal_field_vanishes_for_equal_eigenvalues():
    """With equal eigenvalues B does not depend on phi."""
    q = np.array([0.4, 1.1, 2.5, 0.9, 1.7])
    assert np.all(brownian_marginal_field(q, 0.8, lambdas=np.full(5, 2.0)) == 0.0)


def test_marginal_field_is_first_order_in_eigenvalue_spread():
    """Spreading equal eigenvalues by eps moves the field by O(eps)."""
    q = np.array([0.4, 1.1, 2.5, 0.9, 1.7])
    spread = np.arange(5.0)
    fields = {
        eps: brownian_marginal_field(q, 0.8, lambdas=2.0 + eps * spread) for eps in (1e-4, 2e-4)
    }
    assert np.linalg.norm(fields[1e-4]) > 0
    assert np.allclose(fields[2e-4] / 2e-4, fields[1e-4] / 1e-4, rtol=1e-3, atol=1e-8)


@pytest.mark.slow
def test_conditional_im_is_valid():
    """Conditional plausibility at the truth dominates the uniform over simulated paths."""
    n, sigma2, psi = 5, 1.0, 2.0
    truth = (np.log(sigma2), psi / n)
    report = conditional_validity_diagnostic(
        lambda q: brownian_conditional_im(q, truth),
        lambda rng: brownian_statistics(simulate_brownian_path(n, sigma2, psi, rng)),
        truth,
        n_sim=1000,
        n_draws=1000,
        seed=7,
    )
    assert report.passed, report.to_dict()
    assert report.ks_one_sided <= 0.05
