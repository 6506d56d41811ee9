"""Gaussian catalog models: known-variance mean and location-scale."""

import logging

import numpy as np
from scipy import stats

from ...const import MODEL_GAUSSIAN_LOCATION_SCALE, MODEL_GAUSSIAN_MEAN
from ..association import Association, AuxiliaryDistribution, ParameterSpace
from ..engine import ConditionalAssociation
from ..exceptions.im_exception import ConfigurationException

_LOGGER = logging.getLogger(__name__)


def gaussian_mean_model(n: int = 1, sigma: float = 1.0) -> Association:
    """x_i = mu + sigma u_i with u_i iid standard normal."""
    if n < 1:
        msg = f"n must be positive, got {n}"
        raise ConfigurationException(msg)
    if not sigma > 0:
        msg = f"sigma must be positive, got {sigma}"
        raise ConfigurationException(msg)

    def partials(x, theta):
        return np.full((n, 1), -1.0 / sigma)

    return Association(
        name=MODEL_GAUSSIAN_MEAN,
        n_data=n,
        params=ParameterSpace.real_line(1, ("mu",)),
        aux=AuxiliaryDistribution.iid(stats.norm(), n, name="iid normal"),
        forward_map=lambda u, theta: theta[0] + sigma * u,
        inverse_map=lambda x, theta: (x - theta[0]) / sigma,
        partials=partials,
        metadata={"sigma": sigma},
    )


def gaussian_mean_conditional(x, sigma: float = 1.0) -> ConditionalAssociation:
    """
    Regular CIM for the mean: xbar = mu + V, V ~ N(0, sigma^2 / n).

    The residuals x_i - xbar equal sigma (u_i - ubar) and are fully observed.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    if n < 2:
        msg = "Conditioning needs at least two observations"
        raise ConfigurationException(msg)
    if not sigma > 0:
        msg = f"sigma must be positive, got {sigma}"
        raise ConfigurationException(msg)
    law = stats.norm(scale=sigma / np.sqrt(n))
    residuals = x - x.mean()
    return ConditionalAssociation(
        name=f"{MODEL_GAUSSIAN_MEAN} conditional",
        params=ParameterSpace.real_line(1, ("mu",)),
        n_data=n,
        q=1,
        statistic=lambda data: np.atleast_1d(np.mean(data)),
        b=lambda v, theta: theta[0] + v,
        b_inverse=lambda t, theta: t - theta[0],
        conditioning_values=tuple(residuals[:-1].tolist()),
        conditional_sampler=lambda rng, size: law.rvs(size=(size, 1), random_state=rng),
        conditional_log_density=lambda v: np.sum(law.logpdf(v), axis=-1),
        marginal_cdf=law.cdf,
        center=(0.0,),
        anchor="global",
    )


def gaussian_location_scale_model(n: int = 3) -> Association:
    """x_i = mu + sigma u_i with theta = (mu, sigma)."""
    if n < 3:
        msg = f"The location-scale model needs n >= 3, got {n}"
        raise ConfigurationException(msg)

    def partials(x, theta):
        mu, sigma = theta
        return np.column_stack([np.full(n, -1.0 / sigma), -(x - mu) / sigma**2])

    return Association(
        name=MODEL_GAUSSIAN_LOCATION_SCALE,
        n_data=n,
        params=ParameterSpace((-np.inf, 0.0), (np.inf, np.inf), ("mu", "sigma")),
        aux=AuxiliaryDistribution.iid(stats.norm(), n, name="iid normal"),
        forward_map=lambda u, theta: theta[0] + theta[1] * u,
        inverse_map=lambda x, theta: (x - theta[0]) / theta[1],
        partials=partials,
    )


def standardized_configuration(values) -> np.ndarray:
    """(z_i - zbar) / sqrt(sum (z - zbar)^2) for i = 3..n; identical for u and x at any (mu, sigma)."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    centered = values - values.mean()
    spread = np.sqrt(np.sum(centered**2))
    if spread == 0:
        msg = "Configuration is undefined for constant data"
        raise ConfigurationException(msg)
    return centered[2:] / spread


def location_scale_characteristic(u) -> float:
    """eta(U) = (U1 - U2) / (U1 - U3)."""
    u = np.asarray(u, dtype=float)
    return float((u[0] - u[1]) / (u[0] - u[2]))


def observed_characteristic(x) -> float:
    """H(X) = (X1 - X2) / (X1 - X3), equal to eta(U) for every (mu, sigma)."""
    return location_scale_characteristic(x)


def gaussian_location_scale_conditional(x) -> ConditionalAssociation:
    """
    Regular CIM in (xbar, s): xbar = mu + sigma V1, s = sigma V2.

    Given the standardized configuration, V1 ~ N(0, 1/n) and
    (n - 1) V2^2 ~ chi2(n - 1) independently.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    if n < 3:
        msg = f"The location-scale model needs n >= 3, got {n}"
        raise ConfigurationException(msg)
    _LOGGER.debug("Conditioning %s on configuration of %d points", MODEL_GAUSSIAN_LOCATION_SCALE, n)
    dof = n - 1
    mean_law = stats.norm(scale=1.0 / np.sqrt(n))
    square_law = stats.chi2(dof)

    def sampler(rng, size):
        first = mean_law.rvs(size=size, random_state=rng)
        second = np.sqrt(square_law.rvs(size=size, random_state=rng) / dof)
        return np.column_stack([first, second])

    def marginal_cdf(v):
        v = np.asarray(v, dtype=float)
        first = mean_law.cdf(v[..., 0])
        second = square_law.cdf(dof * np.clip(v[..., 1], 0.0, None) ** 2)
        return np.stack([first, second], axis=-1)

    def log_density(v):
        v = np.asarray(v, dtype=float)
        second = v[..., 1]
        with np.errstate(divide="ignore"):
            return (
                mean_law.logpdf(v[..., 0])
                + square_law.logpdf(dof * second**2)
                + np.log(2.0 * dof * np.abs(second))
            )

    def statistic(data):
        data = np.asarray(data, dtype=float)
        return np.array([data.mean(), data.std(ddof=1)])

    return ConditionalAssociation(
        name=f"{MODEL_GAUSSIAN_LOCATION_SCALE} conditional",
        params=ParameterSpace((-np.inf, 0.0), (np.inf, np.inf), ("mu", "sigma")),
        n_data=n,
        q=2,
        statistic=statistic,
        b=lambda v, theta: np.array([theta[0] + theta[1] * v[0], theta[1] * v[1]]),
        b_inverse=lambda t, theta: np.array([(t[0] - theta[0]) / theta[1], t[1] / theta[1]]),
        conditioning_values=tuple(standardized_configuration(x).tolist()),
        conditional_sampler=sampler,
        conditional_log_density=log_density,
        marginal_cdf=marginal_cdf,
        center=(0.0, float(np.sqrt(square_law.median() / dof))),
        anchor="global",
    )
