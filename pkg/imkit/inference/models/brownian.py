"""
Corrupted Brownian motion observed with Gaussian noise.

Differencing the path y_0..y_n removes the intercept and gives
Z ~ N(0, sigma^2 (Sigma_n + phi I)) with Sigma_n the tridiagonal Toeplitz
matrix (2 on the diagonal, -1 beside it). Its closed-form eigensystem turns
Z into independent Q_i = (v_i' Z)^2 = sigma^2 (lambda_i + phi) U_i with
U_i ~ chi2(1).
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, stats

from ...const import (
    MODEL_BROWNIAN,
    MODEL_BROWNIAN_RATIO,
    SLICE_GRID_POINTS,
    SLICE_LOG_DROP,
    SLICE_QUANTILE,
)
from ..association import Association, AuxiliaryDistribution, ParameterSpace
from ..characteristics import CharacteristicField
from ..engine import ConditionalAssociation
from ..exceptions.im_exception import ConfigurationException, DomainException
from ..exceptions.solver_exception import QuadratureException

_LOGGER = logging.getLogger(__name__)

_NORMALIZATION_RTOL = 1e-6
_CHI2 = stats.chi2(1)


def brownian_eigensystem(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues 2 - 2cos(i pi/(n+1)) and orthonormal sine eigenvectors (columns)."""
    if n < 1:
        msg = f"n must be positive, got {n}"
        raise ConfigurationException(msg)
    index = np.arange(1, n + 1)
    angle = index * np.pi / (n + 1)
    lambdas = 2.0 - 2.0 * np.cos(angle)
    eigvecs = np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(index, index) * np.pi / (n + 1))
    return lambdas, eigvecs


def brownian_matrix(n: int) -> np.ndarray:
    """Dense Sigma_n, tridiagonal with 2 on the diagonal and -1 beside it."""
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


@dataclass(frozen=True)
class BrownianModel:
    n: int
    sigma2: float
    phi: float
    lambdas: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)

    @classmethod
    def create(cls, n: int, sigma2: float, phi: float) -> "BrownianModel":
        if n < 3:
            msg = f"The Brownian model needs n >= 3 increments, got {n}"
            raise ConfigurationException(msg)
        if not sigma2 > 0 or not phi > 0:
            msg = f"sigma2 and phi must be positive, got sigma2={sigma2}, phi={phi}"
            raise DomainException(msg)
        lambdas, eigvecs = brownian_eigensystem(n)
        return cls(n, float(sigma2), float(phi), lambdas, eigvecs)

    @classmethod
    def from_psi(cls, n: int, sigma2: float, psi: float) -> "BrownianModel":
        """psi = tau^2 / sigma^2 is the signal-to-noise ratio; phi = psi / n."""
        return cls.create(n, sigma2, psi / n)

    @property
    def psi(self) -> float:
        return self.phi * self.n

    def q_scales(self) -> np.ndarray:
        return self.sigma2 * (self.lambdas + self.phi)


def brownian_statistics(y) -> np.ndarray:
    """Q_i = (v_i' Z)^2 for the serial differences Z of the path y_0..y_n."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size < 2:
        msg = "A path needs at least two observations"
        raise ConfigurationException(msg)
    z = np.diff(y)
    _, eigvecs = brownian_eigensystem(z.size)
    return (eigvecs.T @ z) ** 2


def simulate_brownian_path(
    n: int, sigma2: float, psi: float, seed, intercept: float = 0.0
) -> np.ndarray:
    """y_i = intercept + B(t_i) + e_i at t_i = i/n, B Brownian with scale psi sigma^2, e_i ~ N(0, sigma^2)."""
    model = BrownianModel.from_psi(n, sigma2, psi)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    increments = rng.normal(scale=np.sqrt(model.sigma2 * model.phi), size=n)
    signal = np.concatenate([[0.0], np.cumsum(increments)])
    noise = rng.normal(scale=np.sqrt(model.sigma2), size=n + 1)
    return intercept + signal + noise


def _phi_space(lambdas: np.ndarray, log_scale: bool) -> ParameterSpace:
    if log_scale:
        return ParameterSpace((-np.inf, -float(lambdas[0])), (np.inf, np.inf), ("log_sigma2", "phi"))
    return ParameterSpace((0.0, -float(lambdas[0])), (np.inf, np.inf), ("sigma2", "phi"))


def brownian_q_association(n: int) -> Association:
    """Q_i = sigma^2 (lambda_i + phi) U_i, theta = (sigma^2, phi), U_i ~ chi2(1)."""
    lambdas, _ = brownian_eigensystem(n)

    def inverse(q, theta):
        scale = theta[0] * (lambdas + theta[1])
        return np.where(q > 0, q / scale, np.nan)

    def partials(q, theta):
        sigma2, phi = theta
        shifted = lambdas + phi
        return np.column_stack([-q / (sigma2**2 * shifted), -q / (sigma2 * shifted**2)])

    return Association(
        name=f"{MODEL_BROWNIAN} Q",
        n_data=n,
        params=_phi_space(lambdas, log_scale=False),
        aux=AuxiliaryDistribution.iid(_CHI2, n, name="iid chi2(1)"),
        forward_map=lambda u, theta: theta[0] * (lambdas + theta[1]) * u,
        inverse_map=inverse,
        partials=partials,
        metadata={"lambdas": lambdas},
    )


def brownian_v_association(n: int) -> Association:
    """V_i = ln Q_i - ln sigma^2 - ln(lambda_i + phi), theta = (ln sigma^2, phi), V_i = ln U_i."""
    lambdas, _ = brownian_eigensystem(n)

    def inverse(q, theta):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(q > 0, np.log(q) - theta[0] - np.log(lambdas + theta[1]), np.nan)

    def partials(q, theta):
        return np.column_stack([np.full(n, -1.0), -1.0 / (lambdas + theta[1])])

    return Association(
        name=f"{MODEL_BROWNIAN} V",
        n_data=n,
        params=_phi_space(lambdas, log_scale=True),
        aux=AuxiliaryDistribution.log_of(_CHI2, n, name="iid log chi2(1)"),
        forward_map=lambda v, theta: np.exp(v + theta[0] + np.log(lambdas + theta[1])),
        inverse_map=inverse,
        partials=partials,
        metadata={"lambdas": lambdas},
    )


def _default_pair(pair) -> tuple[int, int]:
    pair = (0, 1) if pair is None else tuple(int(i) for i in pair)
    if len(pair) != 2 or pair[0] == pair[1]:
        msg = f"The anchoring pair needs two distinct indices, got {pair}"
        raise ConfigurationException(msg)
    return pair


def _positive_statistics(q) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.size < 3:
        msg = f"Conditioning needs n >= 3 statistics, got {q.size}"
        raise ConfigurationException(msg)
    if np.any(q <= 0):
        msg = "All Q_i must be positive to take logarithms"
        raise DomainException(msg)
    return q


@dataclass(frozen=True)
class BrownianConditioning:
    """H_i(v) = v_i + c1_i v_a + c2_i v_b for i outside the pair (a, b), with v = ln U."""

    pair: tuple[int, int]
    indices: tuple[int, ...]
    coefficients: np.ndarray
    observed_values: np.ndarray
    anchor: tuple[float, float]

    @property
    def functions(self) -> list[Callable[[np.ndarray], float]]:
        return [
            (lambda v, i=i, c=c: float(v[i] + c[0] * v[self.pair[0]] + c[1] * v[self.pair[1]]))
            for i, c in zip(self.indices, self.coefficients, strict=True)
        ]

    def evaluate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        a, b = self.pair
        c = self.coefficients
        return v[..., list(self.indices)] + c[:, 0] * v[..., [a]] + c[:, 1] * v[..., [b]]


def brownian_conditioning(q, theta0, pair=None) -> BrownianConditioning:
    """
    Local conditioning variables at theta0 = (ln sigma0^2, phi0).

    With a_j = lambda_j + phi0, the coefficients solve c1 + c2 = -1 and
    1/a_i + c1/a_a + c2/a_b = 0, which cancels both theta-derivatives of
    H_i(V(Q, theta)) at theta0.
    """
    q = _positive_statistics(q)
    n = q.size
    a, b = _default_pair(pair)
    log_sigma2, phi0 = (float(v) for v in np.atleast_1d(theta0))
    if not phi0 > 0:
        msg = f"phi0 must be positive, got {phi0}"
        raise DomainException(msg)
    lambdas, _ = brownian_eigensystem(n)
    if lambdas[a] == lambdas[b]:
        msg = "The anchoring pair needs distinct eigenvalues"
        raise ConfigurationException(msg)
    inv = 1.0 / (lambdas + phi0)
    indices = tuple(i for i in range(n) if i not in (a, b))
    c2 = np.array([(inv[a] - inv[i]) / (inv[b] - inv[a]) for i in indices])
    c1 = -1.0 - c2
    conditioning = BrownianConditioning(
        pair=(a, b),
        indices=indices,
        coefficients=np.column_stack([c1, c2]),
        observed_values=np.zeros(len(indices)),
        anchor=(log_sigma2, phi0),
    )
    v_observed = brownian_v_association(n).inverse(q, (log_sigma2, phi0))
    return replace(conditioning, observed_values=conditioning.evaluate(v_observed))


def _log_chi2_density(w: np.ndarray) -> np.ndarray:
    """log density of ln U for U ~ chi2(1)."""
    return 0.5 * w - 0.5 * np.exp(w) - 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SliceDensity:
    """Density of (ln U_a, ln U_b) on the slice H = h, normalized over a clipped box."""

    conditioning: BrownianConditioning
    lower: np.ndarray
    upper: np.ndarray
    log_peak: float
    log_norm: float
    quadrature_error: float

    def unnormalized_log(self, w1, w2) -> np.ndarray:
        w1 = np.asarray(w1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        total = _log_chi2_density(w1) + _log_chi2_density(w2)
        c = self.conditioning.coefficients
        for k, h in enumerate(self.conditioning.observed_values):
            total = total + _log_chi2_density(h - c[k, 0] * w1 - c[k, 1] * w2)
        return total

    def log_density(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        inside = np.all((w >= self.lower) & (w <= self.upper), axis=-1)
        with np.errstate(over="ignore"):
            value = self.unnormalized_log(w[..., 0], w[..., 1]) - self.log_peak - self.log_norm
        return np.where(inside, value, -np.inf)

    def total_mass(self) -> float:
        """Integral of the normalized density over its box."""
        mass, _ = integrate.dblquad(
            lambda w2, w1: np.exp(self.log_density(np.array([w1, w2]))),
            self.lower[0], self.upper[0], self.lower[1], self.upper[1],
            epsabs=1e-12, epsrel=1e-10,
        )
        return mass


def build_slice_density(conditioning: BrownianConditioning, grid_points: int = SLICE_GRID_POINTS) -> SliceDensity:
    """
    Clip to quantile bounds, tighten to where the log density is within the
    drop of its peak, normalize by quadrature.
    """
    lo = np.log(_CHI2.ppf(SLICE_QUANTILE))
    hi = np.log(_CHI2.isf(SLICE_QUANTILE))
    lower, upper = np.array([lo, lo]), np.array([hi, hi])
    draft = SliceDensity(conditioning, lower, upper, 0.0, 0.0, 0.0)
    axes = [np.linspace(lower[k], upper[k], grid_points) for k in range(2)]
    grid1, grid2 = np.meshgrid(*axes, indexing="ij")
    with np.errstate(over="ignore"):
        values = draft.unnormalized_log(grid1, grid2)
    peak = float(np.max(values))
    if not np.isfinite(peak):
        msg = f"Slice density has no finite values on the box {lower.tolist()} x {upper.tolist()}"
        raise QuadratureException(msg)
    keep = values > peak - SLICE_LOG_DROP
    rows, cols = np.nonzero(keep)
    step = (upper - lower) / (grid_points - 1)
    lower = np.maximum(lower, [axes[0][rows.min()] - step[0], axes[1][cols.min()] - step[1]])
    upper = np.minimum(upper, [axes[0][rows.max()] + step[0], axes[1][cols.max()] + step[1]])

    mass, error = integrate.dblquad(
        lambda w2, w1: np.exp(draft.unnormalized_log(w1, w2) - peak),
        lower[0], upper[0], lower[1], upper[1],
        epsabs=1e-13, epsrel=1e-9,
    )
    if not mass > 0 or error > _NORMALIZATION_RTOL * mass:
        msg = (
            f"Slice normalization did not converge: mass={mass:.6g}, error={error:.3g}, "
            f"box={lower.tolist()} x {upper.tolist()}, grid={grid_points}"
        )
        raise QuadratureException(msg)
    _LOGGER.debug("Slice density box %s x %s, mass %.6g (error %.2g)", lower, upper, mass, error)
    return SliceDensity(conditioning, lower, upper, peak, float(np.log(mass)), float(error))


def grid_sampler(density: SliceDensity, grid_points: int = SLICE_GRID_POINTS):
    """Inverse-CDF sampling over the product grid cells with uniform jitter inside a cell."""
    edges = [np.linspace(density.lower[k], density.upper[k], grid_points + 1) for k in range(2)]
    centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
    c1, c2 = np.meshgrid(*centers, indexing="ij")
    weights = np.exp(density.unnormalized_log(c1, c2) - density.log_peak).ravel()
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    width = np.array([edges[0][1] - edges[0][0], edges[1][1] - edges[1][0]])

    def sampler(rng, size):
        cells = np.searchsorted(cumulative, rng.random(size), side="right")
        cells = np.minimum(cells, cumulative.size - 1)
        row, col = np.divmod(cells, grid_points)
        jitter = rng.random((size, 2))
        return np.column_stack(
            [edges[0][row] + jitter[:, 0] * width[0], edges[1][col] + jitter[:, 1] * width[1]]
        )

    return sampler


def brownian_conditional_im(
    q, theta0, pair=None, grid_points: int = SLICE_GRID_POINTS
) -> ConditionalAssociation:
    """
    Local conditional association ln Q_a = ln sigma^2 + ln(lambda_a + phi) + W_a (same for b).

    (W_a, W_b) = (ln U_a, ln U_b) follows the slice law given the observed
    conditioning values; plausibility uses highest-density sets by Monte Carlo.
    """
    q = _positive_statistics(q)
    conditioning = brownian_conditioning(q, theta0, pair)
    a, b = conditioning.pair
    lambdas, _ = brownian_eigensystem(q.size)
    shifts = lambdas[[a, b]]
    density = build_slice_density(conditioning, grid_points)

    return ConditionalAssociation(
        name=f"{MODEL_BROWNIAN} conditional",
        params=_phi_space(lambdas, log_scale=True),
        n_data=q.size,
        q=2,
        statistic=lambda data: np.log(np.asarray(data, dtype=float)[[a, b]]),
        b=lambda w, theta: w + theta[0] + np.log(shifts + theta[1]),
        b_inverse=lambda t, theta: t - theta[0] - np.log(shifts + theta[1]),
        conditioning_values=tuple(conditioning.observed_values.tolist()),
        conditional_sampler=grid_sampler(density, grid_points),
        conditional_log_density=density.log_density,
        anchor=tuple(conditioning.anchor),
        metadata={"density": density, "conditioning": conditioning},
    )


def brownian_ratio_association(n: int, pair=None) -> Association:
    """ln(Q_a / Q_b) = ln((lambda_a + phi) / (lambda_b + phi)) + W, W = ln F(1, 1); inference on phi alone."""
    a, b = _default_pair(pair)
    lambdas, _ = brownian_eigensystem(n)
    la, lb = lambdas[a], lambdas[b]

    def shift(phi):
        return np.log((la + phi) / (lb + phi))

    return Association(
        name=MODEL_BROWNIAN_RATIO,
        n_data=1,
        params=ParameterSpace((-float(min(la, lb)),), (np.inf,), ("phi",)),
        aux=AuxiliaryDistribution.log_of(stats.f(1, 1), 1, name="log F(1,1)"),
        forward_map=lambda w, theta: w + shift(theta[0]),
        inverse_map=lambda x, theta: x - shift(theta[0]),
        partials=lambda x, theta: np.array([[1.0 / (lb + theta[0]) - 1.0 / (la + theta[0])]]),
        metadata={"pair": (a, b)},
    )


def ratio_statistic(q, pair=None) -> np.ndarray:
    q = _positive_statistics(q)
    a, b = _default_pair(pair)
    return np.array([np.log(q[a] / q[b])])


def ratio_argmax(q, pair=None) -> float:
    """phi where the ratio plausibility equals 1: (lambda_a + phi) / (lambda_b + phi) = Q_a / Q_b."""
    a, b = _default_pair(pair)
    q = _positive_statistics(q)
    lambdas, _ = brownian_eigensystem(q.size)
    r = q[a] / q[b]
    if r == 1.0:
        return np.inf
    return float((r * lambdas[b] - lambdas[a]) / (1.0 - r))


@dataclass(frozen=True)
class XiPosterior:
    mean: np.ndarray
    cov: np.ndarray


def brownian_xi_posterior(z, sigma2: float, psi: float) -> XiPosterior:
    """
    Posterior of the increments xi given Z, through the eigensystem.

    mean = V diag(phi / (lambda + phi)) V' z and
    cov = sigma^2 V diag(lambda phi / (lambda + phi)) V'.
    """
    if not sigma2 > 0 or not psi > 0:
        msg = f"sigma2 and psi must be positive, got sigma2={sigma2}, psi={psi}"
        raise DomainException(msg)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lambdas, eigvecs = brownian_eigensystem(z.size)
    phi = psi / z.size
    shrink = phi / (lambdas + phi)
    mean = eigvecs @ (shrink * (eigvecs.T @ z))
    cov = sigma2 * (eigvecs * (lambdas * shrink)) @ eigvecs.T
    return XiPosterior(mean=mean, cov=0.5 * (cov + cov.T))


def _checked_beta_inputs(q, phi, lambdas):
    q = _positive_statistics(q)
    lambdas = brownian_eigensystem(q.size)[0] if lambdas is None else np.asarray(lambdas, dtype=float)
    if lambdas.shape != q.shape:
        msg = f"Expected {q.size} eigenvalues, got {lambdas.size}"
        raise ConfigurationException(msg)
    if not phi > 0:
        msg = f"phi must be positive, got {phi}"
        raise DomainException(msg)
    return q, lambdas


def brownian_beta(q, phi: float, lambdas=None) -> np.ndarray:
    """B_i = (q_i / (lambda_i + phi)) / sum_j q_j / (lambda_j + phi); multivariate beta under the model."""
    q, lambdas = _checked_beta_inputs(q, phi, lambdas)
    scaled = q / (lambdas + phi)
    return scaled / scaled.sum()


def brownian_marginal_field(q, phi: float, lambdas=None) -> np.ndarray:
    """
    dB_i/dphi for i < n:

        (B_i / (lambda_n + phi)) [sum_{j<n} (lambda_n - lambda_j) / (lambda_j + phi) B_j
                                  + (lambda_i - lambda_n) / (lambda_i + phi)]
    """
    q, lambdas = _checked_beta_inputs(q, phi, lambdas)
    beta = brownian_beta(q, phi, lambdas)
    return _beta_field(beta[:-1], phi, lambdas)


def _beta_field(head: np.ndarray, phi: float, lambdas: np.ndarray) -> np.ndarray:
    last = lambdas[-1]
    front = lambdas[:-1]
    total = np.sum((last - front) / (front + phi) * head)
    return head / (last + phi) * (total + (front - last) / (front + phi))


def brownian_beta_field(n: int, phi0: float) -> CharacteristicField:
    """Characteristic field of (B_1..B_{n-1}) along phi = phi0 + tau."""
    if not phi0 > 0:
        msg = f"phi0 must be positive, got {phi0}"
        raise DomainException(msg)
    lambdas, _ = brownian_eigensystem(n)

    def function(tau, head):
        return _beta_field(np.asarray(head, dtype=float), phi0 + float(tau[0]), lambdas).reshape(n - 1, 1)

    return CharacteristicField(n=n - 1, p=1, function=function, anchor=(phi0,), name="brownian beta field")
