"""Associations X = a(U, theta) with inverse solves and parameter sensitivities."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..const import FD_STEP_FACTOR
from .exceptions.association_exception import InversionException, StencilException
from .exceptions.im_exception import ConfigurationException, DomainException

_LOGGER = logging.getLogger(__name__)

_MAX_EXPANSIONS = 80
_EDGE = 1e-12


@dataclass(frozen=True)
class ParameterSpace:
    """Product of open intervals (lower_k, upper_k); bounds may be infinite."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) < 1 or len(lower) != len(upper):
            msg = f"Parameter bounds must be non-empty and aligned: {lower} / {upper}"
            raise ConfigurationException(msg)
        for k, (lo, hi) in enumerate(zip(lower, upper, strict=True)):
            if not lo < hi:
                msg = f"Parameter coordinate {k + 1} has empty interval ({lo}, {hi})"
                raise ConfigurationException(msg)
        names = tuple(self.names) or tuple(f"theta_{k + 1}" for k in range(len(lower)))
        if len(names) != len(lower):
            msg = f"Expected {len(lower)} parameter names, got {len(names)}"
            raise ConfigurationException(msg)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "names", names)

    @classmethod
    def real_line(cls, dim: int = 1, names=()) -> "ParameterSpace":
        return cls((-math.inf,) * dim, (math.inf,) * dim, tuple(names))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,):
            return False
        return bool(
            np.all(theta > np.asarray(self.lower)) and np.all(theta < np.asarray(self.upper))
        )

    def check(self, theta) -> np.ndarray:
        """Validate theta against the open bounds and return it as an array."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,):
            msg = f"Expected a parameter of dimension {self.dim}, got shape {theta.shape}"
            raise DomainException(msg)
        for k, value in enumerate(theta):
            if not self.lower[k] < value < self.upper[k]:
                msg = (
                    f"{self.names[k]} = {value!r} outside open interval "
                    f"({self.lower[k]}, {self.upper[k]})"
                )
                raise DomainException(msg)
        return theta


@dataclass(frozen=True)
class AuxiliaryDistribution:
    """Known distribution P_U of the auxiliary variable on R^n."""

    dim: int
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    log_density: Callable[[np.ndarray], np.ndarray]
    marginal_cdf: Callable[[np.ndarray], np.ndarray] | None = None
    support: tuple[float, float] = (-math.inf, math.inf)
    name: str = "custom"
    median: float = 0.0

    @classmethod
    def iid(cls, dist, dim: int, name: str | None = None) -> "AuxiliaryDistribution":
        """Product of identical continuous marginals given as a frozen scipy.stats law."""

        def sampler(rng, size):
            return np.asarray(dist.rvs(size=(size, dim), random_state=rng), dtype=float)

        def log_density(u):
            return np.sum(dist.logpdf(np.asarray(u, dtype=float)), axis=-1)

        lower, upper = dist.support()
        return cls(
            dim=dim,
            sampler=sampler,
            log_density=log_density,
            marginal_cdf=dist.cdf,
            support=(float(lower), float(upper)),
            name=name or f"iid {dist.dist.name}",
            median=float(dist.median()),
        )

    @classmethod
    def log_of(cls, dist, dim: int, name: str | None = None) -> "AuxiliaryDistribution":
        """Product of identical marginals of log(Y) for a positive frozen law Y."""

        def sampler(rng, size):
            draws = np.asarray(dist.rvs(size=(size, dim), random_state=rng), dtype=float)
            return np.log(draws)

        def log_density(v):
            v = np.asarray(v, dtype=float)
            return np.sum(dist.logpdf(np.exp(v)) + v, axis=-1)

        def marginal_cdf(v):
            return dist.cdf(np.exp(np.asarray(v, dtype=float)))

        return cls(
            dim=dim,
            sampler=sampler,
            log_density=log_density,
            marginal_cdf=marginal_cdf,
            name=name or f"iid log {dist.dist.name}",
            median=float(np.log(dist.median())),
        )

    def sample(self, rng, size: int = 1) -> np.ndarray:
        """Draw an array of shape (size, dim)."""
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        draws = np.asarray(self.sampler(rng, size), dtype=float)
        return draws.reshape(size, self.dim)

    def in_support(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        lower, upper = self.support
        return np.all((u >= lower) & (u <= upper) & np.isfinite(u), axis=-1)


@dataclass(frozen=True)
class Association:
    """
    Sampling model x = a(u, theta) with its unique inverse u(x, theta).

    inverse_map may be omitted for models whose coordinates are monotone in
    their own auxiliary coordinate; a bracketing root solve is used instead.
    partials, when given, returns the analytic n x p matrix du/dtheta.
    """

    name: str
    n_data: int
    params: ParameterSpace
    aux: AuxiliaryDistribution
    forward_map: Callable[[np.ndarray, np.ndarray], np.ndarray]
    inverse_map: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    partials: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.n_data < 1 or self.aux.dim != self.n_data:
            msg = (
                f"Association {self.name!r} needs aux dimension equal to n_data "
                f"({self.aux.dim} != {self.n_data})"
            )
            raise ConfigurationException(msg)

    def _vector(self, values, label: str) -> np.ndarray:
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if values.shape != (self.n_data,):
            msg = f"{label} must have shape ({self.n_data},), got {values.shape}"
            raise ConfigurationException(msg)
        return values

    def forward(self, u, theta) -> np.ndarray:
        """Simulated data x = a(u, theta)."""
        theta = self.params.check(theta)
        u = self._vector(u, "u")
        return np.asarray(self.forward_map(u, theta), dtype=float).reshape(self.n_data)

    def inverse(self, x, theta) -> np.ndarray:
        """Auxiliary value u(x, theta) solving x = a(u, theta)."""
        theta = self.params.check(theta)
        x = self._vector(x, "x")
        if self.inverse_map is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                u = np.asarray(self.inverse_map(x, theta), dtype=float).reshape(self.n_data)
        else:
            u = self._monotone_inverse(x, theta)
        if not np.all(np.isfinite(u)):
            msg = f"Data {x.tolist()} outside the range of {self.name} at theta={theta.tolist()}"
            raise InversionException(msg)
        return u

    def _monotone_inverse(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        lower, upper = self.aux.support
        u = np.zeros(self.n_data)
        if math.isfinite(lower) or math.isfinite(upper):
            u[:] = _interior_point(lower, upper)
        for i in range(self.n_data):

            def residual(t, i=i):
                trial = u.copy()
                trial[i] = t
                return float(self.forward_map(trial, theta)[i]) - x[i]

            a, b = _bracket(residual, lower, upper)
            try:
                u[i] = optimize.brentq(residual, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps)
            except ValueError as ex:
                msg = f"Root solve failed for coordinate {i + 1} of {self.name}: {ex}"
                raise InversionException(msg) from ex
        return u

    def fd_steps(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return FD_STEP_FACTOR * np.maximum(1.0, np.abs(theta))

    def du_dtheta(self, x, theta, step=None, method: str = "auto") -> np.ndarray:
        """
        Matrix of partials du_i/dtheta_k at (x, theta).

        method "auto" prefers analytic partials, "fd" forces central
        differences of the inverse with step h_k (default 1e-6 max(1, |theta_k|)).
        """
        theta = self.params.check(theta)
        x = self._vector(x, "x")
        if method not in ("auto", "fd", "analytic"):
            msg = f"Unknown differentiation method {method!r}"
            raise ConfigurationException(msg)
        if method != "fd" and self.partials is not None:
            return np.asarray(self.partials(x, theta), dtype=float).reshape(
                self.n_data, self.params.dim
            )
        if method == "analytic":
            msg = f"{self.name} has no analytic partials"
            raise ConfigurationException(msg)
        steps = (
            self.fd_steps(theta)
            if step is None
            else np.broadcast_to(np.asarray(step, dtype=float), theta.shape)
        )
        _LOGGER.debug("Central differences for %s with steps %s", self.name, steps)
        columns = []
        for k in range(self.params.dim):
            h = float(steps[k])
            plus, minus = theta.copy(), theta.copy()
            plus[k] += h
            minus[k] -= h
            if not (self.params.contains(plus) and self.params.contains(minus)):
                msg = (
                    f"{self.params.names[k]} = {theta[k]!r} is within {h:g} of its "
                    "boundary; central stencil leaves the parameter space"
                )
                raise StencilException(msg)
            columns.append((self.inverse(x, plus) - self.inverse(x, minus)) / (2.0 * h))
        return np.column_stack(columns)

    def sample_data(self, theta, seed) -> np.ndarray:
        """x = forward(U, theta) with U drawn from the auxiliary law; deterministic in seed."""
        theta = self.params.check(theta)
        u = self.aux.sample(seed, 1)[0]
        return self.forward(u, theta)

    def round_trip_error(self, u, theta) -> float:
        u = self._vector(u, "u")
        back = self.inverse(self.forward(u, theta), theta)
        return float(np.max(np.abs(back - u) / np.maximum(1.0, np.abs(u))))


def _interior_point(lower: float, upper: float) -> float:
    if math.isfinite(lower) and math.isfinite(upper):
        return 0.5 * (lower + upper)
    if math.isfinite(lower):
        return lower + 1.0
    if math.isfinite(upper):
        return upper - 1.0
    return 0.0


def _bracket(fun, lower: float, upper: float) -> tuple[float, float]:
    """Find a sign-changing bracket, expanding toward infinite support ends."""
    a = lower + _EDGE * max(1.0, abs(lower)) if math.isfinite(lower) else -1.0
    b = upper - _EDGE * max(1.0, abs(upper)) if math.isfinite(upper) else 1.0
    if math.isfinite(lower) and not math.isfinite(upper):
        b = max(b, a + 1.0)
    if math.isfinite(upper) and not math.isfinite(lower):
        a = min(a, b - 1.0)
    with np.errstate(all="ignore"):
        fa, fb = fun(a), fun(b)
        for _ in range(_MAX_EXPANSIONS):
            if np.isfinite(fa) and np.isfinite(fb) and fa * fb <= 0:
                return a, b
            if not math.isfinite(upper):
                b = 2.0 * b if b > 0 else 1.0
                fb = fun(b)
            if not math.isfinite(lower):
                a = 2.0 * a if a < 0 else -1.0
                fa = fun(a)
            if math.isfinite(lower) and math.isfinite(upper):
                break
    msg = f"No sign change of the coordinate residual on ({lower}, {upper})"
    raise InversionException(msg)
