"""Nested predictive random sets for auxiliary variables."""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..const import KS_LEVEL, MIN_VALIDITY_SIMS
from .association import AuxiliaryDistribution
from .base_report import BaseReport
from .exceptions.im_exception import ConfigurationException
from .parallel import run_chunked

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class SetRealization:
    """One realized set S = {u : statistic(u) <= radius_index}, held intensionally."""

    radius_index: float
    statistic: Callable[[np.ndarray], np.ndarray]

    def membership(self, u) -> bool:
        return bool(np.all(self.statistic(np.asarray(u, dtype=float)) <= self.radius_index))

    def __contains__(self, u) -> bool:
        return self.membership(u)


@dataclass(frozen=True)
class PredictiveRandomSet:
    """
    Nested random set driven by one scalar draw.

    Realizations are {u : statistic(u) <= R} with R = statistic(U*) for a
    fresh auxiliary draw, so they are totally ordered by R. statistic_sf is
    the survival function P(R >= s); when it is None the containment
    probability is only available by Monte Carlo.
    """

    aux_dim: int
    statistic: Callable[[np.ndarray], np.ndarray]
    radius_sampler: Callable[[np.random.Generator, int], np.ndarray]
    statistic_sf: Callable[[np.ndarray], np.ndarray] | None = None
    center: tuple[float, ...] | None = None
    name: str = "custom"

    @property
    def has_closed_form(self) -> bool:
        return self.statistic_sf is not None

    def draw(self, seed) -> SetRealization:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return SetRealization(float(self.draw_radii(rng, 1)[0]), self.statistic)

    def draw_radii(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.asarray(self.radius_sampler(rng, size), dtype=float).reshape(size)

    def containment_prob(self, u):
        """gamma(u) = P(S contains u); scalar for one point, array for a stack of points."""
        if self.statistic_sf is None:
            msg = f"PRS {self.name!r} has no closed-form containment probability"
            raise ConfigurationException(msg)
        value = np.clip(self.statistic_sf(self.statistic(np.asarray(u, dtype=float))), 0.0, 1.0)
        return float(value) if np.ndim(value) == 0 else value

    def mc_containment_prob(self, u, n_draws: int, seed, threads=None) -> tuple[float, float]:
        """Monte Carlo frequency of S containing u, with its binomial standard error."""
        level = float(self.statistic(np.asarray(u, dtype=float)))

        def count(rng, size):
            return int(np.count_nonzero(self.draw_radii(rng, size) >= level))

        hits = sum(run_chunked(count, n_draws, seed, threads))
        estimate = hits / n_draws
        return estimate, float(np.sqrt(estimate * (1.0 - estimate) / n_draws))


@dataclass(frozen=True)
class ValidityReport(BaseReport):
    n_sim: int
    ks_one_sided: float
    critical_value: float
    passed: bool
    seed: int | None = None

    def to_dict(self) -> dict:
        data = {
            "n_sim": int(self.n_sim),
            "ks_one_sided": float(self.ks_one_sided),
            "critical_value": float(self.critical_value),
            "pass": bool(self.passed),
        }
        if self.seed is not None:
            data["seed"] = int(self.seed)
        return data


def symmetric_prs(
    aux: AuxiliaryDistribution, center, radius_scale: float = 1.0
) -> PredictiveRandomSet:
    """
    Symmetric nested set around center, S = {u : |u - c| <= |U - c|} in one dimension.

    Each coordinate distance is mapped to probability depth
    G_i(d) = F_i(c_i + d) - F_i(c_i - d); the driving statistic is the
    largest depth, so for independent coordinates P(R >= s) = 1 - s**n.
    radius_scale < 1 shrinks every realization (S = {|u - c| <= scale |U - c|}).
    """
    if aux.marginal_cdf is None:
        msg = f"Symmetric PRS needs marginal CDFs; {aux.name} provides none"
        raise ConfigurationException(msg)
    if radius_scale <= 0:
        msg = f"radius_scale must be positive, got {radius_scale}"
        raise ConfigurationException(msg)
    center = np.broadcast_to(np.asarray(center, dtype=float), (aux.dim,)).copy()
    cdf = aux.marginal_cdf
    dim = aux.dim

    def depth(distance):
        return np.clip(cdf(center + distance) - cdf(center - distance), 0.0, 1.0)

    def statistic(u):
        u = np.asarray(u, dtype=float)
        return np.max(depth(np.abs(u - center) / radius_scale), axis=-1)

    def radius_sampler(rng, size):
        draws = aux.sample(rng, size)
        return np.max(depth(np.abs(draws - center)), axis=-1)

    def statistic_sf(s):
        s = np.asarray(s, dtype=float)
        if dim == 1:
            return 1.0 - s
        return 1.0 - s**dim

    name = f"symmetric({aux.name})" if radius_scale == 1.0 else (
        f"symmetric({aux.name}, scale={radius_scale:g})"
    )
    return PredictiveRandomSet(
        aux_dim=dim,
        statistic=statistic,
        radius_sampler=radius_sampler,
        statistic_sf=statistic_sf,
        center=tuple(center.tolist()),
        name=name,
    )


def one_sided_prs(aux: AuxiliaryDistribution, direction: str = "upper") -> PredictiveRandomSet:
    """
    One-sided nested sets, S = {u : u >= U*} ("upper") or {u : u <= U*} ("lower").

    The driving statistic is the largest per-coordinate tail mass beyond u.
    """
    if aux.marginal_cdf is None:
        msg = f"One-sided PRS needs marginal CDFs; {aux.name} provides none"
        raise ConfigurationException(msg)
    if direction not in ("upper", "lower"):
        msg = f"direction must be 'upper' or 'lower', got {direction!r}"
        raise ConfigurationException(msg)
    cdf = aux.marginal_cdf
    dim = aux.dim

    def tail(u):
        mass = cdf(np.asarray(u, dtype=float))
        return np.clip(1.0 - mass if direction == "upper" else mass, 0.0, 1.0)

    def statistic(u):
        return np.max(tail(u), axis=-1)

    def radius_sampler(rng, size):
        return statistic(aux.sample(rng, size))

    return PredictiveRandomSet(
        aux_dim=dim,
        statistic=statistic,
        radius_sampler=radius_sampler,
        statistic_sf=lambda s: 1.0 - np.asarray(s, dtype=float) ** dim,
        name=f"one-sided-{direction}({aux.name})",
    )


def full_space_prs(aux_dim: int) -> PredictiveRandomSet:
    """Degenerate PRS that always covers the whole auxiliary space."""

    def statistic(u):
        return np.zeros(np.shape(u)[:-1]) if np.ndim(u) > 1 else np.float64(0.0)

    return PredictiveRandomSet(
        aux_dim=aux_dim,
        statistic=statistic,
        radius_sampler=lambda rng, size: np.ones(size),
        statistic_sf=lambda s: np.ones_like(np.asarray(s, dtype=float)),
        name="full-space",
    )


def density_prs(
    log_density: Callable[[np.ndarray], np.ndarray],
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    aux_dim: int,
    name: str = "highest-density",
) -> PredictiveRandomSet:
    """Highest-density nested sets {v : f(v) >= f(V*)}; containment by Monte Carlo only."""

    def statistic(v):
        return -np.asarray(log_density(np.asarray(v, dtype=float)), dtype=float)

    def radius_sampler(rng, size):
        return statistic(np.asarray(sampler(rng, size), dtype=float).reshape(size, aux_dim))

    return PredictiveRandomSet(
        aux_dim=aux_dim,
        statistic=statistic,
        radius_sampler=radius_sampler,
        name=name,
    )


def one_sided_ks(plausibilities) -> float:
    """
    Largest excess of the empirical CDF of plausibility values over the diagonal.

    A valid procedure has P(pl <= a) <= a for every a, so only excess counts.
    """
    values = np.sort(np.asarray(plausibilities, dtype=float).ravel())
    n = values.size
    if n == 0:
        msg = "Cannot compute a KS statistic from no values"
        raise ConfigurationException(msg)
    excess = np.arange(1, n + 1) / n - values
    return float(max(0.0, np.max(excess)))


def ks_critical_value(n: int, level: float = KS_LEVEL) -> float:
    return float(stats.ksone.isf(1.0 - level, n))


def build_validity_report(plausibilities, seed=None) -> ValidityReport:
    values = np.asarray(plausibilities, dtype=float).ravel()
    ks = one_sided_ks(values)
    critical = ks_critical_value(values.size)
    return ValidityReport(
        n_sim=int(values.size),
        ks_one_sided=ks,
        critical_value=critical,
        passed=ks <= critical,
        seed=seed,
    )


def check_validity(
    prs: PredictiveRandomSet,
    aux: AuxiliaryDistribution,
    n_sim: int,
    seed,
    threads=None,
) -> ValidityReport:
    """Certify P(gamma(U*) <= a) <= a by simulation against the one-sided KS bound."""
    if n_sim < MIN_VALIDITY_SIMS:
        msg = f"check_validity needs n_sim >= {MIN_VALIDITY_SIMS}, got {n_sim}"
        raise ConfigurationException(msg)
    if prs.aux_dim != aux.dim:
        msg = f"PRS dimension {prs.aux_dim} does not match auxiliary dimension {aux.dim}"
        raise ConfigurationException(msg)

    def containment(rng, size):
        return np.atleast_1d(prs.containment_prob(aux.sample(rng, size)))

    gammas = np.concatenate(run_chunked(containment, n_sim, seed, threads))
    report = build_validity_report(gammas, seed=seed if isinstance(seed, int) else None)
    _LOGGER.debug(
        "Validity of %s: KS=%.5f critical=%.5f", prs.name, report.ks_one_sided,
        report.critical_value,
    )
    return report
