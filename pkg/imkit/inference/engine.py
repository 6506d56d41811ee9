"""Focal sets, belief and plausibility, curves, regions and validity diagnostics."""

import itertools
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..const import DEFAULT_GRID_POINTS, MIN_DRAWS
from .association import Association, AuxiliaryDistribution, ParameterSpace
from .base_report import BaseReport
from .exceptions.association_exception import InversionException
from .exceptions.engine_exception import EmptyFocalSetException, SamplerException
from .exceptions.im_exception import ConfigurationException, DomainException
from .parallel import run_chunked, spawn_generators
from .random_sets import (
    PredictiveRandomSet,
    SetRealization,
    ValidityReport,
    build_validity_report,
    density_prs,
    symmetric_prs,
)
from .serialization import write_csv

_LOGGER = logging.getLogger(__name__)

SINGLETON = "singleton"
BOX = "box"
PREDICATE = "predicate"
WHOLE = "whole"
EMPTY = "empty"


@dataclass(frozen=True)
class Assertion:
    """A hypothesis A about theta: singleton, box, predicate, whole space or empty set."""

    kind: str
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    predicate: Callable[[np.ndarray], bool] | None = None
    negated: bool = False

    @classmethod
    def singleton(cls, theta) -> "Assertion":
        point = tuple(float(v) for v in np.atleast_1d(theta))
        return cls(SINGLETON, point, point)

    @classmethod
    def box(cls, lower, upper) -> "Assertion":
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        if len(lower) != len(upper) or any(lo > hi for lo, hi in zip(lower, upper, strict=True)):
            msg = f"Box assertion needs lower <= upper coordinate-wise: {lower} / {upper}"
            raise ConfigurationException(msg)
        return cls(BOX, lower, upper)

    @classmethod
    def from_predicate(cls, predicate: Callable[[np.ndarray], bool]) -> "Assertion":
        return cls(PREDICATE, predicate=predicate)

    @classmethod
    def whole(cls) -> "Assertion":
        return cls(WHOLE)

    @classmethod
    def empty(cls) -> "Assertion":
        return cls(EMPTY)

    def complement(self) -> "Assertion":
        if self.kind == WHOLE:
            return Assertion.empty()
        if self.kind == EMPTY:
            return Assertion.whole()
        return Assertion(self.kind, self.lower, self.upper, self.predicate, not self.negated)

    @property
    def is_singleton(self) -> bool:
        return self.kind == SINGLETON and not self.negated

    def contains(self, points) -> np.ndarray:
        """Vectorized membership for an (m, p) array of parameter points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == WHOLE:
            inside = np.ones(len(points), dtype=bool)
        elif self.kind == EMPTY:
            inside = np.zeros(len(points), dtype=bool)
        elif self.kind == SINGLETON:
            inside = np.all(points == np.asarray(self.lower), axis=1)
        elif self.kind == BOX:
            inside = np.all(
                (points >= np.asarray(self.lower)) & (points <= np.asarray(self.upper)), axis=1
            )
        else:
            inside = np.array([bool(self.predicate(point)) for point in points], dtype=bool)
        return ~inside if self.negated else inside

    def validate(self, params: ParameterSpace) -> None:
        """Singleton and box coordinates must lie in the closure of the parameter space."""
        if self.kind == SINGLETON:
            params.check(self.lower)
            return
        if self.kind != BOX:
            return
        if len(self.lower) != params.dim:
            msg = f"Box assertion has dimension {len(self.lower)}, expected {params.dim}"
            raise DomainException(msg)
        for k in range(params.dim):
            if self.lower[k] < params.lower[k] or self.upper[k] > params.upper[k]:
                msg = (
                    f"Box side for {params.names[k]} [{self.lower[k]}, {self.upper[k]}] "
                    f"leaves ({params.lower[k]}, {params.upper[k]})"
                )
                raise DomainException(msg)


@dataclass(frozen=True)
class BeliefPlausibility(BaseReport):
    bel: float
    pl: float
    mc_se_bel: float = 0.0
    mc_se_pl: float = 0.0
    n_draws: int = 0
    seed: int | None = None


@dataclass(frozen=True)
class PlausibilityCurve(BaseReport):
    """Plausibility of singletons over a product grid; pl has one axis per grid."""

    grid: tuple[np.ndarray, ...]
    pl: np.ndarray
    assoc_id: str
    prs_id: str

    @property
    def dim(self) -> int:
        return len(self.grid)

    def rows(self) -> list[list[float]]:
        points = itertools.product(*(axis.tolist() for axis in self.grid))
        return [[*point, float(value)] for point, value in zip(points, self.pl.ravel(), strict=True)]

    def to_csv(self, path):
        header = [f"theta_{k + 1}" for k in range(self.dim)] + ["pl"]
        return write_csv(path, header, self.rows())

    def argmax(self) -> tuple[float, ...]:
        index = np.unravel_index(int(np.argmax(self.pl)), self.pl.shape)
        return tuple(float(axis[i]) for axis, i in zip(self.grid, index, strict=True))


@dataclass(frozen=True)
class ConditionalAssociation:
    """
    Reduced association T(x) = b(V, theta) with V drawn from its conditional law.

    conditional_sampler draws V given the observed conditioning values. A
    marginal CDF of the conditional law enables the closed-form symmetric
    PRS; otherwise highest-density sets are evaluated by Monte Carlo.
    """

    name: str
    params: ParameterSpace
    n_data: int
    q: int
    statistic: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    b_inverse: Callable[[np.ndarray, np.ndarray], np.ndarray]
    conditioning_values: tuple[float, ...]
    conditional_sampler: Callable[[np.random.Generator, int], np.ndarray]
    conditional_log_density: Callable[[np.ndarray], np.ndarray] | None = None
    marginal_cdf: Callable[[np.ndarray], np.ndarray] | None = None
    center: tuple[float, ...] | None = None
    anchor: tuple[float, ...] | str = "global"
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not 1 <= self.q < self.n_data:
            msg = f"Conditional association {self.name!r} needs 1 <= q < n, got q={self.q}, n={self.n_data}"
            raise ConfigurationException(msg)

    def reduced_statistic(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.statistic(np.asarray(x, dtype=float)), dtype=float))

    def solve(self, x, theta) -> np.ndarray:
        """v with T(x) = b(v, theta)."""
        theta = self.params.check(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.atleast_1d(np.asarray(self.b_inverse(self.reduced_statistic(x), theta), dtype=float))
        if not np.all(np.isfinite(v)):
            msg = f"Reduced statistic of {self.name} not attainable at theta={theta.tolist()}"
            raise InversionException(msg)
        return v

    def round_trip_error(self, v, theta) -> float:
        theta = self.params.check(theta)
        v = np.atleast_1d(np.asarray(v, dtype=float))
        t = np.atleast_1d(np.asarray(self.b(v, theta), dtype=float))
        back = np.atleast_1d(np.asarray(self.b_inverse(t, theta), dtype=float))
        return float(np.max(np.abs(back - v) / np.maximum(1.0, np.abs(v))))

    def sample(self, rng, size: int) -> np.ndarray:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        try:
            draws = np.asarray(self.conditional_sampler(rng, size), dtype=float)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as ex:
            msg = f"Conditional sampler of {self.name} failed: {ex}"
            raise SamplerException(msg) from ex
        draws = draws.reshape(size, self.q)
        if not np.all(np.isfinite(draws)):
            msg = f"Conditional sampler of {self.name} produced non-finite draws"
            raise SamplerException(msg)
        return draws

    def default_prs(self) -> PredictiveRandomSet:
        """Symmetric PRS when the conditional law has a CDF, highest-density sets otherwise."""
        if self.marginal_cdf is not None:
            aux = AuxiliaryDistribution(
                dim=self.q,
                sampler=self.sample,
                log_density=self.conditional_log_density or (lambda v: np.zeros(np.shape(v)[:-1])),
                marginal_cdf=self.marginal_cdf,
                name=f"{self.name} conditional",
            )
            center = self.center if self.center is not None else np.zeros(self.q)
            return symmetric_prs(aux, center)
        if self.conditional_log_density is None:
            msg = f"{self.name} needs a conditional CDF or log density to build a PRS"
            raise ConfigurationException(msg)
        return density_prs(self.conditional_log_density, self.sample, self.q, name=f"hdr({self.name})")


def focal_set_contains(
    assoc: Association, realization: SetRealization, x, theta
) -> bool:
    """theta is in the focal set iff u(x, theta) lies in the realized set."""
    return realization.membership(assoc.inverse(x, theta))


def plausibility_singleton(assoc: Association, prs: PredictiveRandomSet, x, theta0) -> float:
    """pl of {theta0} = gamma(u(x, theta0)), exact."""
    return float(prs.containment_prob(assoc.inverse(x, theta0)))


def _axis_range(params: ParameterSpace, k: int, theta_ranges) -> tuple[float, float]:
    if theta_ranges is not None:
        lo, hi = (float(v) for v in theta_ranges[k])
        if not (params.lower[k] < lo < hi < params.upper[k]):
            msg = (
                f"Grid range for {params.names[k]} [{lo}, {hi}] must be increasing and inside "
                f"({params.lower[k]}, {params.upper[k]})"
            )
            raise DomainException(msg)
        return lo, hi
    lo, hi = params.lower[k], params.upper[k]
    if not (math.isfinite(lo) and math.isfinite(hi)):
        msg = f"{params.names[k]} has unbounded support; pass theta_ranges for the grid"
        raise ConfigurationException(msg)
    pad = 1e-9 * (hi - lo)
    return lo + pad, hi - pad


def _assertion_axis(assertion: Assertion, k: int, lo: float, hi: float) -> list[float]:
    """Exact assertion edges on axis k, with complement-side neighbours."""
    if assertion.kind not in (SINGLETON, BOX):
        return []
    extra = []
    for edge in {assertion.lower[k], assertion.upper[k]}:
        if not math.isfinite(edge):
            continue
        offset = 1e-9 * max(1.0, abs(edge))
        extra.extend(v for v in (edge - offset, edge, edge + offset) if lo <= v <= hi)
    return extra


def theta_grid(
    params: ParameterSpace,
    assertion: Assertion,
    theta_ranges=None,
    points_per_axis: int = DEFAULT_GRID_POINTS,
) -> np.ndarray:
    """Deterministic product grid refined at the assertion's edges, as an (m, p) array."""
    axes = []
    for k in range(params.dim):
        lo, hi = _axis_range(params, k, theta_ranges)
        axis = np.linspace(lo, hi, points_per_axis)
        axis = np.union1d(axis, _assertion_axis(assertion, k, lo, hi))
        axes.append(axis)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _statistic_on_points(assoc, prs, x, points) -> np.ndarray:
    values = np.full(len(points), np.inf)
    for j, theta in enumerate(points):
        if not assoc.params.contains(theta):
            continue
        try:
            values[j] = float(prs.statistic(assoc.inverse(x, theta)))
        except InversionException:
            continue
    return values


def _refine_minimum(assoc, prs, x, points, values) -> tuple[np.ndarray, float] | None:
    """Polish the smallest grid statistic with a local minimizer."""
    start = points[int(np.argmin(values))]
    lower, upper = points.min(axis=0), points.max(axis=0)

    def objective(theta):
        theta = np.clip(np.atleast_1d(theta), lower, upper)
        if not assoc.params.contains(theta):
            return np.inf
        try:
            return float(prs.statistic(assoc.inverse(x, theta)))
        except InversionException:
            return np.inf

    if len(start) == 1:
        result = optimize.minimize_scalar(
            lambda t: objective([t]), bounds=(lower[0], upper[0]), method="bounded",
            options={"xatol": 1e-12},
        )
        best = np.array([result.x])
    else:
        result = optimize.minimize(objective, start, method="Nelder-Mead",
                                   options={"xatol": 1e-12, "fatol": 1e-15})
        best = np.clip(result.x, lower, upper)
    value = objective(best)
    if not np.isfinite(value):
        return None
    return best, value


def _draw_radii(prs: PredictiveRandomSet, n_draws: int, seed, threads) -> np.ndarray:
    return np.concatenate(run_chunked(prs.draw_radii, n_draws, seed, threads))


def belief_plausibility_mc(
    assoc: Association,
    prs: PredictiveRandomSet,
    x,
    assertion: Assertion,
    n_draws: int,
    seed,
    threads=None,
    theta_ranges=None,
    points_per_axis: int = DEFAULT_GRID_POINTS,
) -> BeliefPlausibility:
    """
    Monte Carlo belief and plausibility of an assertion.

    With s(theta) the PRS statistic of u(x, theta), a realization with radius
    R has focal set {s <= R}. It hits A iff R >= min_A s and lies inside A
    iff R < min over the complement of s; both minima come from a
    deterministic grid plus a polished global minimizer. Every assertion
    evaluated with the same seed shares the same radius draws.
    """
    if n_draws < MIN_DRAWS:
        msg = f"n_draws must be at least {MIN_DRAWS}, got {n_draws}"
        raise ConfigurationException(msg)
    assertion.validate(assoc.params)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    points = theta_grid(assoc.params, assertion, theta_ranges, points_per_axis)
    if assertion.kind == SINGLETON:
        points = np.vstack([points, np.asarray(assertion.lower)])
    values = _statistic_on_points(assoc, prs, x, points)
    if not np.any(np.isfinite(values)):
        msg = "assume the focal set is nonempty: no grid parameter is compatible with the data"
        raise EmptyFocalSetException(msg)
    polished = _refine_minimum(assoc, prs, x, points, values)
    if polished is not None and polished[1] < np.min(values):
        points = np.vstack([points, polished[0]])
        values = np.append(values, polished[1])

    inside = assertion.contains(points)
    floor = float(np.min(values))
    min_inside = float(np.min(values[inside])) if np.any(inside) else np.inf
    min_outside = float(np.min(values[~inside])) if np.any(~inside) else np.inf
    _LOGGER.debug(
        "Grid of %d points: min s=%.6g, inside=%.6g, outside=%.6g",
        len(points), floor, min_inside, min_outside,
    )

    radii = _draw_radii(prs, n_draws, seed, threads)
    empty = int(np.count_nonzero(radii < floor))
    if empty:
        msg = (
            f"{empty} of {n_draws} focal sets are empty; the construction must "
            "assume the focal set is nonempty"
        )
        raise EmptyFocalSetException(msg)

    pl = float(np.count_nonzero(radii >= min_inside)) / n_draws
    if assertion.is_singleton:
        bel = 0.0
    else:
        bel = float(np.count_nonzero(radii < min_outside)) / n_draws
    return BeliefPlausibility(
        bel=bel,
        pl=pl,
        mc_se_bel=_binomial_se(bel, n_draws),
        mc_se_pl=_binomial_se(pl, n_draws),
        n_draws=n_draws,
        seed=seed if isinstance(seed, int) else None,
    )


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


def plausibility_curve(
    assoc: Association,
    prs: PredictiveRandomSet,
    x,
    axis_grids,
    n_draws: int | None = None,
    seed=None,
    threads=None,
) -> PlausibilityCurve:
    """
    Singleton plausibility over a product grid.

    With n_draws the containment probability is the Monte Carlo frequency
    over one shared set of radius draws instead of the closed form.
    """
    if isinstance(axis_grids, np.ndarray) and axis_grids.ndim == 1:
        axis_grids = [axis_grids]
    axes = tuple(np.asarray(axis, dtype=float) for axis in axis_grids)
    if len(axes) != assoc.params.dim:
        msg = f"Expected {assoc.params.dim} grid axes, got {len(axes)}"
        raise ConfigurationException(msg)
    for k, axis in enumerate(axes):
        if axis.ndim != 1 or axis.size < 2 or np.any(np.diff(axis) <= 0):
            msg = f"Grid axis {k + 1} must be strictly increasing with at least 2 points"
            raise ConfigurationException(msg)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    radii = None
    if n_draws is not None:
        if n_draws < MIN_DRAWS:
            msg = f"n_draws must be at least {MIN_DRAWS}, got {n_draws}"
            raise ConfigurationException(msg)
        radii = np.sort(_draw_radii(prs, n_draws, seed, threads))
    values = np.empty(tuple(axis.size for axis in axes))
    for index in np.ndindex(values.shape):
        theta = [axis[i] for axis, i in zip(axes, index, strict=True)]
        if radii is None:
            values[index] = plausibility_singleton(assoc, prs, x, theta)
        else:
            level = float(prs.statistic(assoc.inverse(x, theta)))
            values[index] = (radii.size - np.searchsorted(radii, level, side="left")) / radii.size
    return PlausibilityCurve(grid=axes, pl=values, assoc_id=assoc.name, prs_id=prs.name)


def plausibility_region(curve: PlausibilityCurve, alpha: float) -> list[tuple[float, float]]:
    """
    Maximal intervals of {theta : pl >= alpha} on a one-axis curve.

    Endpoints are interpolated linearly between the grid points that bracket
    the crossing. Under the symmetric PRS alpha = 0.05 gives the 95% interval.
    """
    if not 0.0 < alpha < 1.0:
        msg = f"alpha must be in (0, 1), got {alpha}"
        raise ConfigurationException(msg)
    if curve.dim != 1:
        msg = "Plausibility regions are computed for one-axis curves only"
        raise ConfigurationException(msg)
    grid, pl = curve.grid[0], curve.pl.ravel()
    above = pl >= alpha
    if not np.any(above):
        _LOGGER.warning("Plausibility never reaches %s on the grid; region is empty", alpha)
        return []

    def crossing(i: int, j: int) -> float:
        # i below alpha, j above
        return float(grid[i] + (alpha - pl[i]) * (grid[j] - grid[i]) / (pl[j] - pl[i]))

    intervals = []
    edges = np.flatnonzero(np.diff(np.concatenate([[0], above.astype(int), [0]])))
    for start, stop in zip(edges[::2], edges[1::2] - 1, strict=True):
        left = float(grid[0]) if start == 0 else crossing(start - 1, start)
        right = float(grid[-1]) if stop == grid.size - 1 else crossing(stop + 1, stop)
        intervals.append((left, right))
    return intervals


def validity_diagnostic(
    assoc: Association,
    prs: PredictiveRandomSet,
    theta_true,
    n_sim: int,
    seed,
    threads=None,
) -> ValidityReport:
    """Plausibility at the truth over datasets simulated at theta_true, checked for uniform dominance."""
    if n_sim < 1:
        msg = f"n_sim must be positive, got {n_sim}"
        raise ConfigurationException(msg)
    theta_true = assoc.params.check(theta_true)

    def simulate(rng, size):
        values = np.empty(size)
        for j, u in enumerate(assoc.aux.sample(rng, size)):
            x = assoc.forward(u, theta_true)
            values[j] = plausibility_singleton(assoc, prs, x, theta_true)
        return values

    values = np.concatenate(run_chunked(simulate, n_sim, seed, threads))
    report = build_validity_report(values, seed=seed if isinstance(seed, int) else None)
    _LOGGER.info(
        "Validity of %s with %s: KS=%.5f (critical %.5f) over %d simulations",
        assoc.name, prs.name, report.ks_one_sided, report.critical_value, n_sim,
    )
    return report


def conditional_plausibility(
    cond: ConditionalAssociation,
    prs_on_v: PredictiveRandomSet | None,
    x,
    theta0,
    n_draws: int,
    seed,
    threads=None,
) -> float:
    """
    Plausibility of {theta0} on the reduced association.

    Uses the closed-form containment probability when the PRS has one and a
    Monte Carlo containment frequency over the conditional law otherwise.
    """
    prs = prs_on_v if prs_on_v is not None else cond.default_prs()
    v = cond.solve(x, theta0)
    if prs.has_closed_form:
        return float(prs.containment_prob(v))
    if n_draws < MIN_DRAWS:
        msg = f"n_draws must be at least {MIN_DRAWS}, got {n_draws}"
        raise ConfigurationException(msg)
    estimate, se = prs.mc_containment_prob(v, n_draws, seed, threads)
    _LOGGER.debug("Conditional pl of %s at %s: %.5f (se %.5f)", cond.name, theta0, estimate, se)
    return estimate


def conditional_validity_diagnostic(
    build_conditional: Callable[[np.ndarray], ConditionalAssociation],
    sample_data: Callable[[np.random.Generator], np.ndarray],
    theta_true,
    n_sim: int,
    n_draws: int,
    seed,
) -> ValidityReport:
    """Conditional plausibility at the truth over repeated simulated datasets."""
    if n_sim < 1:
        msg = f"n_sim must be positive, got {n_sim}"
        raise ConfigurationException(msg)
    generators = spawn_generators(seed, n_sim)
    values = np.empty(n_sim)
    for j, rng in enumerate(generators):
        x = sample_data(rng)
        cond = build_conditional(x)
        values[j] = conditional_plausibility(
            cond, None, x, theta_true, n_draws, int(rng.integers(2**32))
        )
    report = build_validity_report(values, seed=seed if isinstance(seed, int) else None)
    _LOGGER.info(
        "Conditional validity: KS=%.5f (critical %.5f) over %d simulations",
        report.ks_one_sided, report.critical_value, n_sim,
    )
    return report
