"""Regularity classification: generalized location, location-scale and degenerate models."""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, optimize

from ..const import (
    MAX_EXCLUDED_FRACTION,
    RANK_RTOL,
    REGULARITY_GRID_POINTS,
    REGULARITY_TOL,
    TABULATION_POINTS,
)
from .base_report import BaseReport
from .exceptions.im_exception import ConfigurationException
from .exceptions.regularity_exception import InconclusiveException, SingularModelException

_LOGGER = logging.getLogger(__name__)

# stencil steps, relative to max(1, |value|)
_PARTIAL_STEP = 6e-6
_LOG_RATIO_STEP = 1e-3
_MIXED_STEP = 1e-2
_FORM_RTOL = 1e-6


@dataclass(frozen=True)
class CoordinateModel:
    """
    Coordinate-wise model x_i = g(i, theta, u_i).

    theta is passed as a sequence of p arrays and u as an array, all
    broadcastable, so grids evaluate in one call. Missing partials fall back
    to central differences.
    """

    n: int
    p: int
    g: Callable[[int, Sequence[np.ndarray], np.ndarray], np.ndarray]
    g_theta: Callable[[int, Sequence[np.ndarray], np.ndarray], list[np.ndarray]] | None = None
    g_u: Callable[[int, Sequence[np.ndarray], np.ndarray], np.ndarray] | None = None
    common_form: bool = False
    name: str = "model"

    @classmethod
    def common(cls, g, n: int, p: int, g_theta=None, g_u=None, name: str = "model"):
        """All coordinates share one map a(theta, u)."""
        return cls(
            n=n,
            p=p,
            g=lambda i, theta, u: g(theta, u),
            g_theta=None if g_theta is None else (lambda i, theta, u: g_theta(theta, u)),
            g_u=None if g_u is None else (lambda i, theta, u: g_u(theta, u)),
            common_form=True,
            name=name,
        )

    def value(self, i: int, theta, u) -> np.ndarray:
        with np.errstate(all="ignore"):
            theta = [np.asarray(t, dtype=float) for t in theta]
            return np.asarray(self.g(i, theta, np.asarray(u, dtype=float)), dtype=float)

    def d_theta(self, i: int, theta, u) -> list[np.ndarray]:
        theta = [np.asarray(t, dtype=float) for t in theta]
        u = np.asarray(u, dtype=float)
        if self.g_theta is not None:
            with np.errstate(all="ignore"):
                shape = np.broadcast_shapes(u.shape, *(t.shape for t in theta))
                return [np.broadcast_to(np.asarray(d, dtype=float), shape) for d in self.g_theta(i, theta, u)]
        partials = []
        for k in range(self.p):
            h = _PARTIAL_STEP * np.maximum(1.0, np.abs(theta[k]))
            plus = [t + h if j == k else t for j, t in enumerate(theta)]
            minus = [t - h if j == k else t for j, t in enumerate(theta)]
            partials.append((self.value(i, plus, u) - self.value(i, minus, u)) / (2.0 * h))
        return partials

    def d_u(self, i: int, theta, u) -> np.ndarray:
        theta = [np.asarray(t, dtype=float) for t in theta]
        u = np.asarray(u, dtype=float)
        if self.g_u is not None:
            with np.errstate(all="ignore"):
                shape = np.broadcast_shapes(u.shape, *(t.shape for t in theta))
                return np.broadcast_to(np.asarray(self.g_u(i, theta, u), dtype=float), shape)
        h = _PARTIAL_STEP * np.maximum(1.0, np.abs(u))
        return (self.value(i, theta, u + h) - self.value(i, theta, u - h)) / (2.0 * h)

    def ratio(self, i: int, theta, u) -> np.ndarray:
        """r_i = (dg_i/dtheta) / (dg_i/du_i) for a scalar parameter."""
        numerator = self.d_theta(i, theta, u)[0]
        denominator = self.d_u(i, theta, u)
        if np.any(denominator == 0) or np.any(numerator == 0):
            msg = f"Vanishing partial derivative of coordinate {i + 1} of {self.name} on the grid"
            raise SingularModelException(msg)
        value = numerator / denominator
        if not np.all(np.isfinite(value)):
            msg = f"Partial derivative ratio of coordinate {i + 1} of {self.name} is not finite on the grid"
            raise SingularModelException(msg)
        return value


@dataclass(frozen=True)
class SeparabilityReport(BaseReport):
    h_theta_dependence: float
    mixed_log_partial: float
    separable: bool
    regular: bool
    tolerance: float = REGULARITY_TOL
    ranges: dict = field(default_factory=dict)
    offending_index: int | None = None
    excluded_fraction: float = 0.0
    theta_anchor: tuple[float, ...] = ()


@dataclass(frozen=True)
class LocationScaleTransform(BaseReport):
    """Tabulated V_i(u) = int du / C_i(u) and delta(theta) = int dtheta / C(theta)."""

    v_maps: tuple = field(repr=False)
    delta_map: object = field(repr=False)
    residual: float
    u_grid: np.ndarray = field(repr=False)
    theta_grid: np.ndarray = field(repr=False)
    c_u: np.ndarray = field(repr=False)
    c_theta: np.ndarray = field(repr=False)
    u_anchor: float = 0.0
    theta_anchor: float = 0.0

    def v(self, i: int, u) -> np.ndarray:
        return self.v_maps[i](u)

    def delta(self, theta) -> np.ndarray:
        return self.delta_map(theta)

    def to_dict(self) -> dict:
        return {
            "residual": float(self.residual),
            "u_anchor": float(self.u_anchor),
            "theta_anchor": float(self.theta_anchor),
            "u_range": [float(self.u_grid[0]), float(self.u_grid[-1])],
            "theta_range": [float(self.theta_grid[0]), float(self.theta_grid[-1])],
            "form": describe_form(self),
        }


@dataclass(frozen=True)
class DegeneracyReport(BaseReport):
    numerical_rank: int
    singular_values: list[float]
    degenerate: bool
    theta_directions: list[list[float]] = field(default_factory=list)
    null_directions: list[list[float]] = field(default_factory=list)
    excluded_points: int = 0


def _axis(bounds, points: int) -> np.ndarray:
    lo, hi = (float(v) for v in bounds)
    if not lo < hi:
        msg = f"Grid range must be increasing, got [{lo}, {hi}]"
        raise ConfigurationException(msg)
    return np.linspace(lo, hi, points)


def _log_ratio_derivative(model: CoordinateModel, i: int, theta: np.ndarray, u: np.ndarray) -> np.ndarray:
    """d/dtheta log |r_i(theta, u)| by central differences."""
    h = _LOG_RATIO_STEP * np.maximum(1.0, np.abs(theta))
    plus = np.log(np.abs(model.ratio(i, [theta + h], u)))
    minus = np.log(np.abs(model.ratio(i, [theta - h], u)))
    return (plus - minus) / (2.0 * h)


def separability_test(
    model: CoordinateModel,
    u_ranges,
    theta_range,
    points: int = REGULARITY_GRID_POINTS,
    tol: float = REGULARITY_TOL,
    pair: tuple[int, int] = (0, 1),
) -> SeparabilityReport:
    """
    Two-coordinate test for a generalized location parameter.

    h = r_i / r_j with r = (dg/dtheta) / (dg/du); the model is regular when
    log |h| is theta-free and has no mixed (u_i, u_j) partial.
    """
    if model.p != 1:
        msg = f"separability_test needs one parameter, {model.name} has {model.p}"
        raise ConfigurationException(msg)
    i, j = pair
    u_ranges = _per_coordinate(u_ranges, model.n)
    u_i, u_j, theta = np.meshgrid(
        _axis(u_ranges[i], points), _axis(u_ranges[j], points), _axis(theta_range, points), indexing="ij"
    )

    def log_h(t, a, b):
        return np.log(np.abs(model.ratio(i, [t], a))) - np.log(np.abs(model.ratio(j, [t], b)))

    h_theta = float(
        np.max(np.abs(_log_ratio_derivative(model, i, theta, u_i) - _log_ratio_derivative(model, j, theta, u_j)))
    )
    step_i = _MIXED_STEP * np.maximum(1.0, np.abs(u_i))
    step_j = _MIXED_STEP * np.maximum(1.0, np.abs(u_j))
    mixed = (
        log_h(theta, u_i + step_i, u_j + step_j)
        - log_h(theta, u_i + step_i, u_j - step_j)
        - log_h(theta, u_i - step_i, u_j + step_j)
        + log_h(theta, u_i - step_i, u_j - step_j)
    ) / (4.0 * step_i * step_j)
    mixed_sup = float(np.max(np.abs(mixed)))
    separable = h_theta <= tol and mixed_sup <= tol
    _LOGGER.debug("Separability of %s: dtheta log h=%.3e, mixed=%.3e", model.name, h_theta, mixed_sup)
    return SeparabilityReport(
        h_theta_dependence=h_theta,
        mixed_log_partial=mixed_sup,
        separable=separable,
        regular=separable,
        tolerance=tol,
        ranges={"u": [list(u_ranges[i]), list(u_ranges[j])], "theta": [list(theta_range)]},
        offending_index=None if separable else j + 1,
        theta_anchor=(float(np.mean(theta_range)),),
    )


def n_sample_separability(
    model: CoordinateModel,
    u_ranges,
    theta_range,
    points: int = REGULARITY_GRID_POINTS,
    tol: float = REGULARITY_TOL,
) -> SeparabilityReport:
    """
    All-coordinate test: every r_i(theta, u) must factor as f(theta) f_i(u)
    with one shared f, i.e. d/dtheta log r_i is u-free and equal across i.
    """
    if model.p != 1:
        msg = f"n_sample_separability needs one parameter, {model.name} has {model.p}"
        raise ConfigurationException(msg)
    u_ranges = _per_coordinate(u_ranges, model.n)
    theta_axis = _axis(theta_range, points)
    spreads, profiles = [], []
    for i in range(model.n):
        u, theta = np.meshgrid(_axis(u_ranges[i], points), theta_axis, indexing="ij")
        derivative = _log_ratio_derivative(model, i, theta, u)
        spreads.append(float(np.max(np.ptp(derivative, axis=0))))
        profiles.append(derivative[points // 2])
    cross = [float(np.max(np.abs(profile - profiles[0]))) for profile in profiles]
    factor_failures = [k for k, spread in enumerate(spreads) if spread > tol]
    shared_failures = [k for k, value in enumerate(cross) if value > tol]
    regular = not factor_failures and not shared_failures
    offending = None
    if factor_failures:
        offending = max(factor_failures, key=lambda k: spreads[k]) + 1
    elif shared_failures:
        offending = max(shared_failures, key=lambda k: cross[k]) + 1
    if offending is not None:
        _LOGGER.info("Coordinate %d of %s breaks the shared theta factor", offending, model.name)
    return SeparabilityReport(
        h_theta_dependence=max(cross),
        mixed_log_partial=max(spreads),
        separable=not factor_failures,
        regular=regular,
        tolerance=tol,
        ranges={"u": [list(r) for r in u_ranges], "theta": [list(theta_range)]},
        offending_index=offending,
        theta_anchor=(float(np.mean(theta_range)),),
    )


def _per_coordinate(u_ranges, n: int) -> list[tuple[float, float]]:
    ranges = np.asarray(u_ranges, dtype=float)
    if ranges.shape == (2,):
        return [tuple(ranges.tolist())] * n
    if ranges.shape != (n, 2):
        msg = f"Expected one u range or {n} ranges, got shape {ranges.shape}"
        raise ConfigurationException(msg)
    return [tuple(row) for row in ranges.tolist()]


def _tabulate(reciprocal: Callable[[float], float], grid: np.ndarray, anchor: float):
    """Antiderivative of reciprocal on grid, zero at anchor, as a Hermite spline."""
    slopes = np.asarray([reciprocal(t) for t in grid], dtype=float)
    if not (np.all(slopes > 0) or np.all(slopes < 0)):
        msg = "Tabulated transform is not strictly monotone on its grid"
        raise SingularModelException(msg)
    pieces = [0.0]
    for a, b in zip(grid[:-1], grid[1:], strict=True):
        piece, error = integrate.quad(reciprocal, a, b, epsabs=1e-13, epsrel=1e-12)
        pieces.append(piece)
    values = np.cumsum(pieces)
    offset, _ = integrate.quad(reciprocal, grid[0], anchor, epsabs=1e-13, epsrel=1e-12)
    return interpolate.CubicHermiteSpline(grid, values - offset, slopes)


def extract_location_transform(
    model: CoordinateModel,
    report: SeparabilityReport,
    u_range,
    theta_range,
    u_anchor: float | None = None,
    theta_anchor: float | None = None,
) -> LocationScaleTransform:
    """
    Recover V_i and delta with x_i = G_i(V_i(u_i) + delta(theta)).

    C_i(u) = r_i(theta0, u) and C(theta) = r_1(theta0, u0) / r_1(theta, u0)
    agree with the true factors up to one common constant; V_i(u0) = 0 and
    delta(theta0) = 0 fix the additive constants.
    """
    if not report.regular:
        msg = f"{model.name} is not regular; no location transform exists"
        raise ConfigurationException(msg)
    if model.p != 1:
        msg = "Location transforms are extracted for one-parameter models"
        raise ConfigurationException(msg)
    u_grid = _axis(u_range, TABULATION_POINTS)
    theta_grid = _axis(theta_range, TABULATION_POINTS)
    u0 = float(np.mean(u_range)) if u_anchor is None else float(u_anchor)
    theta0 = float(np.mean(theta_range)) if theta_anchor is None else float(theta_anchor)

    def scale_theta(t):
        anchor = model.ratio(0, [np.asarray(theta0)], np.asarray(u0))
        return float(anchor / model.ratio(0, [np.asarray(t)], np.asarray(u0)))

    v_maps = []
    for i in range(model.n):

        def reciprocal_u(t, i=i):
            return 1.0 / float(model.ratio(i, [np.asarray(theta0)], np.asarray(t)))

        v_maps.append(_tabulate(reciprocal_u, u_grid, u0))
    delta_map = _tabulate(lambda t: 1.0 / scale_theta(t), theta_grid, theta0)

    c_u = np.asarray(model.ratio(0, [np.full_like(u_grid, theta0)], u_grid), dtype=float)
    c_theta = np.asarray([scale_theta(t) for t in theta_grid])
    residual = _level_set_residual(model, v_maps, delta_map, u_grid, theta_grid)
    _LOGGER.debug("Location transform of %s: level-set residual %.3e", model.name, residual)
    return LocationScaleTransform(
        v_maps=tuple(v_maps),
        delta_map=delta_map,
        residual=residual,
        u_grid=u_grid,
        theta_grid=theta_grid,
        c_u=c_u,
        c_theta=c_theta,
        u_anchor=u0,
        theta_anchor=theta0,
    )


def _level_set_residual(model, v_maps, delta_map, u_grid, theta_grid, points: int = 11) -> float:
    """Move along V + delta = const to another theta and compare the forward map."""
    u_samples = np.linspace(u_grid[0], u_grid[-1], points)[1:-1]
    theta_samples = np.linspace(theta_grid[0], theta_grid[-1], points)[1:-1]
    worst = 0.0
    for i, v_map in enumerate(v_maps):
        v_lo, v_hi = sorted((float(v_map(u_grid[0])), float(v_map(u_grid[-1]))))
        for theta in theta_samples:
            for u in u_samples:
                level = float(v_map(u)) + float(delta_map(theta))
                x = float(model.value(i, [np.asarray(theta)], np.asarray(u)))
                for other in theta_samples:
                    target = level - float(delta_map(other))
                    if not v_lo < target < v_hi:
                        continue
                    partner = optimize.brentq(
                        lambda t, target=target: float(v_map(t)) - target, u_grid[0], u_grid[-1], xtol=1e-14
                    )
                    moved = float(model.value(i, [np.asarray(other)], np.asarray(partner)))
                    worst = max(worst, abs(moved - x) / max(1.0, abs(x)))
    return worst


def _proportional(values: np.ndarray, base: np.ndarray) -> bool:
    ratio = values / base
    return float(np.ptp(ratio)) <= _FORM_RTOL * max(1.0, float(np.max(np.abs(ratio))))


def describe_form(transform: LocationScaleTransform) -> str:
    """Name the recovered structure from the shape of C_i(u) and C(theta)."""
    if _proportional(transform.c_u, np.ones_like(transform.c_u)) and _proportional(
        transform.c_theta, np.ones_like(transform.c_theta)
    ):
        return "location"
    if (
        np.all(transform.u_grid != 0)
        and np.all(transform.theta_grid != 0)
        and _proportional(transform.c_u, transform.u_grid)
        and _proportional(transform.c_theta, transform.theta_grid)
    ):
        return "location after log transform"
    return "generalized location"


def _determinant(model, theta, first, second) -> np.ndarray:
    a1, a2 = model.d_theta(0, theta, first)
    b1, b2 = model.d_theta(0, theta, second)
    return a1 * b2 - a2 * b1


def two_parameter_test(
    model: CoordinateModel,
    u_range,
    theta_ranges,
    u_points: int = 9,
    theta_points: int = REGULARITY_GRID_POINTS,
    tol: float = REGULARITY_TOL,
) -> SeparabilityReport:
    """
    Location-scale test for a common-form two-parameter model.

    The cross-ratio F(u2, u3) / F(u3, u1) * a_u(u1) / a_u(u2), with F the
    2 x 2 determinant of theta-partials at two points, is theta-free exactly
    when theta is a generalized location-scale parameter. Grid points with a
    vanishing determinant or a_u are excluded.
    """
    if model.p != 2 or not model.common_form or model.n < 3:
        msg = "two_parameter_test needs a common-form model with p = 2 and n >= 3"
        raise ConfigurationException(msg)
    u_axis = _axis(u_range, u_points)
    theta_ranges = np.asarray(theta_ranges, dtype=float).reshape(2, 2)
    u1, u2, u3, t1, t2 = np.meshgrid(
        u_axis, u_axis, u_axis, _axis(theta_ranges[0], theta_points), _axis(theta_ranges[1], theta_points),
        indexing="ij",
    )
    theta = [t1, t2]
    numerator = _determinant(model, theta, u2, u3)
    denominator = _determinant(model, theta, u3, u1)
    a_u1 = model.d_u(0, theta, u1)
    a_u2 = model.d_u(0, theta, u2)
    scale = max(float(np.max(np.abs(denominator))), 1e-300)
    valid = (np.abs(denominator) > 1e-12 * scale) & (np.abs(a_u2) > 0) & np.isfinite(a_u1)
    valid &= np.all(valid, axis=(3, 4), keepdims=True)
    excluded = 1.0 - float(np.mean(valid))
    if excluded > MAX_EXCLUDED_FRACTION:
        msg = f"{excluded:.0%} of the grid is singular for {model.name}; test inconclusive"
        raise InconclusiveException(msg)
    if excluded > 0:
        _LOGGER.warning("Excluded %.1f%% singular grid points for %s", 100 * excluded, model.name)
    triples = valid[..., 0, 0]
    with np.errstate(all="ignore"):
        ratio = (numerator / denominator * a_u1 / a_u2)[triples]
    spread = np.ptp(ratio, axis=(1, 2))
    level = np.maximum(1.0, np.max(np.abs(ratio), axis=(1, 2)))
    dependence = float(np.max(spread / level))
    regular = dependence <= tol
    return SeparabilityReport(
        h_theta_dependence=dependence,
        mixed_log_partial=0.0,
        separable=regular,
        regular=regular,
        tolerance=tol,
        ranges={"u": [list(u_range)], "theta": theta_ranges.tolist()},
        excluded_fraction=excluded,
        theta_anchor=tuple(float(v) for v in theta_ranges.mean(axis=1)),
    )


def degeneracy_rank_test(model: CoordinateModel, theta, u_points, rtol: float = RANK_RTOL) -> DegeneracyReport:
    """
    Rank of A[k, i] = a_theta_k(theta, u_i) / a_u(theta, u_i) for a three-parameter model.

    theta may be one point or a stack of points; the largest rank over them
    is reported. Left singular vectors give the theta-space directions that
    survive (rank columns) and those that collapse.
    """
    if model.p != 3:
        msg = f"degeneracy_rank_test needs three parameters, {model.name} has {model.p}"
        raise ConfigurationException(msg)
    u_points = np.asarray(u_points, dtype=float).ravel()
    if u_points.size < 4:
        msg = f"degeneracy_rank_test needs at least 4 u points, got {u_points.size}"
        raise ConfigurationException(msg)
    thetas = np.atleast_2d(np.asarray(theta, dtype=float))
    best = None
    excluded_total = 0
    for point in thetas:
        theta_args = [np.full_like(u_points, value) for value in point]
        a_u = model.d_u(0, theta_args, u_points)
        keep = (a_u != 0) & np.isfinite(a_u)
        excluded_total += int(np.count_nonzero(~keep))
        if not np.any(keep):
            msg = f"a_u vanishes at every test point for theta={point.tolist()}"
            raise SingularModelException(msg)
        if not np.all(keep):
            _LOGGER.warning("Excluding %d point(s) with a_u = 0 at theta=%s", int(np.count_nonzero(~keep)), point)
        partials = model.d_theta(0, theta_args, u_points)
        matrix = np.vstack([np.asarray(d)[keep] / a_u[keep] for d in partials])
        left, singular, _ = np.linalg.svd(matrix, full_matrices=True)
        rank = int(np.sum(singular > rtol * singular[0])) if singular[0] > 0 else 0
        if best is None or rank > best[0]:
            best = (rank, singular, left)
    rank, singular, left = best
    return DegeneracyReport(
        numerical_rank=rank,
        singular_values=singular.tolist(),
        degenerate=rank < 3,
        theta_directions=left[:, :rank].T.tolist(),
        null_directions=left[:, rank:].T.tolist(),
        excluded_points=excluded_total,
    )


@dataclass(frozen=True)
class Classification(BaseReport):
    verdict: str
    details: dict


def classify(
    model: CoordinateModel,
    u_range,
    theta_ranges,
    degeneracy_theta=None,
    u_points=None,
    tol: float = REGULARITY_TOL,
) -> Classification:
    """Run the test that fits the parameter dimension and phrase a verdict."""
    theta_ranges = np.asarray(theta_ranges, dtype=float).reshape(model.p, 2)
    if model.p == 1:
        if model.n == 2:
            report = separability_test(model, u_range, theta_ranges[0], tol=tol)
        else:
            report = n_sample_separability(model, u_range, theta_ranges[0], tol=tol)
        details = {"separability": report.to_dict()}
        if not report.regular:
            return Classification("not regular", details)
        u_first = _per_coordinate(u_range, model.n)[0]
        transform = extract_location_transform(model, report, u_first, theta_ranges[0])
        details["transform"] = transform.to_dict()
        return Classification(f"regular: {describe_form(transform)}", details)
    if model.p == 2:
        report = two_parameter_test(model, u_range, theta_ranges, tol=tol)
        verdict = "regular: location-scale" if report.regular else "not regular"
        return Classification(verdict, {"two_parameter": report.to_dict()})
    if model.p == 3:
        theta = theta_ranges.mean(axis=1) if degeneracy_theta is None else degeneracy_theta
        points = np.linspace(*np.asarray(u_range, dtype=float).ravel()[:2], 6) if u_points is None else u_points
        report = degeneracy_rank_test(model, theta, points)
        verdict = (
            f"degenerate, rank {report.numerical_rank}"
            if report.degenerate
            else f"not degenerate, rank {report.numerical_rank}"
        )
        return Classification(verdict, {"degeneracy": report.to_dict()})
    msg = f"No regularity test for {model.p} parameters"
    raise ConfigurationException(msg)
