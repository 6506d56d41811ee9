"""
Conditioning variables from the characteristic ODEs of du/dtheta.

A function eta(u) whose theta-derivative vanishes at theta0 solves the
homogeneous linear system sum_i g_ik(u) d eta/du_i = 0, k = 1..p, where
g = du/dtheta at theta0. Its solutions are constant along the
characteristic surfaces du/dtau_k = g[:, k], so the coordinates where a
characteristic meets a fixed reference slice are the invariants.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre

from ..const import (
    CERTIFY_SAFETY,
    DEFAULT_SEED,
    GAUSS_LEGENDRE_NODES,
    MAX_CONTINUATION_STEPS,
    PICARD_MAX_ITER,
    PICARD_STALL_LIMIT,
    PICARD_TOL,
    RANK_RTOL,
)
from .association import Association
from .base_report import BaseReport
from .exceptions.im_exception import ConfigurationException, DomainException
from .exceptions.solver_exception import (
    DependenceException,
    DomainExitException,
    FieldUnboundedException,
    PicardDivergenceException,
    QuadratureException,
    ReachException,
)
from .serialization import write_csv

_LOGGER = logging.getLogger(__name__)

_MAX_PANEL_DOUBLINGS = 12
_CERTIFY_ROUNDS = 30
_CERTIFY_RANDOM_POINTS = 48
_VERIFICATION_POINTS = 5


@dataclass(frozen=True)
class CharacteristicField:
    """Right-hand side g(tau, u) of du/dtau_k = g[:, k]; an n x p matrix per point."""

    n: int
    p: int
    function: Callable[[np.ndarray, np.ndarray], np.ndarray]
    anchor: tuple[float, ...] = ()
    name: str = "field"

    def eval(self, tau, u) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        u = np.atleast_1d(np.asarray(u, dtype=float))
        with np.errstate(all="ignore"):
            value = np.asarray(self.function(tau, u), dtype=float).reshape(self.n, self.p)
        if not np.all(np.isfinite(value)):
            msg = f"{self.name} is not finite at tau={tau.tolist()}, u={u.tolist()}"
            raise FieldUnboundedException(msg)
        return value


@dataclass(frozen=True)
class PicardConfig:
    """Rectangle I_a(tau0) x B_b(u0) with per-axis half-widths a and ball radius b."""

    half_widths: tuple[float, ...]
    radius: float
    tol: float = PICARD_TOL
    max_iter: int = PICARD_MAX_ITER
    axis_order: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        half_widths = tuple(float(v) for v in np.atleast_1d(self.half_widths))
        object.__setattr__(self, "half_widths", half_widths)
        if any(v <= 0 for v in half_widths) or self.radius <= 0 or self.tol <= 0:
            msg = f"Picard rectangle needs a > 0, b > 0, tol > 0: a={half_widths}, b={self.radius}, tol={self.tol}"
            raise ConfigurationException(msg)
        if self.max_iter < 1:
            msg = f"max_iter must be positive, got {self.max_iter}"
            raise ConfigurationException(msg)
        if self.axis_order is not None and sorted(self.axis_order) != list(range(len(half_widths))):
            msg = f"axis_order {self.axis_order} is not a permutation of the tau axes"
            raise ConfigurationException(msg)

    def order(self) -> tuple[int, ...]:
        """Axis sweep order; the default staircase moves the last axis first."""
        if self.axis_order is not None:
            return tuple(self.axis_order)
        return tuple(reversed(range(len(self.half_widths))))


@dataclass(frozen=True)
class _PathSolution:
    end: np.ndarray
    iterations: int
    residual: float
    panels: int


def _integration_matrix(nodes: np.ndarray) -> np.ndarray:
    """S[j, l] = integral from -1 to x_j of the l-th Lagrange basis polynomial."""
    count = nodes.size
    vander = legendre.legvander(nodes, count - 1)
    antiderivative = np.empty((count, count))
    for degree in range(count):
        coef = np.zeros(count)
        coef[degree] = 1.0
        antiderivative[:, degree] = legendre.legval(nodes, legendre.legint(coef, lbnd=-1))
    return antiderivative @ np.linalg.inv(vander)


_GL_NODES, _GL_WEIGHTS = legendre.leggauss(GAUSS_LEGENDRE_NODES)
_GL_MATRIX = _integration_matrix(_GL_NODES)


def _legs(tau0: np.ndarray, tau: np.ndarray, order: Sequence[int]) -> list[tuple[int, float]]:
    """Staircase path from tau0 to tau: one signed leg per axis that moves."""
    return [(k, float(tau[k] - tau0[k])) for k in order if tau[k] != tau0[k]]


def _solve_path(
    cfield: CharacteristicField, u0: np.ndarray, tau0: np.ndarray, tau: np.ndarray,
    config: PicardConfig,
) -> _PathSolution:
    legs = _legs(tau0, tau, config.order())
    if not legs:
        return _PathSolution(u0.copy(), 0, 0.0, 0)
    previous = None
    panels = 1
    for _ in range(_MAX_PANEL_DOUBLINGS):
        solution = _picard_on_panels(cfield, u0, tau0, legs, panels, config)
        if previous is not None and np.max(np.abs(solution.end - previous.end)) <= config.tol / 10 * max(
            1.0, float(np.max(np.abs(solution.end)))
        ):
            return solution
        previous = solution
        panels *= 2
    msg = f"Picard quadrature did not settle after {panels // 2} panels per leg"
    raise QuadratureException(msg)


def _picard_on_panels(cfield, u0, tau0, legs, panels, config) -> _PathSolution:
    """Fixed point of u(s) = u0 + integral_0^s F(r, u(r)) dr on Gauss-Legendre panels."""
    node_tau, node_axis, node_sign, panel_h = [], [], [], []
    position = tau0.copy()
    for axis, length in legs:
        h = length / panels
        for m in range(panels):
            start = position[axis] + m * h
            for x in _GL_NODES:
                point = position.copy()
                point[axis] = start + 0.5 * h * (x + 1.0)
                node_tau.append(point)
            node_axis.append(axis)
            panel_h.append(abs(h))
            node_sign.append(np.sign(h))
        position[axis] += length
    node_tau = np.asarray(node_tau)
    total_panels = len(panel_h)
    nodes_per_panel = _GL_NODES.size
    u_nodes = np.tile(u0, (total_panels * nodes_per_panel, 1))
    history = []
    scale = max(1.0, float(np.max(np.abs(u0))))

    for iteration in range(1, config.max_iter + 1):
        new_nodes = np.empty_like(u_nodes)
        running = u0.copy()
        for m in range(total_panels):
            block = slice(m * nodes_per_panel, (m + 1) * nodes_per_panel)
            slope = np.array(
                [
                    node_sign[m] * cfield.eval(t, u)[:, node_axis[m]]
                    for t, u in zip(node_tau[block], u_nodes[block], strict=True)
                ]
            )
            half = 0.5 * panel_h[m]
            new_nodes[block] = running + half * (_GL_MATRIX @ slope)
            running = running + half * (_GL_WEIGHTS @ slope)
        distance = np.max(np.linalg.norm(np.vstack([new_nodes, running]) - u0, axis=1))
        if distance > config.radius:
            msg = (
                f"Picard iterate {iteration} left the ball of radius {config.radius} "
                f"around u0 (distance {distance:.6g})"
            )
            raise DomainExitException(msg)
        residual = float(np.max(np.abs(new_nodes - u_nodes)))
        u_nodes = new_nodes
        scale = max(scale, float(np.max(np.abs(new_nodes))))
        if residual <= config.tol * scale:
            return _PathSolution(running, iteration - 1, residual, panels)
        history.append(residual)
        if len(history) > PICARD_STALL_LIMIT and all(
            later >= earlier
            for earlier, later in zip(history[-PICARD_STALL_LIMIT - 1 :], history[-PICARD_STALL_LIMIT:], strict=False)
        ):
            msg = (
                f"Picard residual non-decreasing for {PICARD_STALL_LIMIT} iterations: "
                + ", ".join(f"{r:.3e}" for r in history[-PICARD_STALL_LIMIT - 1 :])
            )
            raise PicardDivergenceException(msg)
    msg = (
        f"Picard iteration did not reach tol {config.tol} in {config.max_iter} "
        f"iterations (last residual {history[-1]:.3e})"
    )
    raise PicardDivergenceException(msg)


@dataclass
class Trajectory:
    """Characteristic through u0 at tau0, solved by Picard iteration on demand."""

    cfield: CharacteristicField
    u0: np.ndarray
    tau0: np.ndarray
    config: PicardConfig
    iterations_used: int = 0
    final_residual: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def evaluate(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if tau.shape != self.tau0.shape:
            msg = f"tau must have shape {self.tau0.shape}, got {tau.shape}"
            raise ConfigurationException(msg)
        if np.any(np.abs(tau - self.tau0) > np.asarray(self.config.half_widths) * (1 + 1e-12)):
            msg = f"tau={tau.tolist()} is outside the rectangle around {self.tau0.tolist()}"
            raise DomainException(msg)
        key = tuple(tau.tolist())
        if key not in self._cache:
            self._cache[key] = _solve_path(self.cfield, self.u0, self.tau0, tau, self.config)
        return self._cache[key].end.copy()

    def solution(self, tau) -> _PathSolution:
        self.evaluate(tau)
        return self._cache[tuple(np.atleast_1d(np.asarray(tau, dtype=float)).tolist())]


def build_field(assoc: Association, theta0, orientation: float = 1.0) -> CharacteristicField:
    """
    Field g(u) = orientation * du/dtheta at (forward(u, theta0), theta0).

    Orientation -1 follows the Lagrange-Charpit sign used for the Brownian
    variance model; either sign spans the same characteristics.
    """
    theta0 = assoc.params.check(theta0)
    if orientation not in (1.0, -1.0):
        msg = f"orientation must be +1 or -1, got {orientation}"
        raise ConfigurationException(msg)

    def function(tau, u):
        return orientation * assoc.du_dtheta(assoc.forward(u, theta0), theta0)

    sample_u = assoc.aux.sample(DEFAULT_SEED, 1)[0]
    function(np.zeros(assoc.params.dim), sample_u)
    return CharacteristicField(
        n=assoc.n_data,
        p=assoc.params.dim,
        function=function,
        anchor=tuple(theta0.tolist()),
        name=f"field({assoc.name})",
    )


def picard_solve(cfield: CharacteristicField, u0, tau0, config: PicardConfig) -> Trajectory:
    """
    Solve the characteristic through (tau0, u0) on the configured rectangle.

    Convergence is verified on a 5-point-per-axis grid of the rectangle;
    iterations_used and final_residual are the worst values over that grid.
    """
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    tau0 = np.atleast_1d(np.asarray(tau0, dtype=float))
    if u0.shape != (cfield.n,) or tau0.shape != (cfield.p,):
        msg = f"Expected u0 of length {cfield.n} and tau0 of length {cfield.p}"
        raise ConfigurationException(msg)
    if len(config.half_widths) != cfield.p:
        msg = f"Picard rectangle has {len(config.half_widths)} axes, field has {cfield.p}"
        raise ConfigurationException(msg)
    trajectory = Trajectory(cfield, u0, tau0, config)
    offsets = [
        np.linspace(-a, a, _VERIFICATION_POINTS) for a in config.half_widths
    ]
    iterations, residual = 0, 0.0
    for point in np.stack(np.meshgrid(*offsets, indexing="ij"), axis=-1).reshape(-1, cfield.p):
        solution = trajectory.solution(tau0 + point)
        iterations = max(iterations, solution.iterations)
        residual = max(residual, solution.residual)
    trajectory.iterations_used = iterations
    trajectory.final_residual = residual
    _LOGGER.debug(
        "Picard solve of %s: %d iteration(s), residual %.3e", cfield.name, iterations, residual
    )
    return trajectory


def _ball_samples(u0: np.ndarray, b: float) -> np.ndarray:
    n = u0.size
    points = [u0]
    for i in range(n):
        for radius in (b, -b, 0.5 * b, -0.5 * b):
            step = np.zeros(n)
            step[i] = radius
            points.append(u0 + step)
    rng = np.random.default_rng(DEFAULT_SEED)
    directions = rng.standard_normal((_CERTIFY_RANDOM_POINTS, n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = b * rng.uniform(size=(_CERTIFY_RANDOM_POINTS, 1)) ** (1.0 / n)
    points.extend(u0 + directions * radii)
    return np.asarray(points)


def _rectangle_bounds(cfield, u_samples, tau0, a) -> tuple[float, float]:
    offsets = [np.array([-a, 0.0, a]) for _ in range(cfield.p)]
    taus = tau0 + np.stack(np.meshgrid(*offsets, indexing="ij"), axis=-1).reshape(-1, cfield.p)
    bound, lipschitz = 0.0, 0.0
    for tau in taus:
        values = np.array([cfield.eval(tau, u) for u in u_samples])
        bound = max(bound, float(np.max(np.linalg.norm(values, axis=(1, 2)))))
        diffs = np.linalg.norm(values[:, None] - values[None, :], axis=(2, 3))
        spans = np.linalg.norm(u_samples[:, None] - u_samples[None, :], axis=2)
        mask = spans > 0
        if np.any(mask):
            lipschitz = max(lipschitz, float(np.max(diffs[mask] / spans[mask])))
    return bound, lipschitz


def certify_rectangle(cfield: CharacteristicField, u0, tau0, b: float) -> tuple[float, float, float]:
    """
    Bounds (M, L, a) for the Picard rectangle: a <= 0.9 min(b / (2pM), 1 / (pnL)).

    M and L are sampled on I_a x B_b for the current a, which is shrunk
    until the sampled rectangle contains the certified one.
    """
    if b <= 0:
        msg = f"Ball radius b must be positive, got {b}"
        raise ConfigurationException(msg)
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    tau0 = np.atleast_1d(np.asarray(tau0, dtype=float))
    samples = _ball_samples(u0, b)
    p, n = cfield.p, cfield.n
    a_sampled = b
    for _ in range(_CERTIFY_ROUNDS):
        bound, lipschitz = _rectangle_bounds(cfield, samples, tau0, a_sampled)
        limits = [b / (2 * p * bound) if bound > 0 else np.inf]
        limits.append(1.0 / (p * n * lipschitz) if lipschitz > 0 else np.inf)
        a = CERTIFY_SAFETY * min(limits)
        if not np.isfinite(a):
            a = a_sampled
        if a <= a_sampled:
            _LOGGER.debug("Certified rectangle: M=%.6g L=%.6g a=%.6g", bound, lipschitz, a)
            return bound, lipschitz, a
        a_sampled = a
    return bound, lipschitz, min(a, a_sampled)


@dataclass(frozen=True)
class ReferenceSlice:
    """Affine slice {u : u[coords] = values} of codimension p."""

    coords: tuple[int, ...]
    values: tuple[float, ...]

    @classmethod
    def leading(cls, p: int, values=None) -> "ReferenceSlice":
        values = (0.0,) * p if values is None else tuple(float(v) for v in values)
        return cls(tuple(range(p)), values)

    def free_coords(self, n: int) -> list[int]:
        return [i for i in range(n) if i not in self.coords]


def _trace_to_slice(cfield: CharacteristicField, u, reference: ReferenceSlice, tol: float) -> np.ndarray:
    """Continue along the characteristic with Newton-directed certified steps."""
    u_current = np.atleast_1d(np.asarray(u, dtype=float)).copy()
    tau_current = np.zeros(cfield.p)
    coords = list(reference.coords)
    target = np.asarray(reference.values)
    for step in range(MAX_CONTINUATION_STEPS):
        gap = u_current[coords] - target
        if np.max(np.abs(gap)) <= tol * max(1.0, float(np.max(np.abs(u_current)))):
            _LOGGER.debug("Reached reference slice after %d step(s), tau=%s", step, tau_current)
            return u_current
        jacobian = cfield.eval(tau_current, u_current)[coords, :]
        try:
            delta = -np.linalg.solve(jacobian, gap)
        except np.linalg.LinAlgError as ex:
            msg = f"Characteristic is tangent to the reference slice at u={u_current.tolist()}"
            raise ReachException(msg) from ex
        local = max(float(np.linalg.norm(cfield.eval(tau_current, u_current))), 1e-12)
        radius = 3.0 * cfield.p * local * float(np.max(np.abs(delta))) / CERTIFY_SAFETY
        _, _, a = certify_rectangle(cfield, u_current, tau_current, radius)
        delta = np.clip(delta, -a, a)
        config = PicardConfig(half_widths=(a,) * cfield.p, radius=radius, tol=tol)
        trajectory = Trajectory(cfield, u_current, tau_current, config)
        u_current = trajectory.evaluate(tau_current + delta)
        tau_current = tau_current + delta
    msg = f"Reference slice not reached in {MAX_CONTINUATION_STEPS} continuation steps"
    raise ReachException(msg)


def trace_invariants(
    cfield: CharacteristicField,
    u,
    reference: ReferenceSlice | None = None,
    tol: float = PICARD_TOL,
    check_rank: bool = True,
) -> np.ndarray:
    """
    Slice coordinates where the characteristic through u meets the reference slice.

    The n - p returned values are constant along characteristics. With
    check_rank their Jacobian in u must have full row rank n - p.
    """
    reference = reference or ReferenceSlice.leading(cfield.p)
    if len(reference.coords) != cfield.p:
        msg = f"Reference slice must fix {cfield.p} coordinates, got {len(reference.coords)}"
        raise ConfigurationException(msg)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    free = reference.free_coords(cfield.n)
    invariants = _trace_to_slice(cfield, u, reference, tol)[free]
    if check_rank:
        jacobian = _invariant_jacobian(cfield, u, reference, tol, free)
        singular = np.linalg.svd(jacobian, compute_uv=False)
        rank = int(np.sum(singular > RANK_RTOL * singular[0])) if singular[0] > 0 else 0
        if rank != len(free):
            msg = f"Traced invariants have Jacobian rank {rank}, expected {len(free)}"
            raise DependenceException(msg)
    return invariants


def _invariant_jacobian(cfield, u, reference, tol, free) -> np.ndarray:
    columns = []
    for i in range(u.size):
        h = 1e-6 * max(1.0, abs(u[i]))
        plus, minus = u.copy(), u.copy()
        plus[i] += h
        minus[i] -= h
        columns.append(
            (_trace_to_slice(cfield, plus, reference, tol)[free]
             - _trace_to_slice(cfield, minus, reference, tol)[free]) / (2 * h)
        )
    return np.column_stack(columns)


@dataclass(frozen=True)
class ConditioningVariable(BaseReport):
    """eta(u) with its certified sup of |d eta / d theta_k| at the anchor."""

    eta: Callable[[np.ndarray], float] = field(repr=False)
    anchor: tuple[float, ...]
    max_theta_derivative: float
    name: str = "eta"

    def certified(self, tol: float) -> bool:
        return self.max_theta_derivative <= tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "anchor": list(self.anchor),
            "max_theta_derivative": float(self.max_theta_derivative),
        }


def verify_local_conditioning(
    eta: Callable[[np.ndarray], float],
    assoc: Association,
    theta0,
    sample_size: int,
    fd_step=None,
    seed=DEFAULT_SEED,
) -> float:
    """
    max |d eta(u(x, theta)) / d theta_k| at theta0 over sampled data, relative to |eta|.

    Data are x = forward(u, theta0) for u drawn from the auxiliary law; the
    derivative is a central difference through the inverse map.
    """
    theta0 = assoc.params.check(theta0)
    if sample_size < 1:
        msg = f"sample_size must be positive, got {sample_size}"
        raise ConfigurationException(msg)
    steps = (
        assoc.fd_steps(theta0)
        if fd_step is None
        else np.broadcast_to(np.asarray(fd_step, dtype=float), theta0.shape)
    )
    draws = assoc.aux.sample(seed, sample_size)
    magnitudes, derivatives = [], []
    for u in draws:
        x = assoc.forward(u, theta0)
        magnitudes.append(abs(float(eta(assoc.inverse(x, theta0)))))
        for k in range(theta0.size):
            plus, minus = theta0.copy(), theta0.copy()
            plus[k] += steps[k]
            minus[k] -= steps[k]
            change = float(eta(assoc.inverse(x, plus))) - float(eta(assoc.inverse(x, minus)))
            derivatives.append(abs(change) / (2.0 * steps[k]))
    scale = max(1.0, float(np.median(magnitudes)))
    return float(max(derivatives)) / scale


def invariant_conditioning_variables(
    assoc: Association,
    theta0,
    reference: ReferenceSlice | None = None,
    sample_size: int = 20,
    orientation: float = 1.0,
) -> list[ConditioningVariable]:
    """Conditioning variables eta_j(u) = j-th traced invariant, each certified at theta0."""
    cfield = build_field(assoc, theta0, orientation)
    reference = reference or ReferenceSlice.leading(cfield.p)
    free = reference.free_coords(cfield.n)
    traced = {}

    def invariants(u):
        key = np.asarray(u, dtype=float).tobytes()
        if key not in traced:
            traced[key] = trace_invariants(cfield, u, reference, check_rank=False)
        return traced[key]

    variables = []
    for j, coord in enumerate(free):

        def eta(u, j=j):
            return float(invariants(u)[j])

        derivative = verify_local_conditioning(eta, assoc, theta0, sample_size)
        variables.append(
            ConditioningVariable(
                eta=eta,
                anchor=cfield.anchor,
                max_theta_derivative=derivative,
                name=f"invariant_u{coord + 1}",
            )
        )
    return variables


def export_trajectory_csv(trajectory: Trajectory, taus, path):
    """Write tau_1..tau_p,u_1..u_n rows for the requested curve parameters."""
    taus = np.atleast_2d(np.asarray(taus, dtype=float))
    if taus.shape[1] != trajectory.cfield.p:
        taus = taus.reshape(-1, trajectory.cfield.p)
    header = [f"tau_{k + 1}" for k in range(trajectory.cfield.p)]
    header += [f"u_{i + 1}" for i in range(trajectory.cfield.n)]
    rows = [[*tau.tolist(), *trajectory.evaluate(tau).tolist()] for tau in taus]
    return write_csv(path, header, rows)
