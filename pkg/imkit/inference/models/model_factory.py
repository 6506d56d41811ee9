"""Catalog of named models built by identifier."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from ...const import (
    MODEL_BROWNIAN,
    MODEL_BROWNIAN_RATIO,
    MODEL_EXPRESSION,
    MODEL_GAUSSIAN_LOCATION_SCALE,
    MODEL_GAUSSIAN_MEAN,
)
from ..association import Association
from ..exceptions.im_exception import ConfigurationException
from ..regularity import CoordinateModel
from .brownian import (
    BrownianModel,
    brownian_q_association,
    brownian_ratio_association,
    brownian_statistics,
    brownian_v_association,
    ratio_statistic,
    simulate_brownian_path,
)
from .expression import ExpressionModel, load_model_file
from .gaussian import gaussian_location_scale_model, gaussian_mean_model

_LOGGER = logging.getLogger(__name__)

CATALOG = (
    MODEL_GAUSSIAN_MEAN,
    MODEL_GAUSSIAN_LOCATION_SCALE,
    MODEL_BROWNIAN,
    MODEL_BROWNIAN_RATIO,
    MODEL_EXPRESSION,
)


@dataclass(frozen=True)
class CatalogModel:
    """
    A built model with everything the command front end needs.

    Raw data are what users supply or simulate (x, or a path y for the
    Brownian models); prepare maps them to the association's data.
    """

    model_id: str
    association: Association
    truth: tuple[float, ...]
    simulate_raw: Callable[[np.random.Generator], np.ndarray] = field(repr=False)
    prepare: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=np.asarray)
    coordinate_model: CoordinateModel | None = field(repr=False, default=None)
    field_association: Association | None = field(repr=False, default=None)
    field_theta: tuple[float, ...] | None = None
    field_orientation: float = 1.0

    def data(self, raw) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.prepare(np.asarray(raw, dtype=float)), dtype=float))

    def simulate(self, rng) -> np.ndarray:
        """Raw data at the truth."""
        return np.atleast_1d(self.simulate_raw(rng))

    def field_setup(self) -> tuple[Association, tuple[float, ...], float]:
        """Association, anchor and orientation the characteristic field is built from."""
        if self.field_association is None:
            return self.association, self.truth, self.field_orientation
        return self.field_association, self.field_theta, self.field_orientation


def _truth(params: dict, key: str, default, size: int) -> tuple[float, ...]:
    values = np.atleast_1d(np.asarray(params.get(key, default), dtype=float))
    if values.size != size:
        msg = f"{key} must have {size} value(s), got {values.size}"
        raise ConfigurationException(msg)
    return tuple(values.tolist())


def _unexpected(model_id: str, params: dict, allowed) -> None:
    extra = sorted(set(params) - set(allowed))
    if extra:
        msg = f"Model {model_id!r} does not take parameters {extra}"
        raise ConfigurationException(msg)


class ModelFactory:
    @staticmethod
    def build(model_id, **params) -> CatalogModel:
        _LOGGER.debug("Building model %s with %s", model_id, params)
        if model_id == MODEL_GAUSSIAN_MEAN:
            _unexpected(model_id, params, ("n", "sigma", "theta"))
            n, sigma = int(params.get("n", 1)), float(params.get("sigma", 1.0))
            assoc = gaussian_mean_model(n, sigma)
            truth = _truth(params, "theta", 0.0, 1)
            coordinates = max(n, 2)
            if coordinates != n:
                _LOGGER.debug("Regularity tests for %s use %d coordinates in place of n=%d", model_id, coordinates, n)
            return CatalogModel(
                model_id=model_id,
                association=assoc,
                truth=truth,
                simulate_raw=lambda rng: assoc.sample_data(truth, rng),
                coordinate_model=CoordinateModel.common(
                    lambda theta, u: theta[0] + sigma * u,
                    n=coordinates,
                    p=1,
                    g_theta=lambda theta, u: [np.ones_like(u)],
                    g_u=lambda theta, u: np.full_like(u, sigma),
                    name=model_id,
                ),
            )
        if model_id == MODEL_GAUSSIAN_LOCATION_SCALE:
            _unexpected(model_id, params, ("n", "theta"))
            assoc = gaussian_location_scale_model(int(params.get("n", 3)))
            truth = _truth(params, "theta", (0.0, 1.0), 2)
            return CatalogModel(
                model_id=model_id,
                association=assoc,
                truth=truth,
                simulate_raw=lambda rng: assoc.sample_data(truth, rng),
                coordinate_model=CoordinateModel.common(
                    lambda theta, u: theta[0] + theta[1] * u,
                    n=assoc.n_data,
                    p=2,
                    g_theta=lambda theta, u: [np.ones_like(u), u],
                    g_u=lambda theta, u: theta[1],
                    name=model_id,
                ),
            )
        if model_id in (MODEL_BROWNIAN, MODEL_BROWNIAN_RATIO):
            allowed = ("n", "sigma2", "psi", "intercept")
            _unexpected(model_id, params, (*allowed, "pair") if model_id == MODEL_BROWNIAN_RATIO else allowed)
            model = BrownianModel.from_psi(
                int(params.get("n", 10)), float(params.get("sigma2", 1.0)), float(params.get("psi", 1.0))
            )
            intercept = float(params.get("intercept", 0.0))

            def simulate_raw(rng):
                return simulate_brownian_path(model.n, model.sigma2, model.psi, rng, intercept)

            if model_id == MODEL_BROWNIAN_RATIO:
                pair = params.get("pair")
                return CatalogModel(
                    model_id=model_id,
                    association=brownian_ratio_association(model.n, pair),
                    truth=(model.phi,),
                    simulate_raw=simulate_raw,
                    prepare=lambda y: ratio_statistic(brownian_statistics(y), pair),
                )
            return CatalogModel(
                model_id=model_id,
                association=brownian_q_association(model.n),
                truth=(model.sigma2, model.phi),
                simulate_raw=simulate_raw,
                prepare=brownian_statistics,
                field_association=brownian_v_association(model.n),
                field_theta=(float(np.log(model.sigma2)), model.phi),
                field_orientation=-1.0,
            )
        if model_id == MODEL_EXPRESSION:
            _unexpected(model_id, params, ("model_file", "definition", "theta"))
            if params.get("definition") is not None:
                expression = ExpressionModel.from_dict(params["definition"])
            elif params.get("model_file") is not None:
                expression = load_model_file(params["model_file"])
            else:
                msg = "The expression model needs a model file"
                raise ConfigurationException(msg)
            assoc = expression.association()
            truth = _truth(params, "theta", [0.0] * expression.p, expression.p)
            return CatalogModel(
                model_id=model_id,
                association=assoc,
                truth=truth,
                simulate_raw=lambda rng: assoc.sample_data(truth, rng),
                coordinate_model=expression.coordinate_model(),
            )
        msg = f"Unknown model {model_id!r}; choose one of {list(CATALOG)}"
        raise ConfigurationException(msg)
