"""Command line front end: plausibility, validity, characteristics, classify and simulate."""

import argparse
import logging
import sys
from pathlib import Path

import colorlog
import numpy as np

from . import __version__
from .config_flow import (
    COMMAND_CHARACTERISTICS,
    COMMAND_CLASSIFY,
    COMMAND_PLAUSIBILITY,
    COMMAND_SIMULATE,
    COMMAND_VALIDITY,
    LOG_LEVELS,
    build_config,
    parse_params,
)
from .const import (
    CONF_ALPHA,
    CONF_CONFIG,
    CONF_DATA,
    CONF_FIELD_FILE,
    CONF_FORMAT,
    CONF_GRID,
    CONF_LOG_LEVEL,
    CONF_MODEL,
    CONF_MODEL_FILE,
    CONF_MODEL_PARAMS,
    CONF_N_DRAWS,
    CONF_N_SIM,
    CONF_OUTPUT,
    CONF_PRS_SCALE,
    CONF_Q_OUTPUT,
    CONF_SAMPLE_SIZE,
    CONF_SEED,
    CONF_SIMULATE,
    CONF_THETA_RANGE,
    CONF_THREADS,
    CONF_TOL,
    CONF_U_RANGE,
    CONF_X,
    DOMAIN,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_ERROR,
    EXIT_OK,
    MODEL_BROWNIAN,
    MODEL_BROWNIAN_RATIO,
)
from .inference.characteristics import (
    PicardConfig,
    certify_rectangle,
    export_trajectory_csv,
    invariant_conditioning_variables,
    picard_solve,
)
from .inference.engine import plausibility_curve, plausibility_region, validity_diagnostic
from .inference.exceptions.im_exception import ConfigurationException, NumericalException
from .inference.models.brownian import brownian_statistics
from .inference.models.expression import load_field_file
from .inference.models.model_factory import CatalogModel, ModelFactory
from .inference.random_sets import symmetric_prs
from .inference.regularity import classify
from .inference.serialization import read_column_csv, write_csv, write_json

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)-8s %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

_TRAJECTORY_POINTS = 21


def setup_logging(level: str = "INFO") -> None:
    """Colored log lines on stderr for the package logger."""
    handler = colorlog.StreamHandler(sys.stderr)
    handler.setFormatter(
        colorlog.ColoredFormatter("%(log_color)s" + LOG_FORMAT, datefmt=DATE_FORMAT)
    )
    logger = logging.getLogger(DOMAIN)
    logger.handlers.clear()
    logger.addHandler(handler)
    logger.setLevel(level.upper())
    logger.propagate = False


def _catalog_model(config: dict) -> CatalogModel:
    try:
        return ModelFactory.build(config[CONF_MODEL], **config[CONF_MODEL_PARAMS])
    except (TypeError, ValueError) as ex:
        msg = f"Invalid parameters for {config[CONF_MODEL]}: {ex}"
        raise ConfigurationException(msg) from ex


def _raw_data(config: dict, model: CatalogModel) -> np.ndarray:
    if CONF_X in config:
        return np.asarray(config[CONF_X], dtype=float)
    if CONF_DATA in config:
        try:
            return np.asarray(read_column_csv(config[CONF_DATA]), dtype=float)
        except (OSError, ValueError) as ex:
            msg = f"Cannot read data file {config[CONF_DATA]}: {ex}"
            raise ConfigurationException(msg) from ex
    _LOGGER.info("Simulating %s data at theta=%s", model.model_id, model.truth)
    return model.simulate(np.random.default_rng(config[CONF_SEED]))


def _default_prs(model: CatalogModel, scale: float):
    aux = model.association.aux
    return symmetric_prs(aux, aux.median, radius_scale=scale)


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _write_report(config: dict, payload: dict) -> Path:
    """JSON as is, or a key,value CSV of the top-level scalars."""
    path = Path(config[CONF_OUTPUT])
    if config[CONF_FORMAT] == "json":
        return write_json(path, payload)
    rows = [
        [key, value if isinstance(value, str) else float(value)]
        for key, value in payload.items()
        if isinstance(value, (int, float, str)) and not isinstance(value, bool)
    ]
    rows += [[key, str(value).lower()] for key, value in payload.items() if isinstance(value, bool)]
    return write_csv(path, ["key", "value"], rows)


def cmd_plausibility(config: dict) -> int:
    model = _catalog_model(config)
    assoc = model.association
    x = model.data(_raw_data(config, model))
    prs = _default_prs(model, config[CONF_PRS_SCALE])
    axes = [np.linspace(lo, hi, count) for lo, hi, count in config[CONF_GRID]]
    curve = plausibility_curve(
        assoc, prs, x, axes,
        n_draws=config.get(CONF_N_DRAWS), seed=config[CONF_SEED], threads=config.get(CONF_THREADS),
    )
    region = None
    if curve.dim == 1:
        region = [list(interval) for interval in plausibility_region(curve, config[CONF_ALPHA])]
    else:
        _LOGGER.info("Skipping the plausibility region for a %d-axis grid", curve.dim)
    summary = {
        "model": model.model_id,
        "association": assoc.name,
        "prs": prs.name,
        "parameters": list(assoc.params.names),
        "data": x.tolist(),
        "alpha": config[CONF_ALPHA],
        "region": region,
        "argmax": list(curve.argmax()),
        "n_draws": config.get(CONF_N_DRAWS),
        "seed": config[CONF_SEED],
    }
    path = Path(config[CONF_OUTPUT])
    if config[CONF_FORMAT] == "csv":
        curve.to_csv(path)
        write_json(_sidecar(path), summary)
    else:
        write_json(path, {**summary, "grid": [axis.tolist() for axis in curve.grid], "pl": curve.pl.tolist()})
    _LOGGER.info("Wrote plausibility curve of %s to %s; region %s", assoc.name, path, region)
    return EXIT_OK


def cmd_validity(config: dict) -> int:
    model = _catalog_model(config)
    prs = _default_prs(model, config[CONF_PRS_SCALE])
    report = validity_diagnostic(
        model.association, prs, model.truth, config[CONF_N_SIM], config[CONF_SEED], config.get(CONF_THREADS)
    )
    payload = {
        "model": model.model_id,
        "prs": prs.name,
        "theta_true": list(model.truth),
        **report.to_dict(),
        "seed": config[CONF_SEED],
    }
    _write_report(config, payload)
    if not report.passed:
        _LOGGER.warning("Validity check failed for %s: KS=%.5f", prs.name, report.ks_one_sided)
    return EXIT_OK


def _trace_user_field(config: dict) -> int:
    definition = load_field_file(config[CONF_FIELD_FILE])
    cfield, u0, tau0 = definition.cfield, definition.u0, definition.tau0
    radius = max(1.0, float(np.max(np.abs(u0))))
    bound, lipschitz, half_width = certify_rectangle(cfield, u0, tau0, radius)
    trajectory = picard_solve(cfield, u0, tau0, PicardConfig(half_widths=(half_width,) * cfield.p, radius=radius))
    offsets = np.linspace(-half_width, half_width, _TRAJECTORY_POINTS if cfield.p == 1 else 5)
    mesh = np.meshgrid(*([offsets] * cfield.p), indexing="ij")
    taus = tau0 + np.column_stack([m.ravel() for m in mesh])
    path = Path(config[CONF_OUTPUT])
    export_trajectory_csv(trajectory, taus, path)
    write_json(
        _sidecar(path),
        {
            "field": cfield.name,
            "u0": u0.tolist(),
            "tau0": tau0.tolist(),
            "radius": radius,
            "half_width": half_width,
            "field_bound": bound,
            "lipschitz": lipschitz,
            "iterations": trajectory.iterations_used,
            "residual": trajectory.final_residual,
            "seed": config[CONF_SEED],
        },
    )
    _LOGGER.info(
        "Solved %s on |tau - tau0| <= %.4g in %d iteration(s)", cfield.name, half_width, trajectory.iterations_used
    )
    return EXIT_OK


def cmd_characteristics(config: dict) -> int:
    if CONF_FIELD_FILE in config:
        return _trace_user_field(config)
    model = _catalog_model(config)
    assoc, theta0, orientation = model.field_setup()
    variables = invariant_conditioning_variables(
        assoc, theta0, sample_size=config[CONF_SAMPLE_SIZE], orientation=orientation
    )
    points = assoc.aux.sample(config[CONF_SEED], config[CONF_SAMPLE_SIZE])
    header = [f"u_{i + 1}" for i in range(assoc.n_data)] + [variable.name for variable in variables]
    rows = [[*u.tolist(), *(variable.eta(u) for variable in variables)] for u in points]
    path = Path(config[CONF_OUTPUT])
    write_csv(path, header, rows)
    certified = all(variable.certified(config[CONF_TOL]) for variable in variables)
    write_json(
        _sidecar(path),
        {
            "model": model.model_id,
            "association": assoc.name,
            "anchor": list(theta0),
            "tol": config[CONF_TOL],
            "certified": certified,
            "variables": [
                {**variable.to_dict(), "certified": variable.certified(config[CONF_TOL])}
                for variable in variables
            ],
            "seed": config[CONF_SEED],
        },
    )
    if not certified:
        _LOGGER.warning("Not every conditioning variable meets tolerance %g", config[CONF_TOL])
    return EXIT_OK


def cmd_classify(config: dict) -> int:
    model = _catalog_model(config)
    if model.coordinate_model is None:
        msg = f"Model {model.model_id!r} has no coordinate-wise form to classify"
        raise ConfigurationException(msg)
    result = classify(
        model.coordinate_model, config[CONF_U_RANGE], config[CONF_THETA_RANGE], tol=config[CONF_TOL]
    )
    _write_report(
        config, {"model": model.model_id, **result.to_dict(), "seed": config[CONF_SEED]}
    )
    _LOGGER.info("%s: %s", model.model_id, result.verdict)
    return EXIT_OK


def cmd_simulate(config: dict) -> int:
    model = _catalog_model(config)
    raw = model.simulate(np.random.default_rng(config[CONF_SEED]))
    column = "y" if model.model_id in (MODEL_BROWNIAN, MODEL_BROWNIAN_RATIO) else "x"
    path = Path(config[CONF_OUTPUT])
    if config[CONF_FORMAT] == "csv":
        write_csv(path, [column], [[value] for value in raw])
    else:
        write_json(
            path,
            {"model": model.model_id, "theta": list(model.truth), column: raw.tolist(), "seed": config[CONF_SEED]},
        )
    if CONF_Q_OUTPUT in config:
        if column != "y":
            msg = "--q-output needs a Brownian model"
            raise ConfigurationException(msg)
        write_csv(config[CONF_Q_OUTPUT], ["q"], [[value] for value in brownian_statistics(raw)])
    _LOGGER.info("Simulated %d values from %s into %s", raw.size, model.model_id, path)
    return EXIT_OK


COMMANDS = {
    COMMAND_PLAUSIBILITY: cmd_plausibility,
    COMMAND_VALIDITY: cmd_validity,
    COMMAND_CHARACTERISTICS: cmd_characteristics,
    COMMAND_CLASSIFY: cmd_classify,
    COMMAND_SIMULATE: cmd_simulate,
}


def _common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", dest=CONF_CONFIG, help="JSON run configuration; flags override it")
    parser.add_argument("--model", dest=CONF_MODEL, help="catalog model identifier")
    parser.add_argument(
        "--param", dest="param", action="append", metavar="KEY=VALUE", help="model parameter (repeatable)"
    )
    parser.add_argument("--model-file", dest=CONF_MODEL_FILE, help="expression model definition (JSON)")
    parser.add_argument("--seed", dest=CONF_SEED, type=int)
    parser.add_argument("--threads", dest=CONF_THREADS, type=int)
    parser.add_argument("--output", dest=CONF_OUTPUT)
    parser.add_argument("--format", dest=CONF_FORMAT, choices=("csv", "json"))
    parser.add_argument("--log-level", dest=CONF_LOG_LEVEL, type=str.upper, choices=LOG_LEVELS)


def _data_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--x", dest=CONF_X, type=float, nargs="+", help="observed data values")
    group.add_argument("--data", dest=CONF_DATA, help="single-column CSV of observations")
    group.add_argument("--simulate", dest=CONF_SIMULATE, action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=DOMAIN, description="Inferential model computations")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    plausibility = commands.add_parser(COMMAND_PLAUSIBILITY, help="plausibility curve and region")
    _common_arguments(plausibility)
    _data_arguments(plausibility)
    plausibility.add_argument("--grid", dest=CONF_GRID, action="append", metavar="LO:HI:COUNT")
    plausibility.add_argument("--alpha", dest=CONF_ALPHA, type=float)
    plausibility.add_argument("--n-draws", dest=CONF_N_DRAWS, type=int)
    plausibility.add_argument("--prs-scale", dest=CONF_PRS_SCALE, type=float)

    validity = commands.add_parser(COMMAND_VALIDITY, help="repeated-sampling validity diagnostic")
    _common_arguments(validity)
    validity.add_argument("--n-sim", dest=CONF_N_SIM, type=int)
    validity.add_argument("--prs-scale", dest=CONF_PRS_SCALE, type=float)

    characteristics = commands.add_parser(COMMAND_CHARACTERISTICS, help="conditioning variables from characteristics")
    _common_arguments(characteristics)
    characteristics.add_argument("--field-file", dest=CONF_FIELD_FILE, help="user characteristic field (JSON)")
    characteristics.add_argument("--sample-size", dest=CONF_SAMPLE_SIZE, type=int)
    characteristics.add_argument("--tol", dest=CONF_TOL, type=float)

    classify_parser = commands.add_parser(COMMAND_CLASSIFY, help="regularity classification")
    _common_arguments(classify_parser)
    classify_parser.add_argument("--u-range", dest=CONF_U_RANGE, metavar="LO:HI")
    classify_parser.add_argument("--theta-range", dest=CONF_THETA_RANGE, action="append", metavar="LO:HI")
    classify_parser.add_argument("--tol", dest=CONF_TOL, type=float)

    simulate = commands.add_parser(COMMAND_SIMULATE, help="synthetic data at the model truth")
    _common_arguments(simulate)
    simulate.add_argument("--q-output", dest=CONF_Q_OUTPUT, help="also write Brownian Q statistics")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = vars(args)
    command = flags.pop("command")
    setup_logging(flags.get(CONF_LOG_LEVEL) or "INFO")
    try:
        flags[CONF_MODEL_PARAMS] = parse_params(flags.pop("param"))
        config = build_config(command, flags)
        setup_logging(config[CONF_LOG_LEVEL])
        return COMMANDS[command](config)
    except ConfigurationException as ex:
        _LOGGER.error("Configuration error: %s", ex)
        return EXIT_CONFIG_ERROR
    except NumericalException as ex:
        _LOGGER.error("Numerical failure (%s): %s", type(ex).__name__, ex)
        return EXIT_NUMERICAL_ERROR
