"""Run configuration for the imkit command line."""

import json
import logging
from pathlib import Path

import voluptuous as vol
from voluptuous.humanize import humanize_error

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
    CONF_THREADS,
    CONF_THETA_RANGE,
    CONF_TOL,
    CONF_U_RANGE,
    CONF_X,
    DEFAULT_ALPHA,
    DEFAULT_CERTIFICATE_TOL,
    DEFAULT_CONDITIONING_SAMPLE,
    DEFAULT_N_SIM,
    DEFAULT_SEED,
    MIN_DRAWS,
    MODEL_GAUSSIAN_MEAN,
    REGULARITY_TOL,
)
from .inference.exceptions.im_exception import ConfigurationException
from .inference.models.model_factory import CATALOG

_LOGGER = logging.getLogger(__name__)

COMMAND_PLAUSIBILITY = "plausibility"
COMMAND_VALIDITY = "validity"
COMMAND_CHARACTERISTICS = "characteristics"
COMMAND_CLASSIFY = "classify"
COMMAND_SIMULATE = "simulate"

OUTPUT_FORMATS = ("csv", "json")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

DEFAULT_FORMATS = {
    COMMAND_PLAUSIBILITY: "csv",
    COMMAND_VALIDITY: "json",
    COMMAND_CHARACTERISTICS: "csv",
    COMMAND_CLASSIFY: "json",
    COMMAND_SIMULATE: "csv",
}


def parse_grid(value: str) -> tuple[float, float, int]:
    """Parse lo:hi:count into an increasing grid axis."""
    parts = str(value).split(":")
    if len(parts) != 3:
        msg = f"grid {value!r} must look like lo:hi:count"
        raise vol.Invalid(msg)
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as ex:
        msg = f"grid {value!r} must look like lo:hi:count"
        raise vol.Invalid(msg) from ex
    if not lo < hi or count < 2:
        msg = f"grid {value!r} needs lo < hi and at least 2 points"
        raise vol.Invalid(msg)
    return lo, hi, count


def parse_range(value) -> tuple[float, float]:
    """Parse lo:hi (or a two-element list) into an increasing range."""
    parts = str(value).split(":") if isinstance(value, str) else list(value)
    try:
        lo, hi = (float(v) for v in parts)
    except (TypeError, ValueError) as ex:
        msg = f"range {value!r} must look like lo:hi"
        raise vol.Invalid(msg) from ex
    if not lo < hi:
        msg = f"range {value!r} needs lo < hi"
        raise vol.Invalid(msg)
    return lo, hi


POSITIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))

COMMON_SCHEMA = {
    vol.Optional(CONF_MODEL, default=MODEL_GAUSSIAN_MEAN): vol.In(CATALOG),
    vol.Optional(CONF_MODEL_PARAMS, default=dict): dict,
    vol.Optional(CONF_SEED, default=DEFAULT_SEED): vol.All(vol.Coerce(int), vol.Range(min=0)),
    vol.Optional(CONF_THREADS): vol.All(vol.Coerce(int), vol.Range(min=1)),
    vol.Optional(CONF_OUTPUT): str,
    vol.Optional(CONF_FORMAT): vol.In(OUTPUT_FORMATS),
    vol.Optional(CONF_LOG_LEVEL, default="INFO"): vol.All(vol.Upper, vol.In(LOG_LEVELS)),
}

DATA_SCHEMA = {
    vol.Exclusive(CONF_X, "data"): vol.All([vol.Coerce(float)], vol.Length(min=1)),
    vol.Exclusive(CONF_DATA, "data"): str,
    vol.Optional(CONF_SIMULATE, default=False): bool,
}

PRS_SCHEMA = {
    vol.Optional(CONF_PRS_SCALE, default=1.0): POSITIVE_FLOAT,
}

PLAUSIBILITY_SCHEMA = vol.Schema(
    {
        **COMMON_SCHEMA,
        **DATA_SCHEMA,
        **PRS_SCHEMA,
        vol.Required(CONF_GRID): vol.All([parse_grid], vol.Length(min=1)),
        vol.Optional(CONF_ALPHA, default=DEFAULT_ALPHA): vol.All(
            vol.Coerce(float), vol.Range(min=0, max=1, min_included=False, max_included=False)
        ),
        vol.Optional(CONF_N_DRAWS): vol.All(vol.Coerce(int), vol.Range(min=MIN_DRAWS)),
    }
)

VALIDITY_SCHEMA = vol.Schema(
    {
        **COMMON_SCHEMA,
        **PRS_SCHEMA,
        vol.Optional(CONF_N_SIM, default=DEFAULT_N_SIM): vol.All(vol.Coerce(int), vol.Range(min=1)),
    }
)

CHARACTERISTICS_SCHEMA = vol.Schema(
    {
        **COMMON_SCHEMA,
        vol.Optional(CONF_FIELD_FILE): str,
        vol.Optional(CONF_SAMPLE_SIZE, default=DEFAULT_CONDITIONING_SAMPLE): vol.All(
            vol.Coerce(int), vol.Range(min=1)
        ),
        vol.Optional(CONF_TOL, default=DEFAULT_CERTIFICATE_TOL): POSITIVE_FLOAT,
    }
)

CLASSIFY_SCHEMA = vol.Schema(
    {
        **COMMON_SCHEMA,
        vol.Required(CONF_U_RANGE): parse_range,
        vol.Required(CONF_THETA_RANGE): vol.All([parse_range], vol.Length(min=1)),
        vol.Optional(CONF_TOL, default=REGULARITY_TOL): POSITIVE_FLOAT,
    }
)

SIMULATE_SCHEMA = vol.Schema(
    {
        **COMMON_SCHEMA,
        vol.Optional(CONF_Q_OUTPUT): str,
    }
)

SCHEMAS = {
    COMMAND_PLAUSIBILITY: PLAUSIBILITY_SCHEMA,
    COMMAND_VALIDITY: VALIDITY_SCHEMA,
    COMMAND_CHARACTERISTICS: CHARACTERISTICS_SCHEMA,
    COMMAND_CLASSIFY: CLASSIFY_SCHEMA,
    COMMAND_SIMULATE: SIMULATE_SCHEMA,
}


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as ex:
        msg = f"Cannot read config file {path}: {ex}"
        raise ConfigurationException(msg) from ex
    if not isinstance(data, dict):
        msg = f"Config file {path} must hold a JSON object"
        raise ConfigurationException(msg)
    return data


def parse_params(pairs) -> dict:
    """KEY=VALUE flags; values are read as JSON when possible, else kept as strings."""
    params = {}
    for pair in pairs or ():
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            msg = f"--param expects KEY=VALUE, got {pair!r}"
            raise ConfigurationException(msg)
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def build_config(command: str, flags: dict) -> dict:
    """
    Merge the optional JSON config file with flags (flags win) and validate.

    Model parameters merge key by key; a model file flag becomes the
    model_file parameter.
    """
    if command not in SCHEMAS:
        msg = f"Unknown command {command!r}"
        raise ConfigurationException(msg)
    flags = {key: value for key, value in flags.items() if value is not None}
    merged = load_config_file(flags.pop(CONF_CONFIG)) if CONF_CONFIG in flags else {}
    params = dict(merged.get(CONF_MODEL_PARAMS, {}))
    params.update(flags.pop(CONF_MODEL_PARAMS, {}))
    if CONF_MODEL_FILE in flags:
        params["model_file"] = flags.pop(CONF_MODEL_FILE)
    if CONF_MODEL_FILE in merged:
        params.setdefault("model_file", merged.pop(CONF_MODEL_FILE))
    merged.update(flags)
    merged[CONF_MODEL_PARAMS] = params
    try:
        config = SCHEMAS[command](merged)
    except vol.Invalid as ex:
        msg = f"Invalid {command} configuration: {humanize_error(merged, ex)}"
        raise ConfigurationException(msg) from ex
    if command == COMMAND_PLAUSIBILITY and not (
        CONF_X in config or CONF_DATA in config or config[CONF_SIMULATE]
    ):
        msg = "plausibility needs data: pass --x, --data or --simulate"
        raise ConfigurationException(msg)
    config.setdefault(CONF_FORMAT, DEFAULT_FORMATS[command])
    config.setdefault(CONF_OUTPUT, f"{command}.{config[CONF_FORMAT]}")
    _LOGGER.debug("Resolved %s configuration: %s", command, config)
    return config
