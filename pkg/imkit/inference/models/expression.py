"""User-defined coordinate-wise models from a small arithmetic grammar."""

import json
import logging
import re
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import sympy
import voluptuous as vol
from scipy import stats
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from ...const import MODEL_EXPRESSION
from ..association import Association, AuxiliaryDistribution, ParameterSpace
from ..characteristics import CharacteristicField
from ..exceptions.im_exception import ConfigurationException
from ..regularity import CoordinateModel

_LOGGER = logging.getLogger(__name__)

AUX_SYMBOL = "u"
FUNCTIONS = ("exp", "log")
AUX_LAWS = ("normal", "uniform", "chi2", "exponential")

_ALLOWED_CHARACTERS = re.compile(r"^[A-Za-z0-9_+\-*/^(). ]+$")
_IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"(?<![A-Za-z0-9_.])(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
_ALLOWED_NODES = (sympy.Symbol, sympy.Number, sympy.NumberSymbol, sympy.Add, sympy.Mul, sympy.Pow, sympy.exp, sympy.log)
_GLOBALS = {
    "Integer": sympy.Integer,
    "Float": sympy.Float,
    "Rational": sympy.Rational,
    "Symbol": sympy.Symbol,
    "exp": sympy.exp,
    "log": sympy.log,
}

PARAMETER_SCHEMA = vol.Any(
    vol.Match(_NAME),
    vol.Schema(
        {
            vol.Required("name"): vol.Match(_NAME),
            vol.Optional("lower", default=None): vol.Any(None, vol.Coerce(float)),
            vol.Optional("upper", default=None): vol.Any(None, vol.Coerce(float)),
        }
    ),
)

MODEL_SCHEMA = vol.Schema(
    {
        vol.Optional("name", default=MODEL_EXPRESSION): str,
        vol.Required("n"): vol.All(int, vol.Range(min=1)),
        vol.Required("parameters"): vol.All([PARAMETER_SCHEMA], vol.Length(min=1)),
        vol.Exclusive("map", "form"): str,
        vol.Exclusive("coordinates", "form"): vol.All([str], vol.Length(min=1)),
        vol.Optional("aux", default="normal"): vol.In(AUX_LAWS),
        vol.Optional("aux_df", default=1.0): vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False)),
    }
)

FIELD_SCHEMA = vol.Schema(
    {
        vol.Optional("name", default="user field"): str,
        vol.Required("field"): vol.All([vol.All([str], vol.Length(min=1))], vol.Length(min=1)),
        vol.Required("u0"): vol.All([vol.Coerce(float)], vol.Length(min=1)),
        vol.Optional("tau0"): [vol.Coerce(float)],
    }
)


def parse_expression(text: str, names) -> sympy.Expr:
    """Parse text over the given symbol names, rejecting anything outside the grammar."""
    if not _ALLOWED_CHARACTERS.match(text):
        msg = f"Expression {text!r} contains characters outside + - * / ^ ( ) . and names"
        raise ConfigurationException(msg)
    allowed = set(names) | set(FUNCTIONS)
    unknown = sorted(set(_IDENTIFIER.findall(_NUMBER.sub(" ", text))) - allowed)
    if unknown:
        msg = f"Expression {text!r} uses unknown names {unknown}; allowed: {sorted(allowed)}"
        raise ConfigurationException(msg)
    local = {name: sympy.Symbol(name, real=True) for name in names}
    try:
        expr = parse_expr(
            text.replace("^", "**"),
            local_dict=local,
            global_dict=dict(_GLOBALS),
            transformations=standard_transformations,
            evaluate=True,
        )
    except (SyntaxError, TypeError, ValueError, sympy.SympifyError) as ex:
        msg = f"Cannot parse expression {text!r}: {ex}"
        raise ConfigurationException(msg) from ex
    for node in sympy.preorder_traversal(expr):
        if not isinstance(node, _ALLOWED_NODES):
            msg = f"Expression {text!r} contains the disallowed construct {type(node).__name__}"
            raise ConfigurationException(msg)
    return expr


def _aux_law(name: str, df: float):
    if name == "normal":
        return stats.norm()
    if name == "uniform":
        return stats.uniform()
    if name == "chi2":
        return stats.chi2(df)
    return stats.expon()


def _lambdify(symbols, expr) -> Callable:
    return sympy.lambdify(symbols, expr, modules="numpy")


@dataclass(frozen=True)
class ExpressionModel:
    """x_i = g_i(theta, u_i) with each g_i an expression in u and the parameters."""

    name: str
    n: int
    parameters: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    expressions: tuple[sympy.Expr, ...]
    aux_law: str = "normal"
    aux_df: float = 1.0
    common_form: bool = False
    _functions: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        symbols = [sympy.Symbol(AUX_SYMBOL, real=True)] + [sympy.Symbol(p, real=True) for p in self.parameters]
        compiled = []
        for expr in self.expressions:
            u = symbols[0]
            if u not in expr.free_symbols:
                msg = f"Coordinate map {expr} of {self.name} does not depend on {AUX_SYMBOL}"
                raise ConfigurationException(msg)
            compiled.append(
                (
                    _lambdify(symbols, expr),
                    _lambdify(symbols, sympy.diff(expr, u)),
                    [_lambdify(symbols, sympy.diff(expr, t)) for t in symbols[1:]],
                )
            )
        object.__setattr__(self, "_functions", tuple(compiled))

    @classmethod
    def from_dict(cls, data: dict) -> "ExpressionModel":
        try:
            config = MODEL_SCHEMA(data)
        except vol.Invalid as ex:
            msg = f"Invalid model definition: {ex}"
            raise ConfigurationException(msg) from ex
        names, lower, upper = [], [], []
        for entry in config["parameters"]:
            entry = {"name": entry, "lower": None, "upper": None} if isinstance(entry, str) else entry
            names.append(entry["name"])
            lower.append(-np.inf if entry["lower"] is None else entry["lower"])
            upper.append(np.inf if entry["upper"] is None else entry["upper"])
        if AUX_SYMBOL in names or set(names) & set(FUNCTIONS) or len(set(names)) != len(names):
            msg = f"Parameter names {names} must be distinct and differ from {AUX_SYMBOL}, exp and log"
            raise ConfigurationException(msg)
        symbols = [AUX_SYMBOL, *names]
        if "map" in config:
            expressions = (parse_expression(config["map"], symbols),) * config["n"]
            common = True
        elif "coordinates" in config:
            if len(config["coordinates"]) != config["n"]:
                msg = f"Expected {config['n']} coordinate expressions, got {len(config['coordinates'])}"
                raise ConfigurationException(msg)
            expressions = tuple(parse_expression(text, symbols) for text in config["coordinates"])
            common = len(set(expressions)) == 1
        else:
            msg = "A model definition needs either 'map' or 'coordinates'"
            raise ConfigurationException(msg)
        _LOGGER.debug("Parsed expression model %s: %s", config["name"], expressions)
        return cls(
            name=config["name"],
            n=config["n"],
            parameters=tuple(names),
            lower=tuple(lower),
            upper=tuple(upper),
            expressions=expressions,
            aux_law=config["aux"],
            aux_df=config["aux_df"],
            common_form=common,
        )

    @property
    def p(self) -> int:
        return len(self.parameters)

    def params(self) -> ParameterSpace:
        return ParameterSpace(self.lower, self.upper, self.parameters)

    def value(self, i: int, theta, u):
        return self._functions[i][0](u, *theta)

    def d_u(self, i: int, theta, u):
        return self._functions[i][1](u, *theta)

    def d_theta(self, i: int, theta, u) -> list:
        return [f(u, *theta) for f in self._functions[i][2]]

    def association(self) -> Association:
        """Association with a bracketing inverse and implicit-differentiation partials."""
        law = _aux_law(self.aux_law, self.aux_df)
        n = self.n

        def forward(u, theta):
            with np.errstate(all="ignore"):
                return np.array([self.value(i, theta, u[i]) for i in range(n)], dtype=float)

        base = Association(
            name=self.name,
            n_data=n,
            params=self.params(),
            aux=AuxiliaryDistribution.iid(law, n),
            forward_map=forward,
            metadata={"expressions": [str(e) for e in self.expressions]},
        )

        def partials(x, theta):
            u = base.inverse(x, theta)
            rows = []
            for i in range(n):
                slope = float(self.d_u(i, theta, u[i]))
                rows.append([-float(d) / slope for d in self.d_theta(i, theta, u[i])])
            return np.array(rows, dtype=float)

        return replace(base, partials=partials)

    def coordinate_model(self) -> CoordinateModel:
        return CoordinateModel(
            n=self.n,
            p=self.p,
            g=self.value,
            g_theta=self.d_theta,
            g_u=self.d_u,
            common_form=self.common_form,
            name=self.name,
        )


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as ex:
        msg = f"Cannot read {path}: {ex}"
        raise ConfigurationException(msg) from ex


def load_model_file(path) -> ExpressionModel:
    return ExpressionModel.from_dict(_read_json(path))


@dataclass(frozen=True)
class FieldDefinition:
    cfield: CharacteristicField
    u0: np.ndarray
    tau0: np.ndarray


def field_from_dict(data: dict) -> FieldDefinition:
    """
    Characteristic field g(tau, u) given as an n x p table of expressions.

    Entries may use u1..un and tau1..taup.
    """
    try:
        config = FIELD_SCHEMA(data)
    except vol.Invalid as ex:
        msg = f"Invalid field definition: {ex}"
        raise ConfigurationException(msg) from ex
    rows = config["field"]
    n, p = len(rows), len(rows[0])
    if any(len(row) != p for row in rows) or len(config["u0"]) != n:
        msg = f"Field table must be {n} x {p} with u0 of length {n}"
        raise ConfigurationException(msg)
    tau0 = np.asarray(config.get("tau0", [0.0] * p), dtype=float)
    if tau0.size != p:
        msg = f"tau0 must have {p} entries, got {tau0.size}"
        raise ConfigurationException(msg)
    u_names = [f"u{i + 1}" for i in range(n)]
    tau_names = [f"tau{k + 1}" for k in range(p)]
    symbols = [sympy.Symbol(name, real=True) for name in tau_names + u_names]
    entries = [[_lambdify(symbols, parse_expression(text, tau_names + u_names)) for text in row] for row in rows]

    def function(tau, u):
        args = [*np.atleast_1d(tau), *np.atleast_1d(u)]
        return np.array([[float(entry(*args)) for entry in row] for row in entries])

    return FieldDefinition(
        cfield=CharacteristicField(n=n, p=p, function=function, name=config["name"]),
        u0=np.asarray(config["u0"], dtype=float),
        tau0=tau0,
    )


def load_field_file(path) -> FieldDefinition:
    return field_from_dict(_read_json(path))
