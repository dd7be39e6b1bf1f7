"""Scenario config files: one ``key = value`` per line, ``#`` starts a comment.

Values are literal expressions: numbers, strings, lists/tuples, ``inf``,
and calls to the model constructors (``TwoPoint(0, 1, 0.5)``,
``BetaPValue(0.02, 1.35)``, ``PThresholdTest(0.05)`` ...).  They are
evaluated by walking the syntax tree against a fixed vocabulary, never by
``eval``.  Errors carry the offending line number.
"""
from __future__ import annotations

import ast
import dataclasses
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import distmodel, procedures, relevance
from .exceptions import ConfigError
from .relevance import MatchSpec, Metric
from .procedures import LossKind

_CONSTRUCTORS = {
    name: getattr(mod, name)
    for mod, names in (
        (
            distmodel,
            "PointMass TwoPoint GaussianPrior UniformGrid FiniteMixture StdNormal UnitMeanExponential "
            "UnitMeanLogNormal BetaPValue BernoulliChannel TwoLabMixture Categorical Additive Multiplicative "
            "LinearRegression PValueChannel DiagnosticTest MarkerPanel Measurements PValue TestResults "
            "RegressionOutcomes MarkerEstimates",
        ),
        (
            procedures,
            "SampleMeanEst MinimaxBinomialEst PlugInMarkerEst AdditiveLower MultiplicativePivotLower ZInterval "
            "PThresholdTest ZTest DiagnosticPredict",
        ),
        (
            relevance,
            "SampleSize SampleMean LabAssignment AbsLogLR RawValue SelectedSet TestResult CovariateBalance MatchSpec",
        ),
    )
    for name in names.split()
}

# snake_case spellings of the model and procedure constructors (two_point, beta_p_value, ...)
_SNAKE = {
    re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", name).lower(): fn
    for name, fn in _CONSTRUCTORS.items()
    if getattr(fn, "__module__", "").endswith(("distmodel", "procedures"))
}

_LOOSE_ABSLOGLR = object()


def _match_alias(statistic):
    def build(tau=None, metric=None, grid=None):
        return MatchSpec(statistic, tau, _metric(metric) if isinstance(metric, str) else metric, grid)

    return build


def _abs_log_lr(a=None, b=None, tau=None, grid=None):
    # a, b default to the scenario's alternative p-value law; resolved after parsing
    stat = relevance.AbsLogLR(a, b) if a is not None else _LOOSE_ABSLOGLR
    return ("abs_log_lr", stat, tau, grid)


_ALIASES = {
    "abs_log_lr": _abs_log_lr,
    "sample_size": _match_alias(relevance.SampleSize()),
    "sample_mean": _match_alias(relevance.SampleMean()),
    "lab_assignment": _match_alias(relevance.LabAssignment()),
    "raw_value": _match_alias(relevance.RawValue()),
    "selected_set": _match_alias(relevance.SelectedSet()),
    "test_result": _match_alias(relevance.TestResult()),
    "covariate_balance": _match_alias(relevance.CovariateBalance()),
}

_NAMES = {"inf": math.inf, "nan": math.nan, "true": True, "false": False, "none": None}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}


def _metric(text):
    try:
        return Metric(text)
    except ValueError:
        raise ConfigError(f"unknown metric {text!r}; expected one of {[m.value for m in Metric]}") from None


def _eval(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str, bool)) or (
        isinstance(node, ast.Constant) and node.value is None
    ):
        return node.value
    if isinstance(node, ast.Name):
        key = node.id.lower()
        if key in _NAMES:
            return _NAMES[key]
        if node.id in _CONSTRUCTORS:
            return _CONSTRUCTORS[node.id]()
        raise ConfigError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else +v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, (ast.List, ast.Tuple)):
        items = [_eval(e) for e in node.elts]
        return items if isinstance(node, ast.List) else tuple(items)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        fn = _CONSTRUCTORS.get(node.func.id) or _ALIASES.get(node.func.id) or _SNAKE.get(node.func.id)
        if fn is None:
            raise ConfigError(f"unknown constructor {node.func.id!r}")
        args = [_eval(a) for a in node.args]
        kwargs = {k.arg: _eval(k.value) for k in node.keywords if k.arg is not None}
        try:
            return fn(*args, **kwargs)
        except ConfigError:
            raise
        except Exception as exc:  # constructor rejected its arguments
            raise ConfigError(f"{node.func.id}: {exc}") from None
    raise ConfigError(f"unsupported expression {ast.dump(node)[:40]}")


def parse_value(text):
    """Evaluate one config value expression."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        raise ConfigError(f"cannot parse value {text.strip()!r}") from None
    return _eval(tree.body)


def parse_tau_grid(text):
    """``lo:hi:step`` (inclusive of hi within 1e-9) or a comma-separated list (``inf`` allowed)."""
    text = text.strip().strip("[]")
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if not step > 0 or hi < lo:
                raise ConfigError("tau grid needs lo <= hi and a positive step")
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 12) for i in range(n)]
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse tau grid {text!r}") from None
    if not grid or any(not t >= 0 for t in grid):
        raise ConfigError("tau grid values must be nonnegative")
    return grid


_STRING_KEYS = {"id", "description", "op", "metric", "loss", "population", "sequence", "image", "tau_grid"}


@dataclass
class RunSpec:
    """Everything a config file can declare; unset fields stay None."""

    id: str | None = None
    description: str | None = None
    op: str | None = None
    prior: object = None
    noise: object = None
    structure: object = None
    n: int | None = None
    procedure: object = None
    match: object = None
    statistic: object = None
    tolerance: float | None = None
    metric: str | None = None
    grid: float | None = None
    target: object = None
    loss: str | None = None
    prior_family: list | None = None
    tau_grid: list | None = None
    count: int | None = None
    seed: int | None = None
    threads: int | None = None
    # power analysis
    critical: float | None = None
    theta_grid: list | None = None
    magnitude_floor: float | None = None
    # regression
    design: list | None = None
    x0: list | None = None
    outcomes: list | None = None
    # finite populations
    population: str | None = None
    level: int | None = None
    trial_size: int | None = None
    replications: int | None = None
    # patterns
    sequence: str | None = None
    block_length: int | None = None
    min_length: int | None = None
    image: str | None = None
    resolution: int | None = None
    n_pixels: int | None = None
    # diagnostic panels
    sensitivity: float | None = None
    specificity: float | None = None
    results: list | None = None
    source: str | None = field(default=None, compare=False)

    def scenario(self):
        missing = [k for k in ("prior", "noise", "structure", "n") if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"scenario incomplete: missing {', '.join(missing)}", source=self.source)
        return distmodel.Scenario(self.prior, self.noise, self.structure, int(self.n))

    def match_spec(self):
        if self.match is not None:
            return self.match
        if self.statistic is None:
            raise ConfigError("no match or statistic declared", source=self.source)
        metric = _metric(self.metric) if self.metric else None
        return MatchSpec(self.statistic, self.tolerance, metric, self.grid)

    def loss_kind(self):
        if self.loss is None:
            return None
        try:
            return LossKind(self.loss)
        except ValueError:
            raise ConfigError(f"unknown loss {self.loss!r}; expected one of {[k.value for k in LossKind]}") from None

    def resolve_path(self, value):
        path = Path(value)
        if not path.is_absolute() and self.source:
            path = Path(self.source).parent / path
        return path


_FIELDS = {f.name for f in dataclasses.fields(RunSpec)} - {"source"}


def _resolve_match(spec):
    m = spec.match
    if isinstance(m, tuple) and m and m[0] == "abs_log_lr":
        _, stat, tau, grid = m
        if stat is _LOOSE_ABSLOGLR:
            if not isinstance(spec.noise, distmodel.BetaPValue):
                raise ConfigError("abs_log_lr() without a, b needs a BetaPValue noise law")
            stat = relevance.AbsLogLR(spec.noise.a, spec.noise.b)
        spec.match = MatchSpec(stat, tau, None, grid)
    elif m is not None and not isinstance(m, MatchSpec):
        raise ConfigError("match must be a MatchSpec or one of the lowercase match helpers")


def parse_config(text, source=None):
    """Parse config text into a RunSpec; raises ConfigError with the line number."""
    spec = RunSpec(source=source)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno, source=source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", line=lineno, source=source)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=lineno, source=source)
        seen.add(key)
        if not value:
            raise ConfigError(f"empty value for {key!r}", line=lineno, source=source)
        try:
            if key == "tau_grid":
                parsed = parse_tau_grid(value)
            elif key in _STRING_KEYS:
                parsed = value[1:-1] if value[:1] in "'\"" and value[-1:] == value[:1] else value
            else:
                parsed = parse_value(value)
        except ConfigError as exc:
            raise ConfigError(exc.message, line=lineno, source=source) from None
        setattr(spec, key, parsed)
    try:
        _resolve_match(spec)
    except ConfigError as exc:
        raise ConfigError(exc.message, source=source) from None
    return spec


def load_config(path):
    """Parse a config file; an unreadable file raises OSError (an I/O failure, not a parse error)."""
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))
