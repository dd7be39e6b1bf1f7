"""Command line front end.

Exit codes: 0 success, 2 config error, 3 scenario validation error, 4 every
cell had an empty relevant set, 5 I/O error.  Failures print one line to
stderr of the form ``controlsim: error code=N kind=K: message``.
"""
from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import canon, patterns
from .config import RunSpec, load_config, parse_tau_grid
from .distmodel import LinearRegression, TargetProblem, validate_scenario
from .evaluate import (
    FinitePopulation,
    anova_gain,
    conditional_error,
    partial_match_decomposition,
    sensitivity_band,
    tradeoff_estimate,
)
from .exceptions import ConfigError, DomainError, ScenarioError
from .genctl import SeedSpec
from .procedures import binomial_risk, minimax_binomial_estimate, validate_procedure

OPS = ("error", "band", "anova", "tradeoff", "partial", "patterns", "power", "canon-run")
DEFAULT_COUNT = 100_000
EXIT_CONFIG, EXIT_SCENARIO, EXIT_EMPTY, EXIT_IO = 2, 3, 4, 5


class EmptyResult(Exception):
    """Every evaluated cell had an empty relevant set."""


@dataclass
class Table:
    """Plot-ready rows plus scalar summary values."""

    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    record: dict | None = None  # single-record results serialize as this object in JSON

    def to_csv(self):
        lines = [",".join(self.columns)]
        lines += [",".join(_cell(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def to_json(self):
        if self.record is not None:
            return json.dumps(_jsonable(self.record)) + "\n"
        body = dict(self.summary)
        body["rows"] = [dict(zip(self.columns, row)) for row in self.rows]
        return json.dumps(_jsonable(body), indent=1) + "\n"

    def to_text(self):
        out = [f"{k}: {_cell(v)}" for k, v in self.summary.items()]
        if self.rows:
            cells = [self.columns] + [[_cell(v) for v in row] for row in self.rows]
            widths = [max(len(r[j]) for r in cells) for j in range(len(self.columns))]
            out += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
        return "\n".join(out) + "\n"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".10g")
    return str(v)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


@dataclass
class Run:
    spec: RunSpec
    count: int
    seed: SeedSpec
    tau_grid: list | None
    threads: int


def _require(spec, *names):
    missing = [n for n in names if getattr(spec, n) is None]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}", source=spec.source)


def _target(spec):
    _require(spec, "target")
    return TargetProblem(spec.target)


def _procedure(spec):
    _require(spec, "procedure")
    problems = validate_procedure(spec.procedure)
    if problems:
        raise ScenarioError(problems)
    return spec.procedure


def op_error(run):
    spec = run.spec
    rep = conditional_error(
        spec.scenario(), _procedure(spec), spec.match_spec(), _target(spec), run.count, run.seed, spec.loss_kind(), run.threads
    )
    if rep.empty:
        raise EmptyResult("empty relevant set: no control was accepted")
    cols = ["estimate", "mc_se", "accepted", "generated", "acceptance_rate"]
    vals = [rep.estimate, rep.mc_se, rep.accepted, rep.generated, rep.acceptance_rate]
    return Table(cols, [vals], record=dict(zip(cols, vals)))


def op_band(run):
    spec = run.spec
    if run.tau_grid is None:
        raise ConfigError("band needs a tau grid (--tau-grid or tau_grid)", source=spec.source)
    m = spec.match_spec()
    family = spec.prior_family or [spec.prior]
    band = sensitivity_band(
        spec.scenario(),
        _procedure(spec),
        m.statistic,
        run.tau_grid,
        family,
        _target(spec),
        run.count,
        run.seed,
        metric=m.metric,
        loss_kind=spec.loss_kind(),
        threads=run.threads,
        grid=m.grid,
    )
    if band.all_empty():
        raise EmptyResult("empty relevant set in every (tau, prior) cell")
    cols = ["tau", "err_min", "err_max", "err_nominal", "mc_se", "accepted_min"]
    rows = [
        [t, band.err_min[j], band.err_max[j], band.err_nominal[j], band.mc_se[j], int(band.accepted_min[j])]
        for j, t in enumerate(band.tau_grid)
    ]
    return Table(cols, rows, {"priors": len(family), "generated_per_cell": band.generated})


def _population(spec):
    _require(spec, "population")
    path = spec.resolve_path(spec.population)
    rows = [line.split(",") for line in path.read_text().splitlines() if line.strip() and not line.startswith("#")]
    try:
        outcomes = [float(r[-1]) for r in rows]
    except ValueError:
        raise ConfigError(f"population file {path}: last column must be numeric", source=spec.source) from None
    return FinitePopulation([[c.strip() for c in r[:-1]] for r in rows], outcomes)


def op_anova(run):
    pop = _population(run.spec)
    levels = [run.spec.level] if run.spec.level is not None else range(pop.R + 1)
    y = pop.outcomes
    rows = []
    for r in levels:
        total = float(np.mean((y - y.mean()) ** 2))
        within = float(np.mean((y - pop.group_means(r)) ** 2))
        rows.append([r, anova_gain(pop, r), total, within])
    return Table(["level", "gain", "total", "within"], rows, {"records": len(pop)})


def op_tradeoff(run):
    spec = run.spec
    pop = _population(spec)
    _require(spec, "trial_size")
    reps = spec.replications or 200
    levels = [spec.level] if spec.level is not None else range(pop.R)
    rows = []
    for r in levels:
        res = tradeoff_estimate(pop, spec.trial_size, r, reps, run.seed)
        rows.append([r, res.gain, res.loss, res.net, res.loss_se, res.fallback_replications])
    return Table(["level", "gain", "loss", "net", "loss_se", "fallback"], rows, {"replications": reps})


def op_partial(run):
    spec = run.spec
    design = spec.design
    if design is None and isinstance(spec.structure, LinearRegression):
        design = spec.structure.X
    if design is None:
        raise ConfigError("partial needs a design (design key or LinearRegression structure)", source=spec.source)
    X = np.asarray(design, dtype=float)
    x0 = spec.x0 if spec.x0 is not None else X[0]
    _require(spec, "prior")
    rep = partial_match_decomposition(X, x0, spec.prior, run.count, run.seed, spec.outcomes)
    rows = [[b, f, r] for b, f, r in zip(rep.B, rep.F, rep.identity_residuals)]
    summary = {
        "h0": rep.h0,
        "delta1": rep.delta1,
        "B_mean": float(rep.B.mean()),
        "B_sd": float(rep.B.std(ddof=1)),
        "F_mean": float(rep.F.mean()),
        "F_sd": float(rep.F.std(ddof=1)),
        "max_identity_residual": float(np.abs(rep.identity_residuals).max()),
    }
    return Table(["B", "F", "identity_residual"], rows, summary)


def op_patterns(run):
    spec = run.spec
    if spec.image is not None:
        with open(spec.resolve_path(spec.image)) as fh:
            xy, colors = patterns.read_image_samples(fh)
        model = patterns.fit_layers(xy, colors, spec.resolution or 2)
        rows = []
        for level, reps in enumerate(model.replications()):
            if level == 0:
                var = 0.0
            elif level < model.R:
                var = float(model.increments[level].var(axis=0).mean())
            else:
                var = float(model.residuals.var(axis=0).mean())
            rows.append([level, reps, var])
        return Table(["layer", "replications", "variance"], rows, {"resolution": model.R})
    _require(spec, "sequence")
    seq = patterns.SymbolSequence.from_text(spec.sequence)
    model = patterns.fit_block_model(seq, spec.block_length or 1)
    rows = [["".join(map(str, b)), str(model.block_frequencies[b]), float(model.block_frequencies[b])] for b in model.blocks]
    sim = patterns.simulate_sequence(model, spec.min_length or len(seq), run.seed)
    return Table(["block", "fraction", "probability"], rows, {"simulated": sim.text()})


def op_power(run):
    spec = run.spec
    _require(spec, "critical", "n", "theta_grid")
    curve = canon.power_curve(spec.critical, spec.n, spec.theta_grid)
    rows = [[t, p, 1 - p] for t, p in curve]
    summary = {"critical": spec.critical, "n": spec.n}
    if spec.magnitude_floor is not None:
        summary["worst_case_type2"] = canon.worst_case_type2(spec.critical, spec.n, spec.magnitude_floor)
    return Table(["theta", "power", "type2"], rows, summary)


def _winners(run):
    rep = canon.winners_curse_report(run.spec.scenario(), None, run.count, run.seed)
    rows = [
        [m, rep.selection_rate[m], int(rep.selected[m]), rep.bias[m], rep.bias_se[m], rep.magnitude_bias[m], rep.magnitude_se[m]]
        for m in range(len(rep.selected))
    ]
    cols = ["marker", "selection_rate", "selected", "bias", "bias_se", "magnitude_bias", "magnitude_se"]
    return Table(cols, rows, {"never_selected": " ".join(map(str, rep.never_selected))})


def _minimax(run):
    spec = run.spec
    n = spec.n
    thetas = spec.theta_grid or list(np.linspace(0, 1, 11))
    mm = binomial_risk(minimax_binomial_estimate(np.arange(n + 1), n), n, thetas)
    sm = binomial_risk(np.arange(n + 1) / n, n, thetas)
    rows = [[t, a, b] for t, a, b in zip(thetas, sm, mm)]
    return Table(["theta", "sample_mean_risk", "minimax_risk"], rows, {"n": n})


def _empirical_bayes(run):
    spec = run.spec
    _require(spec, "sensitivity", "specificity")
    summary = {}
    if spec.results is not None:
        summary["prevalence_estimate"] = canon.eb_prevalence(spec.results, spec.sensitivity, spec.specificity)
    truth = getattr(spec.prior, "weight1", None)
    if truth is None:
        raise ConfigError("empirical Bayes consistency needs a TwoPoint prior giving the prevalence", source=spec.source)
    sizes, rmse, slope = canon.eb_consistency(truth, spec.sensitivity, spec.specificity, panels=run.count, seed=run.seed)
    summary["slope"] = slope
    return Table(["n", "rmse"], [[n, e] for n, e in zip(sizes, rmse)], summary)


def _loo(run):
    spec = run.spec
    design = spec.design if spec.design is not None else getattr(spec.structure, "X", None)
    _require(spec, "outcomes")
    if design is None:
        raise ConfigError("LOO-CV needs a design", source=spec.source)
    errors, mse = canon.loo_cv_error(design, spec.outcomes)
    return Table(["record", "error"], [[i, e] for i, e in enumerate(errors)], {"mean_squared": mse})


_SPECIAL = {"WinnersCurse": _winners, "MinimaxCoin": _minimax, "EmpiricalBayes": _empirical_bayes, "LooCv": _loo}

_OPS = {
    "error": op_error,
    "band": op_band,
    "anova": op_anova,
    "tradeoff": op_tradeoff,
    "partial": op_partial,
    "patterns": op_patterns,
    "power": op_power,
}


def op_canon_run(run):
    spec = run.spec
    if spec.id is None:
        raise ConfigError("canon-run needs a bundle id", source=spec.source)
    try:
        cid = canon.resolve_id(spec.id)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), source=spec.source) from None
    if cid in _SPECIAL:
        return _SPECIAL[cid](run)
    op = spec.op if spec.op in _OPS else "error"
    return _OPS[op](run)


_OPS["canon-run"] = op_canon_run


def execute(spec, op=None, count=None, seed=None, tau_grid=None, threads=1):
    """Run one operation on a parsed RunSpec and return its Table."""
    op = op or spec.op or "error"
    if op not in OPS:
        raise ConfigError(f"unknown operation {op!r}; expected one of {', '.join(OPS)}", source=spec.source)
    if spec.structure is not None:
        problems = validate_scenario(spec.scenario())
        if problems:
            raise ScenarioError(problems)
    count = count if count is not None else (spec.count or DEFAULT_COUNT)
    if count < 1:
        raise ConfigError("count must be at least 1")
    if seed is None:
        seed = spec.seed if spec.seed is not None else int(os.environ.get("CONTROLSIM_SEED", "0"))
    grid = tau_grid if tau_grid is not None else spec.tau_grid
    return _OPS[op](Run(spec, int(count), SeedSpec(int(seed)), grid, max(1, int(threads))))


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def _load_source(args):
    if getattr(args, "canon", None):
        try:
            return canon.load(args.canon).bundle
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
    if getattr(args, "scenario", None):
        return load_config(args.scenario)
    raise ConfigError("need --scenario FILE or --canon ID")


def atomic_write(path, text):
    """Write via a temp file in the target directory and rename over the destination."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _render(table, fmt):
    return {"csv": table.to_csv, "json": table.to_json, "text": table.to_text}[fmt]()


def _emit(text, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _short(obj):
    """Positional constructor form, e.g. BernoulliChannel(0.9, 0.9); trailing None fields dropped."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        vals = [getattr(obj, f.name) for f in dataclasses.fields(obj)]
        while vals and vals[-1] is None:
            vals.pop()
        return f"{type(obj).__name__}({', '.join(_short(v) for v in vals)})"
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        inner = ", ".join(_short(v) for v in obj)
        return f"[{inner}]" if isinstance(obj, list) else f"({inner}{',' if len(obj) == 1 else ''})"
    if isinstance(obj, float):
        return format(obj, "g") if math.isfinite(obj) else str(obj)
    return repr(obj)


def describe(spec):
    """Resolved scenario, match, procedure and validation results, without simulating."""
    lines = [f"source: {spec.source}"]
    if spec.id:
        lines.append(f"id: {spec.id}")
    if spec.description:
        lines.append(f"description: {spec.description}")
    problems = []
    if spec.structure is not None or spec.prior is not None:
        s = spec.scenario()
        lines.append(f"scenario: {_short(s)}")
        problems = validate_scenario(s)
    if spec.match is not None or spec.statistic is not None:
        lines.append(f"match: {_short(spec.match_spec())}")
    if spec.procedure is not None:
        lines.append(f"procedure: {_short(spec.procedure)}")
        problems += validate_procedure(spec.procedure)
    if spec.target is not None:
        lines.append(f"target: {_short(spec.target)}")
    if spec.prior_family:
        lines.append(f"prior_family: {len(spec.prior_family)} priors, nominal {_short(spec.prior_family[0])}")
    if spec.tau_grid is not None:
        lines.append(f"tau_grid: {_short(spec.tau_grid)}")
    if spec.op:
        lines.append(f"default op: {spec.op}")
    lines.append("validation: ok" if not problems else "validation: " + "; ".join(problems))
    return "\n".join(lines) + "\n", problems


def _add_source(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="path to a scenario config file")
    src.add_argument("--canon", help="id of a catalog bundle (see `canon list`)")


def _add_run_flags(p):
    p.add_argument("--op", choices=OPS, help="operation (default: the config's op)")
    p.add_argument("--count", type=int, help="number of simulated controls")
    p.add_argument("--seed", type=int, help="root seed (default: config seed, then $CONTROLSIM_SEED, then 0)")
    p.add_argument("--tau-grid", help="lo:hi:step (inclusive) or a comma list; inf allowed")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json", "text"), help="output format (default csv; json for error)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for the Monte Carlo map")


def build_parser():
    parser = argparse.ArgumentParser(prog="controlsim", description="Evaluate procedures over relevant control problems.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an operation")
    _add_source(run)
    _add_run_flags(run)
    desc = sub.add_parser("describe", help="print the resolved scenario without simulating")
    _add_source(desc)
    desc.add_argument("source", nargs="?", help="config path or canon id")
    can = sub.add_parser("canon", help="catalog of worked examples")
    csub = can.add_subparsers(dest="canon_command", required=True)
    csub.add_parser("list", help="list bundle ids")
    crun = csub.add_parser("run", help="run a bundle with its defaults")
    crun.add_argument("id")
    _add_run_flags(crun)
    return parser


def _fail(code, kind, message):
    message = " ".join(str(message).split())
    sys.stderr.write(f"controlsim: error code={code} kind={kind}: {message}\n")
    return code


def _run_command(args):
    if args.command == "canon" and args.canon_command == "list":
        for c in canon.catalog():
            sys.stdout.write(f"{canon.slug(c.id)}\t{c.id}\t{c.description}\n")
        return 0
    if args.command == "describe":
        if args.source and not (args.scenario or args.canon):
            try:
                canon.resolve_id(args.source)
                args.canon = args.source
            except KeyError:
                args.scenario = args.source
        text, problems = describe(_load_source(args))
        sys.stdout.write(text)
        return EXIT_SCENARIO if problems else 0
    if args.command == "canon":
        args.canon, args.scenario = args.id, None
    spec = _load_source(args)
    grid = parse_tau_grid(args.tau_grid) if args.tau_grid else None
    op = args.op
    if op is None and args.command == "canon":
        op = "canon-run"
    table = execute(spec, op, args.count, args.seed, grid, args.threads)
    fmt = args.format or ("json" if (op or spec.op) == "error" else "csv")
    _emit(_render(table, fmt), args.out)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run_command(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except ScenarioError as exc:
        return _fail(EXIT_SCENARIO, "scenario", exc)
    except EmptyResult as exc:
        return _fail(EXIT_EMPTY, "empty", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", f"{exc.strerror or exc}: {exc.filename or ''}")
    except DomainError as exc:
        return _fail(EXIT_SCENARIO, "domain", exc)


if __name__ == "__main__":
    sys.exit(main())
