"""Worked-example catalog plus power analysis, empirical Bayes, LOO-CV and winner's curse."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy import special

from .config import parse_config
from .distmodel import MarkerPanel
from .exceptions import DomainError
from .genctl import SeedSpec, check_scenario, iter_batches

# ---------------------------------------------------------------------------
# z-test power
# ---------------------------------------------------------------------------


def power(theta, critical, n):
    """P(sqrt(n) |mean| > critical) for n unit-normal measurements centred at theta."""
    if n < 1:
        raise DomainError("n must be at least 1")
    shift = math.sqrt(n) * np.asarray(theta, dtype=float)
    return special.ndtr(-critical + shift) + special.ndtr(-critical - shift)


def power_curve(critical, n, theta_grid):
    """List of (theta, power) pairs from the normal distribution function."""
    values = power(np.asarray(theta_grid, dtype=float), critical, n)
    return [(float(t), float(p)) for t, p in zip(theta_grid, np.atleast_1d(values))]


def worst_case_type2(critical, n, magnitude_floor):
    """Largest Type II error over |theta| >= floor; power grows with |theta|, so it sits at the floor."""
    if not magnitude_floor > 0:
        raise DomainError("magnitude floor must be positive")
    if math.isinf(magnitude_floor):
        return 0.0
    return float(1.0 - power(magnitude_floor, critical, n))


# ---------------------------------------------------------------------------
# Empirical Bayes prevalence
# ---------------------------------------------------------------------------

_POSITIVE = {"positive", "pos", "+", "1", "true"}
_NEGATIVE = {"negative", "neg", "-", "0", "false"}


def _as_flag(r):
    if isinstance(r, (bool, np.bool_)):
        return bool(r)
    if isinstance(r, (int, np.integer)) and r in (0, 1):
        return bool(r)
    key = str(r).strip().lower()
    if key in _POSITIVE:
        return True
    if key in _NEGATIVE:
        return False
    raise DomainError(f"unrecognised test result {r!r}")


def eb_prevalence_from_counts(positives, total, sensitivity, specificity):
    """Method-of-moments prevalence, clamped to [0, 1]."""
    denom = sensitivity - (1.0 - specificity)
    if abs(denom) < 1e-12:
        raise DomainError("prevalence is not identifiable when sensitivity + specificity = 1")
    if total < 1:
        raise DomainError("need at least one test result")
    est = (positives / total - (1.0 - specificity)) / denom
    return float(np.clip(est, 0.0, 1.0))


def eb_prevalence(results, sensitivity, specificity):
    flags = [_as_flag(r) for r in results]
    return eb_prevalence_from_counts(sum(flags), len(flags), sensitivity, specificity)


def eb_consistency(prevalence, sensitivity, specificity, sizes=(100, 1000, 10_000, 100_000), panels=2000, seed=SeedSpec()):
    """Root-mean-square prevalence error over simulated panels, per panel size.

    Returns ``(sizes, rmse, slope)`` with ``slope`` the least-squares slope of
    log rmse on log n.
    """
    q = prevalence * sensitivity + (1 - prevalence) * (1 - specificity)
    rmse = []
    for i, n in enumerate(sizes):
        positives = seed.generator(i).binomial(n, q, size=panels)
        est = np.array([eb_prevalence_from_counts(k, n, sensitivity, specificity) for k in positives])
        rmse.append(float(np.sqrt(np.mean((est - prevalence) ** 2))))
    slope = float(np.polyfit(np.log(sizes), np.log(rmse), 1)[0])
    return list(sizes), rmse, slope


# ---------------------------------------------------------------------------
# Leave-one-out cross-validation
# ---------------------------------------------------------------------------


def loo_cv_error(design, outcomes):
    """Leave-one-out prediction errors via the hat-matrix shortcut r_i / (1 - h_ii).

    Returns ``(errors, mean_squared)``.
    """
    X = np.atleast_2d(np.asarray(design, dtype=float))
    y = np.asarray(outcomes, dtype=float).ravel()
    n, k = X.shape
    if len(y) != n:
        raise DomainError("need one outcome per design row")
    if n <= k + 1:
        raise DomainError(f"need more than {k + 1} records for {k} coefficients")
    if np.linalg.matrix_rank(X) < k:
        raise DomainError("design not full rank")
    Q, _ = np.linalg.qr(X)
    h = np.einsum("ij,ij->i", Q, Q)
    bad = np.flatnonzero(h > 1 - 1e-10)
    if bad.size:
        raise DomainError(f"deleting record {int(bad[0])} leaves a rank-deficient design")
    resid = y - Q @ (Q.T @ y)
    errors = resid / (1.0 - h)
    return errors, float(np.mean(errors**2))


# ---------------------------------------------------------------------------
# Winner's curse on marker panels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WinnersCurseReport:
    """Per-marker selection rate and bias of the estimate among panels selecting it.

    ``bias`` is E[est - truth | selected]; ``magnitude_bias`` is
    E[|est| - |truth| | selected].  Markers never selected carry NaN and
    are listed in ``never_selected``.
    """

    selection_rate: np.ndarray
    selected: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    magnitude_bias: np.ndarray
    magnitude_se: np.ndarray
    generated: int

    @property
    def never_selected(self):
        return [int(m) for m in np.flatnonzero(self.selected == 0)]

    def to_csv(self):
        lines = ["marker,selection_rate,selected,bias,bias_se,magnitude_bias,magnitude_se"]
        for m in range(len(self.selected)):
            row = [self.selection_rate[m], self.bias[m], self.bias_se[m], self.magnitude_bias[m], self.magnitude_se[m]]
            cells = [_fmt(v) for v in row]
            lines.append(",".join([str(m), cells[0], str(int(self.selected[m]))] + cells[1:]))
        return "\n".join(lines) + "\n"


def _fmt(x):
    return "" if math.isnan(x) else format(float(x), ".10g")


def _mean_se(total, total_sq, k):
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(k > 0, total / np.maximum(k, 1), np.nan)
        var = (total_sq - total * total / np.maximum(k, 1)) / np.maximum(k - 1, 1)
        se = np.where(k > 1, np.sqrt(np.maximum(var, 0) / np.maximum(k, 1)), np.nan)
    return mean, se


def winners_curse_report(panel, prior=None, count=10_000, seed=SeedSpec()):
    """Simulate ``count`` marker panels and condition on each marker's selection event."""
    if not isinstance(panel.structure, MarkerPanel):
        raise DomainError("winner's curse report needs a MarkerPanel scenario")
    s = panel if prior is None else type(panel)(prior, panel.noise, panel.structure, panel.n)
    check_scenario(s)
    M = s.structure.n_markers
    k = np.zeros(M, dtype=np.int64)
    acc = np.zeros((4, M))
    for batch in iter_batches(s, count, seed):
        est, theta = batch.arrays["estimates"], batch.truth
        sel = batch.arrays["pvalues"] < s.structure.selection_threshold
        err = np.where(sel, est - theta, 0.0)
        mag = np.where(sel, np.abs(est) - np.abs(theta), 0.0)
        k += sel.sum(axis=0)
        acc += np.stack([err.sum(0), (err * err).sum(0), mag.sum(0), (mag * mag).sum(0)])
    bias, bias_se = _mean_se(acc[0], acc[1], k)
    mag, mag_se = _mean_se(acc[2], acc[3], k)
    return WinnersCurseReport(k / count, k, bias, bias_se, mag, mag_se, int(count))


def truncation_mean(threshold):
    """E[|Z| : |Z| > z*] for the z* matching a two-sided p-value threshold."""
    z = float(special.ndtri(1 - threshold / 2))
    return float(np.exp(-z * z / 2) / math.sqrt(2 * math.pi) / special.ndtr(-z))


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

CANON_IDS = (
    "TwoLabs",
    "SingleMeasurement",
    "WinnersCurse",
    "PValueMatching",
    "DiagnosticTest",
    "BatteryPivot",
    "ZTestPower",
    "RegressionPartial",
    "MinimaxCoin",
    "EmpiricalBayes",
    "LooCv",
)


def slug(canon_id):
    """CamelCase id to the snake_case file stem (PValueMatching -> pvalue_matching)."""
    return re.sub(r"(?<=[a-z])(?=[A-Z])", "_", canon_id).lower()


def _key(name):
    return name.replace("_", "").replace("-", "").lower()


_LOOKUP = {_key(c): c for c in CANON_IDS}


def resolve_id(name):
    """Accept CamelCase, snake_case or kebab-case ids; raise KeyError if unknown."""
    try:
        return _LOOKUP[_key(name)]
    except KeyError:
        raise KeyError(f"unknown canon id {name!r}") from None


@dataclass(frozen=True)
class CanonScenario:
    id: str
    bundle: object

    @property
    def description(self):
        return self.bundle.description or ""


def config_text(canon_id):
    cid = resolve_id(canon_id)
    return resources.files("controlsim").joinpath("canon_configs", slug(cid) + ".cfg").read_text()


def load(canon_id):
    cid = resolve_id(canon_id)
    bundle = parse_config(config_text(cid), source=f"canon:{slug(cid)}")
    return CanonScenario(cid, bundle)


def catalog():
    return [load(c) for c in CANON_IDS]
