"""Statistics of the data and relevance predicates (matching with tolerance)."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from . import kernels
from .distmodel import ControlBatch, MarkerEstimates, Measurements, PValue, RegressionOutcomes, TestResults
from .exceptions import DomainError

_MAX_BITS = 62


@dataclass(frozen=True)
class SampleSize:
    pass


@dataclass(frozen=True)
class SampleMean:
    pass


@dataclass(frozen=True)
class LabAssignment:
    pass


@dataclass(frozen=True)
class AbsLogLR:
    a: float
    b: float


@dataclass(frozen=True)
class RawValue:
    pass


@dataclass(frozen=True)
class SelectedSet:
    pass


@dataclass(frozen=True)
class TestResult:
    __test__ = False


@dataclass(frozen=True)
class CovariateBalance:
    """Fraction of measurements assigned to lab 1 (the covariate being balanced)."""


class Metric(enum.Enum):
    ABSOLUTE_DIFF = "absolute"
    FOLDED_LOG_DIFF = "folded_log"
    EXACT = "exact"


_DISCRETE = (SampleSize, LabAssignment, SelectedSet, TestResult)


def default_metric(statistic):
    if isinstance(statistic, AbsLogLR):
        return Metric.FOLDED_LOG_DIFF
    if isinstance(statistic, _DISCRETE):
        return Metric.EXACT
    return Metric.ABSOLUTE_DIFF


@dataclass(frozen=True)
class MatchSpec:
    """Accept a control when ``metric(stat(control), stat(target)) <= tolerance``.

    An infinite tolerance accepts every control under any metric.  Exact
    equality ignores any finite tolerance.  Left unset, the tolerance is 0
    for exact matching and infinite otherwise.  ``grid``, when set, bins
    continuous statistics to ``floor(x / grid)`` before comparison, so exact
    matching on a discretized value is possible.
    """

    statistic: object
    tolerance: float | None = None
    metric: Metric | None = None
    grid: float | None = None

    def __post_init__(self):
        if self.metric is None:
            object.__setattr__(self, "metric", default_metric(self.statistic))
        if self.tolerance is None:
            object.__setattr__(self, "tolerance", 0.0 if self.metric is Metric.EXACT else math.inf)
        object.__setattr__(self, "tolerance", float(self.tolerance))
        if not self.tolerance >= 0:
            raise DomainError("tolerance must be nonnegative")
        if self.grid is not None and not self.grid > 0:
            raise DomainError("grid width must be positive")

    @property
    def effective_tolerance(self):
        return effective_tolerance(self.tolerance, self.metric)


def effective_tolerance(tau, metric):
    tau = float(tau)
    return 0.0 if metric is Metric.EXACT and math.isfinite(tau) else tau


def _bitmask(flags):
    if flags.shape[1] > _MAX_BITS:
        raise DomainError(f"cannot encode more than {_MAX_BITS} labels in one statistic")
    weights = np.left_shift(np.int64(1), np.arange(flags.shape[1], dtype=np.int64))
    return flags.astype(np.int64) @ weights


def _shape_error(statistic, kind):
    return DomainError(f"statistic {type(statistic).__name__} is undefined for {kind.__name__} data")


def statistic_batch(batch, statistic):
    """Vectorised statistic over a ControlBatch (labels come back as integer codes)."""
    kind, arr = batch.kind, batch.arrays
    if isinstance(statistic, SampleSize):
        if kind is Measurements:
            n = arr["values"].shape[1]
        elif kind is PValue:
            n = 1
        elif kind is TestResults:
            n = arr["results"].shape[1]
        elif kind is RegressionOutcomes:
            n = arr["y"].shape[1]
        else:
            n = int(round(4.0 / batch.meta["se"] ** 2))
        return np.full(len(batch), n, dtype=np.int64)
    if isinstance(statistic, SampleMean):
        if kind is Measurements:
            return arr["values"].mean(axis=1)
        if kind is RegressionOutcomes:
            return arr["y"].mean(axis=1)
        if kind is TestResults:
            return arr["results"].mean(axis=1)
        if kind is PValue:
            return arr["p"].astype(float)
    elif isinstance(statistic, (LabAssignment, CovariateBalance)):
        if kind is Measurements and "labs" in arr:
            lab1 = arr["labs"] == 1
            return _bitmask(lab1) if isinstance(statistic, LabAssignment) else lab1.mean(axis=1)
    elif isinstance(statistic, AbsLogLR):
        if kind is PValue:
            return kernels.folded_log_lr(arr["p"], statistic.a, statistic.b)
    elif isinstance(statistic, RawValue):
        if kind is Measurements and arr["values"].shape[1] == 1:
            return arr["values"][:, 0]
        if kind is PValue:
            return arr["p"].astype(float)
        if kind is TestResults and arr["results"].shape[1] == 1:
            return arr["results"][:, 0].astype(np.int64)
    elif isinstance(statistic, SelectedSet):
        if kind is MarkerEstimates:
            return _bitmask(arr["pvalues"] < batch.meta["threshold"])
    elif isinstance(statistic, TestResult):
        if kind is TestResults:
            return arr["results"].sum(axis=1).astype(np.int64)
    raise _shape_error(statistic, kind)


def _decode(statistic, value, n_labels):
    if isinstance(statistic, SelectedSet):
        return frozenset(i for i in range(n_labels) if (int(value) >> i) & 1)
    if isinstance(statistic, LabAssignment):
        return tuple(1 if (int(value) >> i) & 1 else 2 for i in range(n_labels))
    if isinstance(value, np.integer):
        return int(value)
    return float(value)


def extract_statistic(problem, statistic):
    """Statistic of a ControlProblem (cached) or TargetProblem.

    Labels decode to Python values: LabAssignment gives the tuple of lab
    numbers, SelectedSet a frozenset of 0-based marker indices.
    """

    def compute():
        batch = ControlBatch.of(problem.data)
        value = statistic_batch(batch, statistic)[0]
        first = next(iter(batch.arrays.values()))
        return _decode(statistic, value, first.shape[1] if first.ndim > 1 else 1)

    cached = getattr(problem, "cached", None)
    return cached(statistic, compute) if cached else compute()


def _encode_target(target, statistic):
    return statistic_batch(ControlBatch.of(target.data), statistic)[0]


def distance_batch(values, target_value, m):
    """Distances of control statistics to the target's under ``m``; NaN becomes +inf."""
    values = np.asarray(values)
    if m.grid is not None:
        values = np.floor(values / m.grid)
        target_value = math.floor(target_value / m.grid)
    if m.metric is Metric.EXACT:
        return np.where(values == target_value, 0.0, np.inf)
    values = values.astype(np.float64)
    target_value = float(target_value)
    with np.errstate(divide="ignore", invalid="ignore"):
        if m.metric is Metric.FOLDED_LOG_DIFF and not isinstance(m.statistic, AbsLogLR):
            # statistic is a raw ratio; AbsLogLR values arrive already folded
            target_fold = abs(math.log(target_value)) if target_value > 0 else np.nan
            dist = np.abs(np.abs(np.log(values)) - target_fold)
        else:
            dist = np.abs(values - target_value)
    return np.where(np.isnan(dist), np.inf, dist)


def accept_batch(batch, target, m):
    dist = distance_batch(statistic_batch(batch, m.statistic), _encode_target(target, m.statistic), m)
    return dist <= m.effective_tolerance


def accept(problem, target, m):
    """True iff the control's statistic lies within tolerance of the target's."""
    code = statistic_batch(ControlBatch.of(problem.data), m.statistic)
    return bool(distance_batch(code, _encode_target(target, m.statistic), m)[0] <= m.effective_tolerance)


# ---------------------------------------------------------------------------
# Likelihood ratio of a p-value and the equal-precision region
# ---------------------------------------------------------------------------


def log_lr(p, a, b):
    """log of the Beta(a, b) density at p (the null density is 1)."""
    out = -special.betaln(a, b)
    if a != 1:
        out += (a - 1) * math.log(p)
    if b != 1:
        out += (b - 1) * math.log1p(-p)
    return out


def lr(p, a, b):
    """Likelihood ratio of alternative Beta(a, b) to the uniform null at p-value p."""
    if not 0 < p < 1:
        raise DomainError(f"p-value must lie strictly inside (0, 1), got {p}")
    return math.exp(log_lr(p, a, b))


def _log_lr_logit(u, a, b):
    # log p = -softplus(-u), log(1 - p) = -softplus(u) with p = expit(u)
    return -special.betaln(a, b) - (a - 1) * np.logaddexp(0.0, -u) - (b - 1) * np.logaddexp(0.0, u)


_U_LIM = 700.0


def _preimage(lo, hi, u0, u1, a, b):
    """Logit interval on the monotone piece [u0, u1] where lo <= log lr <= hi (or None)."""
    f0, f1 = _log_lr_logit(u0, a, b), _log_lr_logit(u1, a, b)
    increasing = f1 >= f0
    fmin, fmax = (f0, f1) if increasing else (f1, f0)
    if hi < fmin or lo > fmax:
        return None

    def solve(level):
        return optimize.brentq(lambda u: _log_lr_logit(u, a, b) - level, u0, u1, xtol=1e-13, rtol=1e-15)

    a_end = solve(lo) if lo > fmin else None
    b_end = solve(hi) if hi < fmax else None
    if increasing:
        return (u0 if a_end is None else a_end, u1 if b_end is None else b_end)
    return (u0 if b_end is None else b_end, u1 if a_end is None else a_end)


def equal_precision_region(p_obs, tau, a, b):
    """Sorted disjoint intervals of p' with ||log lr(p')| - |log lr(p_obs)|| <= tau."""
    if not 0 < p_obs < 1:
        raise DomainError(f"observed p-value must lie strictly inside (0, 1), got {p_obs}")
    if math.isinf(tau):
        return [(0.0, 1.0)]
    c = abs(log_lr(p_obs, a, b))
    if tau >= c:
        levels = [(-c - tau, c + tau)]
    else:
        levels = [(-c - tau, -c + tau), (c - tau, c + tau)]
    # log lr is monotone on either side of its stationary point
    cuts = [-_U_LIM, _U_LIM]
    if a != 1 or b != 1:
        denom = a + b - 2
        if denom != 0:
            stat = (a - 1) / denom
            if 0 < stat < 1:
                cuts.insert(1, float(special.logit(stat)))
    pieces = []
    for u0, u1 in zip(cuts[:-1], cuts[1:]):
        for lo, hi in levels:
            seg = _preimage(lo, hi, u0, u1, a, b)
            if seg is not None:
                pieces.append(seg)
    pieces.sort()
    merged = []
    for lo, hi in pieces:
        if merged and lo <= merged[-1][1] + 1e-12:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    out = []
    for lo, hi in merged:
        plo = 0.0 if lo <= -_U_LIM else float(special.expit(lo))
        phi = 1.0 if hi >= _U_LIM else float(special.expit(hi))
        # the logit round trip can miss p_obs by an ulp; p_obs always belongs to the region
        if abs(plo - p_obs) < 1e-12:
            plo = min(plo, p_obs)
        if abs(phi - p_obs) < 1e-12:
            phi = max(phi, p_obs)
        out.append((plo, phi))
    return out


def region_contains(region, p):
    return any(lo <= p <= hi for lo, hi in region)
