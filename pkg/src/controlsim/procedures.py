"""Decision rules under evaluation and their losses.

Rules come in three families: point estimates, lower bounds/intervals,
and tests.  Every rule works on a whole ControlBatch at once
(``apply_batch``); ``apply`` is the one-problem view of the same code.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .distmodel import (
    Categorical,
    ControlBatch,
    MarkerEstimates,
    Measurements,
    PValue,
    TestResults,
    UnitMeanExponential,
)
from .exceptions import DomainError


class LossKind(enum.Enum):
    SQUARED_ERROR = "squared"
    ABS_ERROR = "abs"
    MISS = "miss"
    TEST_ERROR = "test"


# -- point estimates --------------------------------------------------------


@dataclass(frozen=True)
class SampleMeanEst:
    family = "point"


@dataclass(frozen=True)
class MinimaxBinomialEst:
    family = "point"


@dataclass(frozen=True)
class PlugInMarkerEst:
    family = "point"


# -- intervals (lower bounds are intervals with an infinite upper end) ------


@dataclass(frozen=True)
class AdditiveLower:
    """Lower bound ``mean - buffer``."""

    buffer: float
    family = "interval"


@dataclass(frozen=True)
class MultiplicativePivotLower:
    """Lower bound ``mean / c`` with ``c`` the ``level`` quantile of the noise mean.

    ``noise`` is normally left unset and bound from the scenario at
    evaluation time.
    """

    level: float
    noise: object = None
    family = "interval"


@dataclass(frozen=True)
class ZInterval:
    """``mean +/- z * sd / sqrt(n)`` for measurements with known standard deviation ``sd``."""

    level: float
    sd: float = 1.0
    family = "interval"

    @property
    def critical(self):
        return float(special.ndtri(0.5 + self.level / 2))


# -- tests (decision True = reject the null / predict "sick") ---------------


@dataclass(frozen=True)
class PThresholdTest:
    alpha: float
    family = "test"


@dataclass(frozen=True)
class ZTest:
    """Reject when ``sqrt(n) * |mean| > critical``."""

    critical: float
    family = "test"

    def matching_interval(self):
        return ZInterval(float(2 * special.ndtr(self.critical) - 1))


@dataclass(frozen=True)
class DiagnosticPredict:
    """Predict sick iff the (single) test result is positive."""

    family = "test"


DEFAULT_LOSS = {"point": LossKind.SQUARED_ERROR, "interval": LossKind.MISS, "test": LossKind.TEST_ERROR}


def validate_procedure(proc):
    for name in ("level", "alpha"):
        value = getattr(proc, name, None)
        if value is not None and not 0 < value < 1:
            return [f"{type(proc).__name__} {name} must lie in (0, 1)"]
    if isinstance(proc, ZInterval) and not proc.sd > 0:
        return ["ZInterval sd must be positive"]
    if isinstance(proc, ZTest) and not proc.critical > 0:
        return ["ZTest critical value must be positive"]
    return []


def bind(proc, scenario):
    """Fill scenario-dependent parameters of ``proc`` (the pivot's noise law)."""
    if isinstance(proc, MultiplicativePivotLower) and proc.noise is None:
        return MultiplicativePivotLower(proc.level, scenario.noise)
    return proc


class LossValue(NamedTuple):
    delta: float
    kind: LossKind


def _need(batch, kind, proc):
    if batch.kind is not kind:
        raise DomainError(f"{type(proc).__name__} needs {kind.__name__} data, got {batch.kind.__name__}")


def apply_batch(proc, batch):
    """Decisions for every problem in the batch.

    Point rules return an array of estimates, interval rules a ``(lower,
    upper)`` pair of arrays and tests a boolean array.
    """
    arr = batch.arrays
    if isinstance(proc, SampleMeanEst):
        if batch.kind is Measurements:
            return arr["values"].mean(axis=1)
        if batch.kind is TestResults:
            return arr["results"].mean(axis=1)
        raise DomainError(f"sample mean is undefined for {batch.kind.__name__} data")
    if isinstance(proc, MinimaxBinomialEst):
        _need(batch, TestResults, proc)
        n = arr["results"].shape[1]
        return minimax_binomial_estimate(arr["results"].sum(axis=1), n)
    if isinstance(proc, PlugInMarkerEst):
        _need(batch, MarkerEstimates, proc)
        return arr["estimates"]
    if isinstance(proc, (AdditiveLower, MultiplicativePivotLower, ZInterval, ZTest)):
        _need(batch, Measurements, proc)
        values = arr["values"]
        mean, n = values.mean(axis=1), values.shape[1]
        if isinstance(proc, AdditiveLower):
            return mean - proc.buffer, np.full_like(mean, np.inf)
        if isinstance(proc, MultiplicativePivotLower):
            if proc.noise is None:
                raise DomainError("pivot bound needs a noise law; bind the procedure to a scenario")
            if np.any(values <= 0):
                raise DomainError("pivot bound needs strictly positive data")
            return mean / pivot_quantile(proc.noise, n, proc.level), np.full_like(mean, np.inf)
        if isinstance(proc, ZInterval):
            half = proc.critical * proc.sd / math.sqrt(n)
            return mean - half, mean + half
        return math.sqrt(n) * np.abs(mean) > proc.critical
    if isinstance(proc, PThresholdTest):
        _need(batch, PValue, proc)
        return arr["p"] <= proc.alpha
    if isinstance(proc, DiagnosticPredict):
        _need(batch, TestResults, proc)
        if arr["results"].shape[1] != 1:
            raise DomainError("diagnostic prediction expects a single test result")
        return arr["results"][:, 0] == 1
    raise DomainError(f"unknown procedure {type(proc).__name__}")


def apply(proc, data):
    """Decision of ``proc`` on a single data value."""
    out = apply_batch(proc, ControlBatch.of(data))
    if isinstance(out, tuple):
        return float(out[0][0]), float(out[1][0])
    if out.ndim > 1:
        return tuple(float(v) for v in out[0])
    return bool(out[0]) if out.dtype == bool else float(out[0])


def loss_batch(proc, decision, truth, kind=None):
    """Per-problem loss; 2-D point estimates (marker panels) are averaged over markers."""
    kind = kind or DEFAULT_LOSS[proc.family]
    truth = np.asarray(truth, dtype=float)
    if kind in (LossKind.SQUARED_ERROR, LossKind.ABS_ERROR):
        if proc.family != "point":
            raise DomainError(f"{kind.value} loss needs a point estimate")
        err = np.asarray(decision, dtype=float) - truth
        out = err * err if kind is LossKind.SQUARED_ERROR else np.abs(err)
        return out.mean(axis=1) if out.ndim > 1 else out
    if kind is LossKind.MISS:
        if proc.family != "interval":
            raise DomainError("miss loss needs an interval")
        lo, hi = decision
        return (~((lo <= truth) & (truth <= hi))).astype(float)
    if proc.family != "test":
        raise DomainError("test error needs a test")
    return (np.asarray(decision, dtype=bool) != (truth != 0)).astype(float)


def loss(proc, decision, truth, kind=None):
    kind = kind or DEFAULT_LOSS[proc.family]
    if isinstance(decision, tuple) and proc.family == "interval":
        dec = (np.asarray([decision[0]]), np.asarray([decision[1]]))
    else:
        dec = np.asarray([decision])
    return LossValue(float(loss_batch(proc, dec, np.asarray([truth]), kind)[0]), kind)


# ---------------------------------------------------------------------------
# Pivot construction
# ---------------------------------------------------------------------------

PIVOT_MC_DRAWS = 2_000_000
_PIVOT_SEED = 0x5EED_C0DE


def mc_quantile(noise, n, level, draws=PIVOT_MC_DRAWS, seed=_PIVOT_SEED, chunk=1 << 17):
    """Monte Carlo ``level`` quantile of the mean of ``n`` noise draws and its standard error.

    The standard error uses the asymptotic formula sqrt(q(1-q)/N) / density,
    with the density at the quantile estimated by a symmetric difference of
    the empirical CDF.
    """
    rng = np.random.default_rng(seed)
    parts = []
    left = draws
    while left > 0:
        k = min(chunk, left)
        parts.append(noise.sample(rng, (k, n)).mean(axis=1))
        left -= k
    means = np.sort(np.concatenate(parts))
    c = float(np.quantile(means, level))
    h = 2.0 * means.std() * draws ** (-1 / 5)
    dens = (np.searchsorted(means, c + h) - np.searchsorted(means, c - h)) / (2 * h * draws)
    return c, math.sqrt(level * (1 - level) / draws) / dens


@functools.lru_cache(maxsize=64)
def pivot_quantile(noise, n, level):
    """Constant ``c`` with P(mean of n noise draws < c) = level; depends on the noise law only."""
    if isinstance(noise, UnitMeanExponential):
        # mean of n unit exponentials is Gamma(n, scale 1/n)
        return float(stats.gamma.ppf(level, n) / n)
    if isinstance(noise, Categorical) and len(set(noise.labels)) == 1:
        return float(noise.labels[0])
    if not getattr(noise, "unit_mean_positive", False):
        raise DomainError("pivot bound needs positive unit-mean noise")
    return mc_quantile(noise, n, level)[0]


def pivot_bound(data, noise, level):
    """Lower bound ``mean(data) / c`` for the multiplicative model."""
    y = np.asarray(data, dtype=float).ravel()
    if y.size == 0 or np.any(y <= 0):
        raise DomainError("pivot bound needs nonempty, strictly positive data")
    return float(y.mean() / pivot_quantile(noise, y.size, level))


# ---------------------------------------------------------------------------
# Minimax estimation of a binomial proportion
# ---------------------------------------------------------------------------


def minimax_binomial_estimate(successes, n):
    """(successes + sqrt(n)/2) / (n + sqrt(n)): constant squared-error risk."""
    if n < 1:
        raise DomainError("need at least one trial")
    s = np.asarray(successes)
    if np.any((s < 0) | (s > n)):
        raise DomainError("successes must lie in [0, n]")
    root = math.sqrt(n)
    out = (s + root / 2) / (n + root)
    return float(out) if np.ndim(out) == 0 else out


def binomial_risk(estimates, n, thetas):
    """Exact squared-error risk of an estimator given as its value at 0..n successes."""
    est = np.asarray(estimates, dtype=float)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    pmf = stats.binom.pmf(np.arange(n + 1)[None, :], n, thetas[:, None])
    return (pmf * (est[None, :] - thetas[:, None]) ** 2).sum(axis=1)
