"""Conditional error over relevant subsets of controls, and related decompositions.

The Monte Carlo path is a map over chunks (simulate, match, score) and a
reduction of per-tolerance (count, sum, sum of squares) triples.  Partials
are reduced in chunk order, so results do not depend on the worker count.
"""
from __future__ import annotations

import dataclasses
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .distmodel import GaussianPrior
from .exceptions import DomainError
from .genctl import SeedSpec, check_scenario, chunk_sizes, simulate_batch
from .procedures import DEFAULT_LOSS, LossKind, apply_batch, bind, loss_batch
from .relevance import MatchSpec, _encode_target, default_metric, distance_batch, effective_tolerance, statistic_batch

_BINARY = (LossKind.MISS, LossKind.TEST_ERROR)


@dataclass(frozen=True)
class ErrorReport:
    """Average loss over accepted controls.

    An empty relevant set is reported with ``accepted == 0`` and NaN
    estimate/mc_se; check ``empty`` rather than comparing the estimate to 0.
    """

    estimate: float
    mc_se: float
    accepted: int
    generated: int
    acceptance_rate: float

    @property
    def empty(self):
        return self.accepted == 0

    def to_json(self):
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        return json.dumps({k: clean(v) for k, v in dataclasses.asdict(self).items()})


def _report(count, total, total_sq, generated, binary):
    count = int(count)
    if count == 0:
        return ErrorReport(math.nan, math.nan, 0, generated, 0.0)
    mean = total / count
    if binary:
        se = math.sqrt(max(mean * (1 - mean), 0.0) / count)
    elif count > 1:
        var = max(total_sq - total * total / count, 0.0) / (count - 1)
        se = math.sqrt(var / count)
    else:
        se = math.nan
    return ErrorReport(float(mean), se, count, generated, count / generated)


def _accumulate(s, proc, statistic, metric, grid, target, taus, count, seed, loss_kind, threads):
    """Per-tau (count, sum, sumsq) of losses over controls whose distance is within tau."""
    check_scenario(s)
    proc = bind(proc, s)
    probe = MatchSpec(statistic, math.inf, metric, grid)
    target_code = _encode_target(target, statistic)
    taus = np.asarray(taus, dtype=float)
    sizes = chunk_sizes(count)

    def work(k):
        batch = simulate_batch(s, sizes[k], seed.generator(k))
        dist = distance_batch(statistic_batch(batch, statistic), target_code, probe)
        losses = loss_batch(proc, apply_batch(proc, batch), batch.truth, loss_kind)
        return kernels.tolerance_accumulate(dist, losses, taus)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(k) for k in range(len(sizes))]
    counts = np.zeros(len(taus), dtype=np.int64)
    sums = np.zeros(len(taus))
    sumsq = np.zeros(len(taus))
    for c, t, q in parts:
        counts += c
        sums += t
        sumsq += q
    return counts, sums, sumsq


def conditional_error(s, proc, m, target, count, seed=SeedSpec(), loss_kind=None, threads=1):
    """Average loss of ``proc`` over the controls accepted by ``m`` against ``target``.

    Deterministic given ``seed``; independent of ``threads``.
    """
    if count < 1:
        raise DomainError("count must be at least 1")
    kind = loss_kind or DEFAULT_LOSS[proc.family]
    c, t, q = _accumulate(
        s, proc, m.statistic, m.metric, m.grid, target, [m.effective_tolerance], count, seed, kind, threads
    )
    return _report(c[0], t[0], q[0], int(count), kind in _BINARY)


@dataclass
class SensitivityBand:
    """Min / max / nominal conditional error over a prior family, per tolerance.

    ``estimates``, ``ses`` and ``accepted`` hold every (prior, tau) cell;
    rows follow ``prior_family`` order, the first row being the nominal prior.
    """

    tau_grid: tuple
    estimates: np.ndarray
    ses: np.ndarray
    accepted: np.ndarray
    generated: int

    @property
    def err_nominal(self):
        return self.estimates[0]

    @property
    def mc_se(self):
        return self.ses[0]

    def _extreme_idx(self, fn):
        est = np.where(np.isnan(self.estimates), np.nan, self.estimates)
        out = np.full(est.shape[1], -1)
        for j in range(est.shape[1]):
            col = est[:, j]
            if not np.all(np.isnan(col)):
                out[j] = fn(col)
        return out

    def _pick(self, idx, arr):
        return np.array([arr[i, j] if i >= 0 else np.nan for j, i in enumerate(idx)])

    @property
    def argmin(self):
        return self._extreme_idx(np.nanargmin)

    @property
    def argmax(self):
        return self._extreme_idx(np.nanargmax)

    @property
    def err_min(self):
        return self._pick(self.argmin, self.estimates)

    @property
    def err_max(self):
        return self._pick(self.argmax, self.estimates)

    @property
    def width(self):
        return self.err_max - self.err_min

    @property
    def width_se(self):
        """Combined standard error of the min and max cells."""
        return np.hypot(self._pick(self.argmin, self.ses), self._pick(self.argmax, self.ses))

    @property
    def accepted_min(self):
        return self.accepted.min(axis=0)

    def all_empty(self):
        return bool(np.all(self.accepted == 0))

    def to_csv(self):
        lines = ["tau,err_min,err_max,err_nominal,mc_se,accepted_min"]
        cols = (self.err_min, self.err_max, self.err_nominal, self.mc_se)
        for j, tau in enumerate(self.tau_grid):
            row = [_fmt(tau)] + [_fmt(c[j]) for c in cols] + [str(int(self.accepted_min[j]))]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".10g")


def sensitivity_band(
    s_template,
    proc,
    statistic,
    tau_grid,
    prior_family,
    target,
    count,
    seed=SeedSpec(),
    metric=None,
    loss_kind=None,
    threads=1,
    grid=None,
):
    """Conditional error for every (tau, prior) cell.

    All cells share ``seed``: every tau reuses the same controls (one pass per
    prior), and priors consuming the same variates share random numbers.
    """
    if not prior_family:
        raise DomainError("prior family must be nonempty")
    metric = metric or default_metric(statistic)
    kind = loss_kind or DEFAULT_LOSS[proc.family]
    taus = np.asarray([float(t) for t in tau_grid])
    eff = np.array([effective_tolerance(t, metric) for t in taus])
    order = np.unique(eff)
    where = np.searchsorted(order, eff)
    shape = (len(prior_family), len(taus))
    est, ses, acc = np.full(shape, np.nan), np.full(shape, np.nan), np.zeros(shape, dtype=np.int64)
    for i, prior in enumerate(prior_family):
        s = dataclasses.replace(s_template, prior=prior)
        c, t, q = _accumulate(s, proc, statistic, metric, grid, target, order, count, seed, kind, threads)
        for j, w in enumerate(where):
            r = _report(c[w], t[w], q[w], int(count), kind in _BINARY)
            est[i, j], ses[i, j], acc[i, j] = r.estimate, r.mc_se, r.accepted
    return SensitivityBand(tuple(float(t) for t in taus), est, ses, acc, int(count))


# ---------------------------------------------------------------------------
# Finite populations: the matching gain and the relevance/robustness tradeoff
# ---------------------------------------------------------------------------


class FinitePopulation:
    """Records of (covariate labels, outcome) with nested matching levels.

    ``levels[r]`` lists the covariate columns matched on at level r; levels
    must be nested and ``levels[0]`` is empty (no matching).  By default
    level r matches on the first r columns.
    """

    def __init__(self, covariates, outcomes, levels=None):
        self.outcomes = np.asarray(outcomes, dtype=float).ravel()
        cov = np.asarray(covariates, dtype=object)
        if cov.ndim == 1:
            cov = cov[:, None]
        if len(self.outcomes) == 0 or cov.shape[0] != len(self.outcomes):
            raise DomainError("population needs one covariate row per outcome and at least one record")
        self.covariates = cov
        codes = np.empty(cov.shape, dtype=np.int64)
        for j in range(cov.shape[1]):
            _, codes[:, j] = np.unique(cov[:, j].astype(str), return_inverse=True)
        self._codes = codes
        if levels is None:
            levels = [tuple(range(r)) for r in range(cov.shape[1] + 1)]
        levels = [tuple(lv) for lv in levels]
        if levels[0] != ():
            raise DomainError("level 0 must match on nothing")
        for a, b in zip(levels, levels[1:]):
            if not set(a) <= set(b):
                raise DomainError("matching levels must be nested")
        self.levels = levels
        self._groups = {}

    def __len__(self):
        return len(self.outcomes)

    @property
    def R(self):
        return len(self.levels) - 1

    def groups(self, r):
        """(group id per record, number of groups) at level r."""
        if r not in self._groups:
            cols = list(self.levels[r])
            if not cols:
                ids = np.zeros(len(self), dtype=np.int64)
            else:
                _, ids = np.unique(self._codes[:, cols], axis=0, return_inverse=True)
                ids = ids.ravel()
            self._groups[r] = (ids, int(ids.max()) + 1)
        return self._groups[r]

    def group_means(self, r):
        """Per-record mean outcome of its level-r subgroup."""
        ids, g = self.groups(r)
        sums = np.bincount(ids, weights=self.outcomes, minlength=g)
        counts = np.bincount(ids, minlength=g)
        if np.any(counts == 0):
            raise DomainError(f"empty subgroup at level {r}")
        return (sums / counts)[ids]


def anova_gain(pop, level):
    """Average squared distance between level-r subgroup means and the overall mean."""
    if not 0 <= level <= pop.R:
        raise DomainError(f"level must lie in [0, {pop.R}]")
    mu = pop.outcomes.mean()
    return float(np.mean((pop.group_means(level) - mu) ** 2))


@dataclass(frozen=True)
class TradeoffResult:
    gain: float
    loss: float
    net: float
    loss_se: float
    replications: int
    fallback_replications: int


def _trial_estimates(pop, trial, r):
    """Trial-based estimate of each record's level-r subgroup mean.

    A subgroup absent from the trial falls back to the record's estimate at
    the next coarser level (ultimately the trial mean).
    """
    y = pop.outcomes[trial]
    est = np.full(len(pop), y.mean())
    fell_back = False
    for level in range(1, r + 1):
        ids, g = pop.groups(level)
        tid = ids[trial]
        sums = np.bincount(tid, weights=y, minlength=g)
        counts = np.bincount(tid, minlength=g)
        have = counts[ids] > 0
        fell_back = fell_back or not bool(np.all(have))
        safe = np.where(counts > 0, counts, 1)
        est = np.where(have, (sums / safe)[ids], est)
    return est, fell_back


def tradeoff_estimate(pop, trial_size, r, replications, seed=SeedSpec()):
    """Gain in relevance minus loss in robustness of matching on level r+1 instead of r.

    Trials of ``trial_size`` records are drawn without replacement from the
    population; the loss term averages over ``replications`` such trials.
    """
    if not 0 <= r < pop.R:
        raise DomainError(f"need 0 <= r < {pop.R}")
    if not 1 <= trial_size <= len(pop):
        raise DomainError("trial size must lie in [1, population size]")
    mu_r, mu_next = pop.group_means(r), pop.group_means(r + 1)
    gain = float(np.mean((mu_r - mu_next) ** 2))
    rng = seed.generator(0)
    diffs = np.empty(replications)
    flagged = 0
    for i in range(replications):
        trial = rng.choice(len(pop), size=trial_size, replace=False)
        est_next, fb_next = _trial_estimates(pop, trial, r + 1)
        est_r, fb_r = _trial_estimates(pop, trial, r)
        flagged += fb_next or fb_r
        diffs[i] = np.mean((est_next - mu_next) ** 2) - np.mean((est_r - mu_r) ** 2)
    loss = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(replications)) if replications > 1 else math.nan
    return TradeoffResult(gain, loss, gain - loss, se, int(replications), int(flagged))


# ---------------------------------------------------------------------------
# Leverage and the partial-matching decomposition for linear regression
# ---------------------------------------------------------------------------


def _full_rank(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DomainError("design not full rank")
    return X


def leverage(design, x0):
    """x0' (X'X)^{-1} x0."""
    X = _full_rank(design)
    x0 = np.asarray(x0, dtype=float).ravel()
    return float(x0 @ np.linalg.solve(X.T @ X, x0))


@dataclass(frozen=True)
class PartialMatchReport:
    h0: float
    B: np.ndarray
    F: np.ndarray
    identity_residuals: np.ndarray
    delta1: float


def _prior_moments(prior, k):
    priors = [prior] * k if isinstance(prior, GaussianPrior) else list(prior)
    if len(priors) != k or not all(isinstance(p, GaussianPrior) and p.lower is None for p in priors):
        raise DomainError("partial matching needs one untruncated Gaussian prior per coefficient")
    return np.array([p.mean for p in priors]), np.array([p.sd for p in priors])


def partial_match_decomposition(design, x0, prior, count, seed=SeedSpec(), outcomes=None):
    """Controls matching the data except the first outcome, drawn by Gaussian conditioning.

    Returns samples of B' = x0'(beta_hat - beta'), F' = x0'(beta_hat' - beta') +
    (Delta_1 - Delta_1'), and the residuals of x0'(beta_hat' - beta') =
    (1 - h0) B' + h0 F'.  When ``outcomes`` is omitted a target dataset is
    simulated from the prior on a separate substream.
    """
    X = _full_rank(design)
    n, k = X.shape
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (k,) or not np.allclose(x0, X[0], rtol=0, atol=1e-12):
        raise DomainError("x0 must equal the first design row")
    m, sd = _prior_moments(prior, k)
    if outcomes is None:
        rng_t = seed.generator(1)
        y = X @ (m + sd * rng_t.standard_normal(k)) + rng_t.standard_normal(n)
    else:
        y = np.asarray(outcomes, dtype=float).ravel()
        if y.shape != (n,):
            raise DomainError("need one outcome per design row")
    pinv = np.linalg.pinv(X)
    beta_hat = pinv @ y
    h0 = leverage(X, x0)

    # beta' | y_2..y_n under the Gaussian prior
    X_rest, y_rest = X[1:], y[1:]
    precision = np.diag(1.0 / sd**2) + X_rest.T @ X_rest
    cov = np.linalg.inv(precision)
    cov = (cov + cov.T) / 2
    post_mean = cov @ (m / sd**2 + X_rest.T @ y_rest)
    chol = np.linalg.cholesky(cov)

    rng = seed.generator(0)
    z = rng.standard_normal((count, k))
    eps1 = rng.standard_normal(count)
    beta = post_mean + z @ chol.T
    y1 = beta @ X[0] + eps1
    Y = np.tile(y, (count, 1))
    Y[:, 0] = y1
    beta_hat_c = Y @ pinv.T

    B = (beta_hat - beta) @ x0
    lhs = (beta_hat_c - beta) @ x0
    delta1 = float(X[0] @ beta_hat - y[0])
    delta1_c = beta_hat_c @ X[0] - y1
    F = lhs + (delta1 - delta1_c)
    resid = lhs - (1 - h0) * B - h0 * F
    return PartialMatchReport(h0, B, F, resid, delta1)


def exhaustive_trials(n, size):
    """All index subsets of a given size (for small brute-force checks)."""
    return itertools.combinations(range(n), size)
