"""Declarative descriptions of priors, noise laws, structural models and problems.

Everything here is an immutable value.  Downstream modules (simulation,
matching, evaluation) only consume these descriptions; none of them mutate
one.  Two scenarios built from identical fields compare equal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np
from scipy import special

_PROB_TOL = 1e-12


def _as_tuple(x):
    return tuple(float(v) for v in np.asarray(x, dtype=float).ravel())


def _is_prob(x):
    return 0.0 <= x <= 1.0


# ---------------------------------------------------------------------------
# Priors (the "low resolution" pattern for the truth)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    value: float

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def support(self):
        return (float(self.value), float(self.value))

    def violations(self):
        return [] if math.isfinite(self.value) else ["point mass value must be finite"]


@dataclass(frozen=True)
class TwoPoint:
    """Mass ``1 - weight1`` at ``value0`` and ``weight1`` at ``value1``.

    Sampling consumes exactly one uniform per draw whatever the weight, so
    two-point priors that differ only in weight share random numbers under
    the same seed.
    """

    value0: float
    value1: float
    weight1: float

    def sample(self, rng, size):
        u = rng.random(size)
        return np.where(u < self.weight1, float(self.value1), float(self.value0))

    def support(self):
        vals = [v for v, w in ((self.value0, 1 - self.weight1), (self.value1, self.weight1)) if w > 0]
        return (min(vals), max(vals))

    def violations(self):
        if not _is_prob(self.weight1):
            return [f"two-point weight {self.weight1} outside [0, 1]"]
        return []


@dataclass(frozen=True)
class GaussianPrior:
    """Normal prior, optionally truncated to ``[lower, inf)``."""

    mean: float
    sd: float
    lower: float | None = None

    def sample(self, rng, size):
        if self.lower is None:
            return self.mean + self.sd * rng.standard_normal(size)
        a = (self.lower - self.mean) / self.sd
        tail = special.ndtr(-a)
        v = 1.0 - rng.random(size)
        return self.mean - self.sd * special.ndtri(tail * v)

    def support(self):
        return (-math.inf if self.lower is None else float(self.lower), math.inf)

    def violations(self):
        return [] if self.sd > 0 else [f"gaussian prior sd must be positive, got {self.sd}"]


@dataclass(frozen=True)
class UniformGrid:
    lo: float
    hi: float
    points: int

    def grid(self):
        return np.linspace(self.lo, self.hi, int(self.points))

    def sample(self, rng, size):
        return self.grid()[rng.integers(0, int(self.points), size)]

    def support(self):
        return (float(self.lo), float(self.lo if self.points == 1 else self.hi))

    def violations(self):
        out = []
        if not self.lo < self.hi:
            out.append("uniform grid requires lo < hi")
        if self.points < 1:
            out.append("uniform grid requires at least one point")
        return out


@dataclass(frozen=True)
class FiniteMixture:
    components: tuple

    def __post_init__(self):
        comps = tuple((c, float(w)) for c, w in self.components)
        object.__setattr__(self, "components", comps)

    @property
    def weights(self):
        return np.array([w for _, w in self.components])

    def sample(self, rng, size):
        idx = rng.choice(len(self.components), size=size, p=self.weights / self.weights.sum())
        out = np.empty(size)
        for j, (comp, _) in enumerate(self.components):
            mask = idx == j
            out[mask] = comp.sample(rng, int(mask.sum()))
        return out

    def support(self):
        bounds = [c.support() for c, w in self.components if w > 0]
        return (min(b[0] for b in bounds), max(b[1] for b in bounds))

    def violations(self):
        out = []
        if not self.components:
            return ["mixture needs at least one component"]
        for comp, w in self.components:
            if not _is_prob(w):
                out.append(f"mixture weight {w} outside [0, 1]")
            out.extend(comp.violations())
        if abs(sum(w for _, w in self.components) - 1.0) > _PROB_TOL:
            out.append("mixture weights must sum to 1")
        return out


PriorSpec = Union[PointMass, TwoPoint, GaussianPrior, UniformGrid, FiniteMixture]


# ---------------------------------------------------------------------------
# Noise laws (the "high resolution" pattern)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StdNormal:
    unit_mean_positive = False

    def sample(self, rng, shape):
        return rng.standard_normal(shape)

    def violations(self):
        return []


@dataclass(frozen=True)
class UnitMeanExponential:
    unit_mean_positive = True

    def sample(self, rng, shape):
        return rng.standard_exponential(shape)

    def violations(self):
        return []


@dataclass(frozen=True)
class UnitMeanLogNormal:
    """``exp(sigma * Z - sigma**2 / 2)``: mean exactly one."""

    sigma: float
    unit_mean_positive = True

    def sample(self, rng, shape):
        return np.exp(self.sigma * rng.standard_normal(shape) - 0.5 * self.sigma**2)

    def violations(self):
        return [] if self.sigma > 0 else ["lognormal sigma must be positive"]


@dataclass(frozen=True)
class BetaPValue:
    """Law of the p-value under the alternative; the null arm is always uniform."""

    a: float
    b: float
    unit_mean_positive = False

    def sample(self, rng, shape):
        return rng.beta(self.a, self.b, shape)

    def violations(self):
        return [] if self.a > 0 and self.b > 0 else ["beta p-value law needs a, b > 0"]


@dataclass(frozen=True)
class BernoulliChannel:
    """P(positive) = truth * sensitivity + (1 - truth) * (1 - specificity).

    For a 0/1 truth this is the diagnostic-test channel; for a truth in
    [0, 1] with sensitivity = specificity = 1 it is a coin with heads
    probability equal to the truth.
    """

    sensitivity: float
    specificity: float
    unit_mean_positive = False

    def positive_prob(self, truth):
        return truth * self.sensitivity + (1.0 - truth) * (1.0 - self.specificity)

    def violations(self):
        if not (_is_prob(self.sensitivity) and _is_prob(self.specificity)):
            return ["channel sensitivity/specificity must lie in [0, 1]"]
        return []


@dataclass(frozen=True)
class TwoLabMixture:
    """Each measurement is sent to lab 1 with probability ``prob_lab1``, else lab 2."""

    sd_lab1: float
    sd_lab2: float
    prob_lab1: float
    unit_mean_positive = False

    def sample_with_labs(self, rng, shape):
        labs = np.where(rng.random(shape) < self.prob_lab1, 1, 2).astype(np.int8)
        sd = np.where(labs == 1, self.sd_lab1, self.sd_lab2)
        return sd * rng.standard_normal(shape), labs

    def sample(self, rng, shape):
        return self.sample_with_labs(rng, shape)[0]

    def violations(self):
        out = []
        if not (self.sd_lab1 > 0 and self.sd_lab2 > 0):
            out.append("lab standard deviations must be positive")
        if not _is_prob(self.prob_lab1):
            out.append("lab-1 probability outside [0, 1]")
        return out


@dataclass(frozen=True)
class Categorical:
    labels: tuple
    probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    def _numeric(self):
        return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in self.labels)

    @property
    def unit_mean_positive(self):
        if not self._numeric() or any(v <= 0 for v in self.labels):
            return False
        return abs(sum(v * p for v, p in zip(self.labels, self.probs)) - 1.0) <= _PROB_TOL

    def sample(self, rng, shape):
        idx = rng.choice(len(self.labels), size=shape, p=np.asarray(self.probs))
        if self._numeric():
            return np.asarray(self.labels, dtype=float)[idx]
        return np.asarray(self.labels, dtype=object)[idx]

    def violations(self):
        out = []
        if len(self.labels) != len(self.probs) or not self.labels:
            out.append("categorical labels and probs must be nonempty and of equal length")
        if any(not _is_prob(p) for p in self.probs):
            out.append("categorical probabilities must lie in [0, 1]")
        if abs(sum(self.probs) - 1.0) > _PROB_TOL:
            out.append("categorical probabilities must sum to 1")
        return out


NoiseSpec = Union[
    StdNormal, UnitMeanExponential, UnitMeanLogNormal, BetaPValue, BernoulliChannel, TwoLabMixture, Categorical
]


# ---------------------------------------------------------------------------
# Structural models: how data are composed from truth and noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Additive:
    pass


@dataclass(frozen=True)
class Multiplicative:
    pass


@dataclass(frozen=True)
class LinearRegression:
    design: tuple
    target_covariates: tuple

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.design, dtype=float))
        object.__setattr__(self, "design", tuple(tuple(float(v) for v in row) for row in X))
        object.__setattr__(self, "target_covariates", _as_tuple(self.target_covariates))

    @property
    def X(self):
        return np.asarray(self.design, dtype=float)

    @property
    def x0(self):
        return np.asarray(self.target_covariates, dtype=float)


@dataclass(frozen=True)
class PValueChannel:
    pass


@dataclass(frozen=True)
class DiagnosticTest:
    pass


@dataclass(frozen=True)
class MarkerPanel:
    """Independent two-arm z-statistics per marker with known unit noise SD.

    Each marker's effect estimate has standard error ``2 / sqrt(n_subjects)``
    (half the subjects per arm); a marker is selected when its two-sided
    p-value falls below ``selection_threshold``.
    """

    n_subjects: int
    n_markers: int
    selection_threshold: float

    @property
    def se(self):
        return 2.0 / math.sqrt(self.n_subjects)


StructuralModel = Union[Additive, Multiplicative, LinearRegression, PValueChannel, DiagnosticTest, MarkerPanel]


@dataclass(frozen=True)
class Scenario:
    prior: Any
    noise: Any
    structure: Any
    n: int


def validate_scenario(s):
    """Return every invariant violation of ``s`` as a list of strings (empty if valid)."""
    out = []
    if s.n < 1:
        out.append("sample size n must be at least 1")
    out.extend(s.prior.violations())
    out.extend(s.noise.violations())
    st, noise = s.structure, s.noise
    lo, hi = s.prior.support() if not s.prior.violations() else (-math.inf, math.inf)

    if isinstance(st, Additive):
        if isinstance(noise, (BetaPValue, BernoulliChannel)):
            out.append("additive model requires real-valued noise")
        elif isinstance(noise, Categorical) and not noise._numeric():
            out.append("additive model requires numeric noise labels")
    elif isinstance(st, Multiplicative):
        if not noise.unit_mean_positive:
            out.append("multiplicative model requires positive unit-mean noise")
        # a continuous prior truncated at 0 is positive almost surely
        if not (lo > 0 or (lo == 0 and isinstance(s.prior, GaussianPrior))):
            out.append("multiplicative model requires a prior supported on positive values")
    elif isinstance(st, LinearRegression):
        X = st.X
        if np.linalg.matrix_rank(X) < X.shape[1]:
            out.append("design not full rank")
        if len(st.target_covariates) != X.shape[1]:
            out.append("target covariates must have one entry per design column")
        if s.n != X.shape[0]:
            out.append("sample size n must equal the number of design rows")
        if not isinstance(noise, StdNormal):
            out.append("linear regression requires standard normal noise")
    elif isinstance(st, PValueChannel):
        if not isinstance(noise, BetaPValue):
            out.append("p-value channel requires a beta p-value law")
        if s.n != 1:
            out.append("p-value channel observes a single p-value (n = 1)")
    elif isinstance(st, DiagnosticTest):
        if not isinstance(noise, BernoulliChannel):
            out.append("diagnostic test requires a Bernoulli channel")
        if lo < 0 or hi > 1:
            out.append("diagnostic test requires a prior supported on [0, 1]")
    elif isinstance(st, MarkerPanel):
        if not 0 < st.selection_threshold <= 1:
            out.append("selection threshold must lie in (0, 1]")
        if st.n_markers < 1 or st.n_subjects < 2:
            out.append("marker panel needs at least one marker and two subjects")
        if s.n != st.n_subjects:
            out.append("sample size n must equal the number of subjects")
        if not isinstance(noise, StdNormal):
            out.append("marker panel requires standard normal noise")
    else:
        out.append(f"unknown structural model {type(st).__name__}")
    return out


# ---------------------------------------------------------------------------
# Data values and problems
# ---------------------------------------------------------------------------
# Each DataValue variant knows how to pack itself into a batch of arrays
# (leading axis = problem index) and how to unpack row i of such a batch.


@dataclass(frozen=True)
class Measurements:
    values: tuple
    labs: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _as_tuple(self.values))
        if self.labs is not None:
            object.__setattr__(self, "labs", tuple(int(v) for v in self.labs))

    def to_arrays(self):
        arrays = {"values": np.asarray([self.values])}
        if self.labs is not None:
            arrays["labs"] = np.asarray([self.labs], dtype=np.int8)
        return arrays, {}

    @classmethod
    def from_arrays(cls, arrays, meta, i):
        labs = arrays.get("labs")
        return cls(arrays["values"][i], None if labs is None else labs[i])


@dataclass(frozen=True)
class PValue:
    p: float

    def to_arrays(self):
        return {"p": np.asarray([float(self.p)])}, {}

    @classmethod
    def from_arrays(cls, arrays, meta, i):
        return cls(float(arrays["p"][i]))


@dataclass(frozen=True)
class TestResults:
    """0/1 results (1 = positive / heads)."""

    results: tuple

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "results", tuple(int(v) for v in np.atleast_1d(self.results)))

    def to_arrays(self):
        return {"results": np.asarray([self.results], dtype=np.int8)}, {}

    @classmethod
    def from_arrays(cls, arrays, meta, i):
        return cls(arrays["results"][i])


@dataclass(frozen=True)
class RegressionOutcomes:
    y: tuple

    def __post_init__(self):
        object.__setattr__(self, "y", _as_tuple(self.y))

    def to_arrays(self):
        return {"y": np.asarray([self.y])}, {}

    @classmethod
    def from_arrays(cls, arrays, meta, i):
        return cls(arrays["y"][i])


@dataclass(frozen=True)
class MarkerEstimates:
    estimates: tuple
    pvalues: tuple
    se: float
    threshold: float

    def __post_init__(self):
        object.__setattr__(self, "estimates", _as_tuple(self.estimates))
        object.__setattr__(self, "pvalues", _as_tuple(self.pvalues))

    def to_arrays(self):
        arrays = {"estimates": np.asarray([self.estimates]), "pvalues": np.asarray([self.pvalues])}
        return arrays, {"se": self.se, "threshold": self.threshold}

    @classmethod
    def from_arrays(cls, arrays, meta, i):
        return cls(arrays["estimates"][i], arrays["pvalues"][i], meta["se"], meta["threshold"])


DataValue = Union[Measurements, PValue, TestResults, RegressionOutcomes, MarkerEstimates]


@dataclass
class ControlProblem:
    """One simulated pair (data, truth) with a write-once statistic cache."""

    data: Any
    truth: Any
    stats: dict = field(default_factory=dict, compare=False, repr=False)

    def cached(self, key, compute):
        # duplicate computation under concurrency is harmless: values are deterministic
        if key not in self.stats:
            self.stats[key] = compute()
        return self.stats[key]


@dataclass(frozen=True)
class TargetProblem:
    data: Any
    known_truth: float | None = None


@dataclass
class ControlBatch:
    """Columnar block of control problems sharing one data shape."""

    kind: type
    truth: np.ndarray
    arrays: dict
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.truth)

    def problem(self, i):
        truth = self.truth[i]
        truth = tuple(float(v) for v in truth) if np.ndim(truth) else float(truth)
        return ControlProblem(self.kind.from_arrays(self.arrays, self.meta, i), truth)

    @classmethod
    def of(cls, data, truth=np.nan):
        """Batch of one built from a single data value (used for targets)."""
        arrays, meta = data.to_arrays()
        return cls(type(data), np.asarray([truth], dtype=float), arrays, meta)
