"""Reproducible streams of simulated control problems.

Controls are produced in fixed-size chunks.  Chunk ``k`` of stream ``s``
under root seed ``r`` always uses the Philox generator keyed by
``SeedSequence(r, spawn_key=(s, k))``, so any worker can regenerate any
chunk on its own and a parallel run reproduces the serial one exactly.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distmodel import (
    Additive,
    ControlBatch,
    DiagnosticTest,
    LinearRegression,
    MarkerEstimates,
    MarkerPanel,
    Measurements,
    Multiplicative,
    PointMass,
    PValue,
    PValueChannel,
    RegressionOutcomes,
    TestResults,
    TwoLabMixture,
    validate_scenario,
)
from .exceptions import DomainError, ScenarioError

CHUNK = 1 << 16


@dataclass(frozen=True)
class SeedSpec:
    root_seed: int = 0
    stream_index: int = 0

    def generator(self, chunk=0):
        ss = np.random.SeedSequence(int(self.root_seed) & ((1 << 64) - 1), spawn_key=(self.stream_index, chunk))
        return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(count, chunk=CHUNK):
    full, rest = divmod(int(count), chunk)
    return [chunk] * full + ([rest] if rest else [])


def check_scenario(s):
    problems = validate_scenario(s)
    if problems:
        raise ScenarioError(problems)


def simulate_batch(s, size, rng):
    """Simulate ``size`` controls from scenario ``s`` using generator ``rng``.

    The truth is always drawn first (one call to ``prior.sample``), so
    scenarios differing only in their prior consume the noise stream
    identically whenever the priors consume the same number of variates.
    """
    st, n = s.structure, s.n
    if isinstance(st, MarkerPanel):
        theta = s.prior.sample(rng, (size, st.n_markers))
        est = theta + st.se * rng.standard_normal((size, st.n_markers))
        pvals = 2.0 * special.ndtr(-np.abs(est) / st.se)
        return ControlBatch(
            MarkerEstimates, theta, {"estimates": est, "pvalues": pvals}, {"se": st.se, "threshold": st.selection_threshold}
        )

    if isinstance(st, LinearRegression):
        X = st.X
        beta = s.prior.sample(rng, (size, X.shape[1]))
        eps = rng.standard_normal((size, X.shape[0] + 1))
        y = beta @ X.T + eps[:, 1:]
        truth = beta @ st.x0 + eps[:, 0]
        return ControlBatch(RegressionOutcomes, truth, {"y": y})

    theta = s.prior.sample(rng, size)
    if isinstance(st, PValueChannel):
        # both arms drawn for every control so weights of a two-point prior share random numbers
        null_p = rng.random(size)
        alt_p = s.noise.sample(rng, size)
        return ControlBatch(PValue, theta, {"p": np.where(theta == 0, null_p, alt_p)})
    if isinstance(st, DiagnosticTest):
        prob = s.noise.positive_prob(theta)[:, None]
        results = (rng.random((size, n)) < prob).astype(np.int8)
        return ControlBatch(TestResults, theta, {"results": results})
    if isinstance(s.noise, TwoLabMixture):
        eps, labs = s.noise.sample_with_labs(rng, (size, n))
        arrays = {"labs": labs}
    else:
        eps = s.noise.sample(rng, (size, n))
        arrays = {}
    if isinstance(st, Additive):
        arrays["values"] = theta[:, None] + eps
    elif isinstance(st, Multiplicative):
        arrays["values"] = theta[:, None] * eps
    else:
        raise DomainError(f"cannot simulate structure {type(st).__name__}")
    return ControlBatch(Measurements, theta, arrays)


def iter_batches(s, count, seed):
    """Yield the control batches making up ``count`` controls, in chunk order."""
    check_scenario(s)
    for k, size in enumerate(chunk_sizes(count)):
        yield simulate_batch(s, size, seed.generator(k))


def simulate_controls(s, count, seed=SeedSpec()):
    """Lazily generate ``count`` ControlProblems; identical inputs give identical output."""
    for batch in iter_batches(s, count, seed):
        for i in range(len(batch)):
            yield batch.problem(i)


def plugin_scenario(s, estimate):
    """Collapse the prior of ``s`` to a point mass at ``estimate`` (parametric bootstrap)."""
    if isinstance(s.structure, Multiplicative) and not estimate > 0:
        raise DomainError("multiplicative model needs a positive plug-in estimate")
    if isinstance(s.structure, DiagnosticTest) and not 0 <= estimate <= 1:
        raise DomainError("diagnostic-test plug-in estimate must lie in [0, 1]")
    if not math.isfinite(estimate):
        raise DomainError("plug-in estimate must be finite")
    return dataclasses.replace(s, prior=PointMass(float(estimate)))


def _row_fields(problem):
    data = problem.data
    if isinstance(data, Measurements):
        fields = list(data.values) + ([] if data.labs is None else list(data.labs))
    elif isinstance(data, PValue):
        fields = [data.p]
    elif isinstance(data, TestResults):
        fields = list(data.results)
    elif isinstance(data, RegressionOutcomes):
        fields = list(data.y)
    else:
        fields = list(data.estimates) + list(data.pvalues)
    truth = problem.truth if isinstance(problem.truth, tuple) else (problem.truth,)
    return [repr(float(t)) for t in truth] + [repr(v) if isinstance(v, float) else str(v) for v in fields]


def dump_problems(problems, fh):
    """Write one problem per line: truth field(s) then data values, comma separated."""
    for p in problems:
        fh.write(",".join(_row_fields(p)) + "\n")
