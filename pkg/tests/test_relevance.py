import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from controlsim.distmodel import (
    Additive,
    BetaPValue,
    ControlProblem,
    GaussianPrior,
    MarkerEstimates,
    Measurements,
    PointMass,
    PValue,
    PValueChannel,
    Scenario,
    StdNormal,
    TargetProblem,
    TestResults,
    TwoLabMixture,
    TwoPoint,
)
from controlsim.exceptions import DomainError
from controlsim.genctl import SeedSpec, iter_batches
from controlsim.relevance import (
    AbsLogLR,
    LabAssignment,
    MatchSpec,
    Metric,
    RawValue,
    SampleMean,
    SampleSize,
    SelectedSet,
    TestResult,
    accept,
    accept_batch,
    equal_precision_region,
    extract_statistic,
    lr,
    region_contains,
)

A, B = 0.02, 1.35

# Endpoints from bisection on | |log lr(p)| - |log lr(0.049)| | - tau using 40-digit arithmetic.
REGION_05 = [(0.0041745640203306, 0.011550893536716), (0.029630881137091, 0.080635714272242)]
REGION_2 = [(0.0009044471147176, 0.33238067892845)]
# Beta(0.02, 1.35) density at 0.5 from the log-gamma formula in 40-digit arithmetic.
LR_HALF = 0.0312359267307239


def test_sample_mean():
    assert extract_statistic(ControlProblem(Measurements((1, 2, 3)), 0.0), SampleMean()) == 2.0


def test_abs_log_lr_at_observed_p():
    assert extract_statistic(TargetProblem(PValue(0.049)), AbsLogLR(A, B)) == pytest.approx(abs(math.log(0.38)), abs=0.02)


def test_selected_set():
    data = MarkerEstimates((0.1, 0.2, 3.0, 0.1), (0.5, 0.4, 0.001, 0.7), 0.2, 0.01)
    assert extract_statistic(TargetProblem(data), SelectedSet()) == frozenset({2})


def test_lab_assignment_decodes():
    data = Measurements((1.0, 2.0, 3.0), (2, 1, 2))
    assert extract_statistic(TargetProblem(data), LabAssignment()) == (2, 1, 2)


def test_statistic_is_cached():
    p = ControlProblem(Measurements((4.0, 6.0)), 0.0)
    extract_statistic(p, SampleMean())
    assert p.stats[SampleMean()] == 5.0


def test_shape_mismatch_names_statistic():
    with pytest.raises(DomainError, match="SelectedSet"):
        extract_statistic(TargetProblem(PValue(0.2)), SelectedSet())


def test_lr_at_observed_value():
    assert lr(0.049, A, B) == pytest.approx(0.38, abs=0.005)


def test_lr_oracle_value():
    assert lr(0.5, A, B) == pytest.approx(LR_HALF, rel=1e-12)


@given(st.floats(1e-6, 1 - 1e-6))
def test_lr_uniform_alternative(p):
    assert lr(p, 1, 1) == pytest.approx(1.0)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
def test_lr_boundary(p):
    with pytest.raises(DomainError):
        lr(p, A, B)


def test_region_infinite_tau():
    assert equal_precision_region(0.049, math.inf, A, B) == [(0.0, 1.0)]


@pytest.mark.parametrize("tau,expected", [(0.5, REGION_05), (2.0, REGION_2)])
def test_region_matches_bisection_oracle(tau, expected):
    got = equal_precision_region(0.049, tau, A, B)
    assert len(got) == len(expected)
    for (lo, hi), (elo, ehi) in zip(got, expected):
        assert lo == pytest.approx(elo, abs=1e-10)
        assert hi == pytest.approx(ehi, abs=1e-10)


@given(st.floats(1e-4, 1 - 1e-4), st.floats(0, 5))
def test_region_contains_observed(p, tau):
    assert region_contains(equal_precision_region(p, tau, A, B), p)


@given(st.floats(1e-4, 0.999), st.floats(0.01, 5))
def test_region_sorted_disjoint(p, tau):
    region = equal_precision_region(p, tau, 0.3, 2.5)
    for lo, hi in region:
        assert 0 <= lo < hi <= 1
    for (_, h), (l, _) in zip(region, region[1:]):
        assert h < l


@pytest.mark.parametrize("p_obs,tau,a,b", [(0.049, 0.5, A, B), (0.2, 0.3, 0.5, 3.0), (0.7, 0.8, 2.0, 0.5), (0.3, 0.2, 2.0, 3.0)])
def test_region_membership_agrees_with_definition(p_obs, tau, a, b):
    region = equal_precision_region(p_obs, tau, a, b)
    target = abs(math.log(lr(p_obs, a, b)))
    rng = np.random.default_rng(0)
    for p in rng.random(1000):
        inside = abs(abs(math.log(lr(p, a, b))) - target) <= tau
        assert region_contains(region, p) == inside


def test_exact_sample_size():
    m = MatchSpec(SampleSize(), metric=Metric.EXACT)
    target = TargetProblem(Measurements(np.zeros(9)))
    assert accept(ControlProblem(Measurements(np.ones(9)), 0.0), target, m)
    assert not accept(ControlProblem(Measurements(np.ones(8)), 0.0), target, m)


def test_infinite_tolerance_accepts_all():
    m = MatchSpec(AbsLogLR(A, B), math.inf, Metric.FOLDED_LOG_DIFF)
    s = Scenario(TwoPoint(0, 1, 0.5), BetaPValue(A, B), PValueChannel(), 1)
    batch = next(iter_batches(s, 1000, SeedSpec()))
    assert accept_batch(batch, TargetProblem(PValue(0.049)), m).all()


def test_infinite_tolerance_overrides_exact():
    m = MatchSpec(TestResult(), math.inf)
    assert accept(ControlProblem(TestResults((0,)), 0.0), TargetProblem(TestResults((1,))), m)


def test_negative_control_rejected():
    m = MatchSpec(TestResult())
    assert m.metric is Metric.EXACT and m.effective_tolerance == 0.0
    assert not accept(ControlProblem(TestResults((0,)), 0.0), TargetProblem(TestResults((1,))), m)
    assert accept(ControlProblem(TestResults((1,)), 0.0), TargetProblem(TestResults((1,))), m)


def test_exact_ignores_finite_tolerance():
    m = MatchSpec(TestResult(), 5.0)
    assert not accept(ControlProblem(TestResults((0,)), 0.0), TargetProblem(TestResults((1,))), m)


def test_folded_metric_on_raw_ratio():
    # a ratio of 1/2 is as far from 1 as a ratio of 2
    m = MatchSpec(RawValue(), 1e-12, Metric.FOLDED_LOG_DIFF)
    assert accept(ControlProblem(Measurements((0.5,)), 0.0), TargetProblem(Measurements((2.0,))), m)


def test_accepted_set_monotone_in_tau():
    s = Scenario(TwoPoint(0, 1, 0.5), BetaPValue(A, B), PValueChannel(), 1)
    batch = next(iter_batches(s, 10**4, SeedSpec(1)))
    target = TargetProblem(PValue(0.049))
    prev = None
    for tau in (0.0, 0.1, 0.5, 1.0, 2.0, math.inf):
        cur = accept_batch(batch, target, MatchSpec(AbsLogLR(A, B), tau))
        if prev is not None:
            assert np.all(cur[prev])
        prev = cur


def _lab_frequencies(prior):
    s = Scenario(prior, TwoLabMixture(1, 100, 0.5), Additive(), 4)
    batch = next(iter_batches(s, 40_000, SeedSpec(2)))
    codes = ((batch.arrays["labs"] == 1) * (1 << np.arange(4))).sum(axis=1)
    return np.bincount(codes, minlength=16) / len(codes)


def test_lab_assignment_is_ancillary():
    f1 = _lab_frequencies(GaussianPrior(0, 1))
    f2 = _lab_frequencies(PointMass(1000))
    se = np.sqrt(2 * f1 * (1 - f1) / 40_000)
    assert np.all(np.abs(f1 - f2) < 4 * se + 1e-12)


def test_raw_value_is_not_ancillary():
    means = []
    for c in (0.0, 10.0):
        s = Scenario(PointMass(c), StdNormal(), Additive(), 1)
        batch = next(iter_batches(s, 10**5, SeedSpec(3)))
        means.append(batch.arrays["values"].mean())
    assert means[1] - means[0] == pytest.approx(10.0, abs=5 * math.sqrt(2 / 10**5))
