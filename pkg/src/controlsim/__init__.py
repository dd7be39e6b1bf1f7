"""Evaluate statistical procedures over simulated control problems.

A scenario (prior, noise law, structural model, sample size) generates
control problems ``(data, truth)``.  A procedure is scored on the controls
whose statistics match the observed data within a tolerance, giving a
conditional error rate; sweeping the prior over a family gives a
sensitivity band.
"""
from .distmodel import (
    Additive,
    BernoulliChannel,
    BetaPValue,
    Categorical,
    ControlProblem,
    DiagnosticTest,
    FiniteMixture,
    GaussianPrior,
    LinearRegression,
    MarkerEstimates,
    MarkerPanel,
    Measurements,
    Multiplicative,
    PointMass,
    PValue,
    PValueChannel,
    RegressionOutcomes,
    Scenario,
    StdNormal,
    TargetProblem,
    TestResults,
    TwoLabMixture,
    TwoPoint,
    UniformGrid,
    UnitMeanExponential,
    UnitMeanLogNormal,
    validate_scenario,
)
from .evaluate import (
    ErrorReport,
    FinitePopulation,
    SensitivityBand,
    anova_gain,
    conditional_error,
    leverage,
    partial_match_decomposition,
    sensitivity_band,
    tradeoff_estimate,
)
from .exceptions import ConfigError, ControlSimError, DomainError, ScenarioError
from .genctl import SeedSpec, plugin_scenario, simulate_controls
from .kernels import BACKEND
from .relevance import MatchSpec, Metric, accept, equal_precision_region, extract_statistic, lr

__version__ = "0.1.0"

__all__ = [
    "Additive",
    "BernoulliChannel",
    "BetaPValue",
    "Categorical",
    "ControlProblem",
    "DiagnosticTest",
    "FiniteMixture",
    "GaussianPrior",
    "LinearRegression",
    "MarkerEstimates",
    "MarkerPanel",
    "Measurements",
    "Multiplicative",
    "PointMass",
    "PValue",
    "PValueChannel",
    "RegressionOutcomes",
    "Scenario",
    "StdNormal",
    "TargetProblem",
    "TestResults",
    "TwoLabMixture",
    "TwoPoint",
    "UniformGrid",
    "UnitMeanExponential",
    "UnitMeanLogNormal",
    "validate_scenario",
    "ErrorReport",
    "FinitePopulation",
    "SensitivityBand",
    "anova_gain",
    "conditional_error",
    "leverage",
    "partial_match_decomposition",
    "sensitivity_band",
    "tradeoff_estimate",
    "ConfigError",
    "ControlSimError",
    "DomainError",
    "ScenarioError",
    "SeedSpec",
    "plugin_scenario",
    "simulate_controls",
    "BACKEND",
    "MatchSpec",
    "Metric",
    "accept",
    "equal_precision_region",
    "extract_statistic",
    "lr",
]

