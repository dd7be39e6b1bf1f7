import math

import pytest

from controlsim.config import RunSpec, load_config, parse_config, parse_tau_grid, parse_value
from controlsim.distmodel import BetaPValue, GaussianPrior, PValue, TwoPoint
from controlsim.exceptions import ConfigError
from controlsim.procedures import LossKind, PThresholdTest
from controlsim.relevance import AbsLogLR, MatchSpec, Metric, RawValue, TestResult

PVALUE_CFG = """\
# p-value matching
id = PValueMatching
prior = TwoPoint(0, 1, 0.5)
noise = BetaPValue(0.02, 1.35)
structure = PValueChannel()
n = 1
procedure = PThresholdTest(0.05)
match = abs_log_lr(tau=0.5)
target = PValue(0.049)
prior_family = [two_point(0, 1, w) for w in (0, 1)]
"""


def test_parse_value_constructors():
    assert parse_value("TwoPoint(0, 1, 0.5)") == TwoPoint(0, 1, 0.5)
    assert parse_value("gaussian_prior(100, 30, lower=1)") == GaussianPrior(100, 30, 1)
    assert parse_value("[inf, 2 * 0.5, -1]") == [math.inf, 1.0, -1]


@pytest.mark.parametrize("text", ["__import__('os')", "open('x')", "x.y", "lambda: 1", "[i for i in (1,)]"])
def test_parse_value_refuses_code(text):
    with pytest.raises(ConfigError):
        parse_value(text)


def test_constructor_errors_become_config_errors():
    with pytest.raises(ConfigError, match="TwoPoint"):
        parse_value("TwoPoint(0)")


def test_parse_config_round():
    text = PVALUE_CFG.replace("prior_family = [two_point(0, 1, w) for w in (0, 1)]\n", "")
    spec = parse_config(text)
    assert spec.id == "PValueMatching"
    assert spec.procedure == PThresholdTest(0.05)
    assert spec.match == MatchSpec(AbsLogLR(0.02, 1.35), 0.5)
    assert spec.target == PValue(0.049)
    assert spec.scenario().noise == BetaPValue(0.02, 1.35)


def test_comprehension_rejected_with_line():
    with pytest.raises(ConfigError) as err:
        parse_config(PVALUE_CFG)
    assert err.value.line == 10
    assert "line 10" in str(err.value)


def test_missing_equals_cites_line():
    with pytest.raises(ConfigError) as err:
        parse_config("n = 1\nprior TwoPoint(0, 1, 0.5)\n", source="bad.cfg")
    assert err.value.line == 2
    assert "bad.cfg" in str(err.value)


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        parse_config("colour = 3\n")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("n = 1\nn = 2\n")


def test_empty_value():
    with pytest.raises(ConfigError) as err:
        parse_config("\n\nn =\n")
    assert err.value.line == 3


def test_abs_log_lr_needs_beta_noise():
    with pytest.raises(ConfigError, match="BetaPValue"):
        parse_config("noise = StdNormal()\nmatch = abs_log_lr()\n")


def test_match_helper_metric():
    spec = parse_config('match = raw_value(0, metric="exact", grid=0.05)\n')
    assert spec.match == MatchSpec(RawValue(), 0.0, Metric.EXACT, 0.05)
    with pytest.raises(ConfigError, match="metric"):
        parse_config('match = raw_value(0, metric="manhattan")\n')


def test_statistic_key_builds_match():
    spec = parse_config("statistic = TestResult()\ntolerance = 0\n")
    assert spec.match_spec() == MatchSpec(TestResult(), 0.0)


def test_loss_kind():
    assert parse_config("loss = abs\n").loss_kind() is LossKind.ABS_ERROR
    with pytest.raises(ConfigError):
        parse_config("loss = huber\n").loss_kind()


def test_incomplete_scenario():
    with pytest.raises(ConfigError, match="missing noise"):
        parse_config("prior = PointMass(1)\nstructure = Additive()\nn = 2\n").scenario()


def test_tau_grid_range_inclusive():
    grid = parse_tau_grid("0:2:0.1")
    assert len(grid) == 21
    assert grid[0] == 0 and grid[-1] == 2.0 and grid[10] == 1.0


def test_tau_grid_list():
    assert parse_tau_grid("inf, 2, 0.5") == [math.inf, 2.0, 0.5]


@pytest.mark.parametrize("text", ["1:0:0.1", "0:1:0", "a,b", "-1", ""])
def test_tau_grid_rejects(text):
    with pytest.raises(ConfigError):
        parse_tau_grid(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "nope.cfg")


def test_resolve_path_relative_to_config(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("population = data.csv\n")
    spec = load_config(cfg)
    assert spec.resolve_path(spec.population) == tmp_path / "data.csv"


def test_runspec_defaults_none():
    spec = RunSpec()
    assert spec.prior is None and spec.tau_grid is None
