import math

import numpy as np
import pytest

from updown.dist import (
    FAMILIES,
    REGISTRY,
    ThresholdModel,
    get_scenario,
    scenarios_from_config,
    scenarios_to_config,
)

ALL_MODELS = {
    "normal": ThresholdModel.normal(0.4, 0.3),
    "logistic": ThresholdModel.logistic(0.4, 0.2),
    "weibull": ThresholdModel.weibull(1.7, 0.8),
    "lognormal": ThresholdModel.lognormal(-0.5, 0.6),
    "exponential": ThresholdModel.exponential(0.1, 0.5),
    "gamma": ThresholdModel.gamma(2.5, 0.3),
    "uniform": ThresholdModel.uniform(-1.0, 2.0),
}


def test_families_all_covered():
    assert set(ALL_MODELS) == set(FAMILIES)


def test_logistic_cdf_at_location_is_half():
    for scale in (0.05, 1.0, 7.0):
        assert ThresholdModel.logistic(2.5, scale).cdf(2.5) == pytest.approx(0.5)


def test_exponential_cdf_at_scale():
    m = ThresholdModel.exponential(0.0, 0.7)
    assert m.cdf(0.7) == pytest.approx(1 - math.exp(-1), abs=1e-12)


def test_weibull_scale_solved_for_top_level():
    # shape 2, scale solved analytically so that F(top) = 0.7
    top = 1.0
    scale = top / (-math.log(0.3)) ** 0.5
    m = ThresholdModel.weibull(2.0, scale)
    assert m.cdf(top) == pytest.approx(0.7, abs=1e-12)


def test_quantile_median_of_normal():
    assert ThresholdModel.normal(3.25, 0.8).quantile(0.5) == pytest.approx(3.25)


def test_quantile_inverts_exponential_example():
    m = ThresholdModel.exponential(0.0, 0.7)
    assert m.quantile(1 - math.exp(-1)) == pytest.approx(0.7, rel=1e-10)


@pytest.mark.parametrize("name", sorted(ALL_MODELS))
def test_quantile_cdf_round_trip(name):
    m = ALL_MODELS[name]
    rng = np.random.default_rng(99)
    xs = m.quantile(rng.uniform(0.001, 0.999, size=20))
    for x in np.atleast_1d(xs):
        p = m.cdf(x)
        assert m.quantile(p) == pytest.approx(x, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("name", sorted(ALL_MODELS))
def test_cdf_monotone_and_roundtrip_grid(name):
    m = ALL_MODELS[name]
    lo, hi = m.quantile(0.001), m.quantile(0.999)
    grid = np.linspace(lo, hi, 1000)
    vals = m.cdf(grid)
    assert np.all(np.diff(vals) >= 0)
    probs = np.clip(vals, 1e-12, 1 - 1e-12)
    assert np.max(np.abs(m.cdf(m.quantile(probs)) - probs)) < 1e-8


def test_quantile_domain_errors():
    m = ALL_MODELS["normal"]
    for bad in (0.0, 1.0, -0.3, 1.5):
        with pytest.raises(ValueError):
            m.quantile(bad)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        ThresholdModel.normal(0.0, 0.0)
    with pytest.raises(ValueError):
        ThresholdModel.weibull(-1.0, 1.0)
    with pytest.raises(ValueError):
        ThresholdModel.uniform(2.0, 2.0)
    with pytest.raises(ValueError):
        ThresholdModel("cauchy", (0.0, 1.0))


def test_sampling_deterministic_given_seed():
    m = ALL_MODELS["gamma"]
    a = m.sample(1234, 50)
    b = m.sample(1234, 50)
    assert np.array_equal(a, b)
    c = m.sample(1235, 50)
    assert not np.array_equal(a, c)


def test_sampling_empty_and_negative():
    m = ALL_MODELS["normal"]
    assert len(m.sample(1, 0)) == 0
    with pytest.raises(ValueError):
        m.sample(1, -1)


def test_exponential_sample_mean():
    sigma = 0.7
    m = ThresholdModel.exponential(0.0, sigma)
    n = 10**5
    xs = m.sample(2024, n)
    assert abs(xs.mean() - sigma) < 3 * sigma / math.sqrt(n)


@pytest.mark.parametrize("name", sorted(ALL_MODELS))
def test_kolmogorov_smirnov_below_critical(name):
    m = ALL_MODELS[name]
    n = 10**5
    xs = np.sort(m.sample(777, n))
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    vals = m.cdf(xs)
    ks = max(np.max(np.abs(emp_hi - vals)), np.max(np.abs(vals - emp_lo)))
    critical_1pct = 1.6276 / math.sqrt(n)
    assert ks < critical_1pct


def test_registry_has_named_suites():
    for name in ("logis_nice", "logis_upward", "expo", "gam5090", "gam1090",
                 "log0280", "norm3330", "weib2", "logis_tight", "lognorm_disperse"):
        spec = get_scenario(name)
        F = spec.f_values()
        assert np.all(np.diff(F) > 0)
        assert 0 < F[0] < F[-1] < 1


def test_registry_unknown_name():
    with pytest.raises(KeyError):
        get_scenario("no-such-scenario")


def test_scenario_config_round_trip():
    specs = [REGISTRY["logis_nice"], REGISTRY["gam5090"], REGISTRY["weib2_m5"]]
    text = scenarios_to_config(specs)
    back = scenarios_from_config(text)
    assert back == specs
