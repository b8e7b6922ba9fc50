import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ou_jump_paths
from jdvol.estimators import EstimatorConfig, MomentEstimate, double_smoothed_moments
from jdvol.exceptions import NumericalError
from jdvol.inference import (
    BiasInputs,
    Regime,
    analytic_bias_inputs,
    bias_constant,
    bn_plugin_bandwidth,
    confidence_interval,
    empirical_bias_inputs,
    kde_score,
    normal_quantile,
    optimal_bandwidth,
    rule_of_thumb_bandwidth,
    std_error,
)
from jdvol.kernels import theta_phi
from jdvol.models import SamplePath, make_model

finite = st.floats(-10, 10, allow_nan=False)


def test_constant_m2_has_zero_bias():
    inputs = BiasInputs(0.0, 0.0, -3.0)
    assert bias_constant(inputs, "small_h") == 0.0
    assert bias_constant(inputs, "ratio_h", phi=1.0) == 0.0


def test_bias_arithmetic():
    assert bias_constant(BiasInputs(1.0, 2.0, -1.0), "ratio_h", phi=1.0) == 0.0
    assert bias_constant(BiasInputs(1.0, 2.0, 0.0), "ratio_h", phi=1.0) == pytest.approx(8 / 15, rel=1e-15)
    assert bias_constant(BiasInputs(1.0, 2.0, 0.0), "small_h") == pytest.approx(1 / 3, rel=1e-15)


def test_ratio_bias_tends_to_small_h():
    inputs = BiasInputs(0.4, -1.2, 0.7)
    diff = bias_constant(inputs, "ratio_h", phi=1e-5) - bias_constant(inputs, "small_h")
    assert abs(diff) < 1e-8


@given(a=st.tuples(finite, finite, finite), b=st.tuples(finite, finite), c=finite)
def test_bias_linear_in_derivatives(a, b, c):
    d1, d2, s = a
    e1, e2 = b
    for regime, phi in (("small_h", None), ("ratio_h", 0.8)):
        f = lambda u, v: bias_constant(BiasInputs(u, v, s), regime, phi=phi)
        assert f(d1 + c * e1, d2 + c * e2) == pytest.approx(f(d1, d2) + c * f(e1, e2), abs=1e-9)


def test_bias_validation():
    with pytest.raises(ValueError):
        bias_constant(BiasInputs(1, 1, 1), "ratio_h")
    with pytest.raises(ValueError):
        bias_constant(BiasInputs(1, 1, 1), "small_h", phi=1.0)
    with pytest.raises(ValueError):
        BiasInputs(math.nan, 0, 0)
    with pytest.raises(ValueError, match="small_h"):
        Regime.coerce("fixed_h")


def test_std_error_values():
    assert std_error(0.0, 0.2, 100.0, "small_h") == 0.0
    assert std_error(0.0048, 0.2, 100.0, "small_h") == pytest.approx(math.sqrt(0.0024) / math.sqrt(20), rel=1e-14)
    assert std_error(0.0048, 0.2, 100.0, "small_h") == pytest.approx(0.010954, abs=5e-7)
    assert std_error(0.0048, 0.2, 100.0, "ratio_h", 1.0) == std_error(0.0048, 0.2, 100.0, "small_h")


def test_std_error_stationary_form():
    # L / T plays the density: sqrt(M4 / (2 p)) / sqrt(T eps)
    se = std_error(0.0048, 0.2, 50.0, "stationary", horizon=100.0)
    assert se == pytest.approx(math.sqrt(0.0024 / 0.5) / math.sqrt(20.0), rel=1e-14)
    with pytest.raises(ValueError):
        std_error(0.0048, 0.2, 50.0, "stationary")


def test_std_error_failures():
    with pytest.raises(NumericalError):
        std_error(0.01, 0.2, 0.0, "small_h")
    with pytest.raises(NumericalError):
        std_error(-1.0, 0.2, 10.0, "small_h")


@given(m4=st.floats(1e-6, 10), eps=st.floats(1e-3, 1), lt=st.floats(1e-2, 1e4), k=st.floats(1.01, 10))
def test_std_error_decreasing(m4, eps, lt, k):
    base = std_error(m4, eps, lt, "small_h")
    assert std_error(m4, eps, lt * k, "small_h") < base
    assert std_error(m4, eps * k, lt, "small_h") < base


def test_quantile():
    assert normal_quantile(1 - 0.3173 / 2) == pytest.approx(1.0, abs=1e-4)
    assert normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)


def test_interval_half_width():
    res = confidence_interval(0.3, 0.0048, 0.0, 0.2, 100.0, 0.05)
    assert (res.ci_high - res.ci_low) / 2 == pytest.approx(0.021470, abs=5e-7)
    assert res.m2_corrected == 0.3 and res.bias_source == "none"


@given(
    m2=st.floats(0, 5), m4=st.floats(0, 5), bias=finite, eps=st.floats(1e-3, 1),
    lt=st.floats(1e-2, 1e4), alpha=st.floats(0.001, 0.5),
)
def test_interval_width_identity(m2, m4, bias, eps, lt, alpha):
    res = confidence_interval(m2, m4, bias, eps, lt, alpha)
    z = normal_quantile(1 - alpha / 2)
    assert res.ci_high - res.ci_low == pytest.approx(2 * z * res.std_error, rel=1e-12, abs=1e-15)
    assert res.m2_corrected == pytest.approx(m2 - eps * eps * bias)


def test_ratio_regime_continuity():
    inputs = BiasInputs(0.5, 1.0, -0.4)
    phi = 1e-4
    small = confidence_interval(0.3, 0.005, bias_constant(inputs, "small_h"), 0.2, 100.0)
    ratio = confidence_interval(
        0.3, 0.005, bias_constant(inputs, "ratio_h", phi=phi), 0.2, 100.0, regime="ratio_h",
        theta=theta_phi("epanechnikov", phi),
    )
    assert ratio.m2_corrected == pytest.approx(small.m2_corrected, abs=1e-3)
    assert ratio.std_error == pytest.approx(small.std_error, rel=1e-3)


def test_interval_covers_on_synthetic_normal_errors():
    # if m2_hat - truth is exactly N(0, se^2), the 95% interval covers 95% of the time
    rng = np.random.default_rng(0)
    se = std_error(0.0048, 0.2, 100.0, "small_h")
    hits = [
        (r := confidence_interval(0.29 + se * z, 0.0048, 0.0, 0.2, 100.0)).ci_low <= 0.29 <= r.ci_high
        for z in rng.standard_normal(20000)
    ]
    assert abs(np.mean(hits) - 0.95) < 3 * math.sqrt(0.95 * 0.05 / 20000)


def test_optimal_bandwidth_formula():
    t = theta_phi("epanechnikov", 1.0)
    h, eps = optimal_bandwidth(1.0, 1.0, 1.0, "epanechnikov", 1.0)
    assert h == pytest.approx((0.5 * t / (0.2 + 1 / 3) ** 2) ** 0.2, rel=1e-14)
    assert eps == h
    h4, _ = optimal_bandwidth(1.0, 1.0, 4.0)
    assert h4 / h == pytest.approx(4**-0.2, rel=1e-14)
    h2, _ = optimal_bandwidth(1.0, 2.0, 1.0)
    assert h2 / h == pytest.approx(2**-0.4, rel=1e-14)
    hp, ep = optimal_bandwidth(1.0, 1.0, 1.0, phi=0.5)
    assert hp / ep == pytest.approx(0.5)


def test_optimal_bandwidth_zero_bracket():
    with pytest.raises(NumericalError, match="rule-of-thumb"):
        optimal_bandwidth(1.0, 0.0, 1.0)


def test_rule_of_thumb():
    path = SamplePath(np.tile([0.0, 1.0], 50), 0.1)
    assert rule_of_thumb_bandwidth(path) == pytest.approx(1.06 * 0.5 * 99**-0.2)
    with pytest.raises(NumericalError):
        rule_of_thumb_bandwidth(SamplePath(np.zeros(10), 0.1))


def test_bn_plugin():
    assert bn_plugin_bandwidth(1.0, 1.0, 1.0) == pytest.approx((0.2 / 4) ** 0.2)
    with pytest.raises(NumericalError):
        bn_plugin_bandwidth(1.0, 0.0, 1.0)


def test_finite_differences_exact_on_quadratic():
    xs = np.linspace(-1, 1, 11)
    q = 1 + 2 * xs + 3 * xs**2
    pts = [MomentEstimate(float(x), float(v), 0.0, 1.0, (1, 1.0, 1), True) for x, v in zip(xs, q)]
    path = SamplePath(np.random.default_rng(0).standard_normal(100), 0.1)
    for x in (-0.6, 0.0, 0.2, 0.37):
        inputs = empirical_bias_inputs(pts, path, "epanechnikov", 0.3, x)
        assert inputs.m2_d1 == pytest.approx(2 + 6 * x, abs=1e-12)
        assert inputs.m2_d2 == pytest.approx(6, abs=1e-10)
        assert inputs.source == "empirical"
    with pytest.raises(NumericalError):
        empirical_bias_inputs(pts[:4], path, "epanechnikov", 0.3, 0.0)


def test_gaussian_score():
    levels = np.random.default_rng(1).normal(0.5, 2.0, 200_000)
    for x in (0.5 - 2.0, 0.5 + 2.0):
        target = -(x - 0.5) / 4.0
        assert kde_score(levels, 0.3, x) == pytest.approx(target, rel=0.15)


def test_derivative_estimates_shrink_for_constant_m2():
    ladder = [ou_jump_paths(20, horizon, 0.01, seed_base=700) for horizon in (50.0, 200.0, 500.0)]
    medians = []
    for paths in ladder:
        d = []
        for p in paths:
            grid = np.linspace(-0.3, 0.3, 13)
            est = double_smoothed_moments(p, EstimatorConfig(0.1, 0.1, grid=grid))
            inp = empirical_bias_inputs(est, p, "epanechnikov", 0.1, 0.0)
            d.append(abs(inp.m2_d1) + abs(inp.m2_d2))
        medians.append(np.median(d))
    assert medians[0] > medians[1] > medians[2]


def test_analytic_inputs():
    inputs = analytic_bias_inputs(make_model("ou-jump"), 0.0)
    assert (inputs.m2_d1, inputs.m2_d2, inputs.source) == (0.0, 0.0, "analytic")
    sj = analytic_bias_inputs(make_model("statejump"), 0.0)
    assert sj.m2_d2 == pytest.approx(-2 * 2 * 0.09)
    with pytest.raises(ValueError, match="score"):
        analytic_bias_inputs(make_model("statejump"), 0.5)
