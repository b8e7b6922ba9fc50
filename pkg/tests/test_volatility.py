import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import random_path
from jdvol.estimators import EstimatorConfig, double_smoothed_moments
from jdvol.inference import BiasInputs
from jdvol.models import SimConfig, make_model, simulate_path
from jdvol.volatility import DoubleSmoothedVolatility, SingleSmoothedVolatility, plugin_bandwidths


@pytest.fixture(scope="module")
def path():
    return simulate_path(make_model("statejump"), SimConfig(0.0, 20000, 0.01, seed=3))


def test_matches_functional_api(path):
    est = DoubleSmoothedVolatility(h=0.1, eps=0.2).fit(path)
    grid = np.array([-0.3, 0.0, 0.3])
    expect = double_smoothed_moments(path, EstimatorConfig(0.1, 0.2, grid=grid))
    assert est.predict(grid).tolist() == [e.m2 for e in expect]
    assert est.predict_m4(grid).tolist() == [e.m4 for e in expect]
    # unsorted, repeated points come back in the order asked
    assert est.predict([0.3, -0.3, 0.3]).tolist() == [expect[2].m2, expect[0].m2, expect[2].m2]


def test_array_input_needs_delta(path):
    est = DoubleSmoothedVolatility(h=0.1, eps=0.2, delta=0.01).fit(path.values)
    assert est.predict([0.0])[0] == DoubleSmoothedVolatility(h=0.1, eps=0.2).fit(path).predict([0.0])[0]
    with pytest.raises(ValueError):
        DoubleSmoothedVolatility(h=0.1, eps=0.2, delta=0.02).fit(path)


def test_sklearn_protocol(path):
    est = DoubleSmoothedVolatility(h=0.1, eps=0.2, kernel="quartic")
    assert est.get_params()["kernel"] == "quartic"
    twin = clone(est).set_params(h=0.15)
    assert twin.h == 0.15 and est.h == 0.1
    with pytest.raises(NotFittedError):
        est.predict([0.0])


def test_auto_bandwidths_resolved(path):
    est = DoubleSmoothedVolatility().fit(path)
    assert est.h_ > 0 and est.eps_ > 0
    assert est.bandwidth_info_["source"] in ("plug-in", "rule-of-thumb")
    half = DoubleSmoothedVolatility(h=0.1, eps="auto", phi=0.5).fit(path)
    assert half.eps_ == pytest.approx(0.2)


def test_plugin_falls_back_for_constant_m2():
    p = simulate_path(make_model("ou-jump"), SimConfig(0.0, 2000, 0.01, seed=1))
    h, eps, info = plugin_bandwidths(p)
    assert h > 0 and info["source"] in ("plug-in", "rule-of-thumb")
    flat = random_path(np.random.default_rng(0), 50)
    h, _, info = plugin_bandwidths(flat, x=100.0)
    assert info["source"] == "rule-of-thumb" and "reason" in info


def test_confidence_intervals(path):
    est = DoubleSmoothedVolatility(h=0.1, eps=0.2).fit(path)
    model = make_model("statejump")
    analytic = est.confidence_interval([0.0], bias_inputs=BiasInputs(0.0, -0.36, 0.0))
    (m, res), = analytic
    assert res.bias_source == "analytic"
    assert res.ci_low < float(model.m2(0.0)) < res.ci_high
    for m, res in est.confidence_interval([-0.2, 0.0, 5.0]):
        if m.reliable:
            assert res.ci_low <= res.m2_corrected <= res.ci_high
        else:
            assert res is None
    (_, plain), = est.confidence_interval([0.0], bias_inputs=None)
    assert plain.bias_term == 0.0 and plain.bias_source == "none"


def test_ratio_regime_uses_theta(path):
    est = DoubleSmoothedVolatility(h=0.2, eps=0.2, regime="ratio_h").fit(path)
    small = DoubleSmoothedVolatility(h=0.2, eps=0.2).fit(path)
    (_, a), = est.confidence_interval([0.0], bias_inputs=None)
    (_, b), = small.confidence_interval([0.0], bias_inputs=None)
    assert a.std_error / b.std_error == pytest.approx(np.sqrt(26 / 35), rel=1e-9)


def test_local_time(path):
    est = DoubleSmoothedVolatility(h=0.1, eps=0.2).fit(path)
    assert est.local_time([0.0, 0.1]).shape == (2,)


def test_single_smoothed(path):
    single = SingleSmoothedVolatility(h=0.1).fit(path)
    assert single.predict([0.0])[0] == pytest.approx(0.43, rel=0.2)
    assert single.local_time([0.0])[0] > 0


def test_parameter_validation(path):
    with pytest.raises(ValueError):
        DoubleSmoothedVolatility(h=-1, eps=0.1).fit(path)
    with pytest.raises(ValueError):
        DoubleSmoothedVolatility(h=0.1, eps=0.1, regime="nope").fit(path)
    with pytest.raises(TypeError):
        DoubleSmoothedVolatility(h="wide", eps=0.1).fit(path)
