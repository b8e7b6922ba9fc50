"""Estimator classes with a scikit-learn style interface.

>>> est = DoubleSmoothedVolatility(h=0.1, eps=0.2, delta=0.01).fit(levels)
>>> est.predict([0.0, 0.1])
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_grid, check_path, check_positive
from .estimators import (
    EstimatorConfig,
    default_grid,
    double_smoothed_moments,
    local_time_hat,
    single_smoothed_m2,
)
from .exceptions import NumericalError
from .inference import (
    BiasInputs,
    Regime,
    bias_constant,
    confidence_interval,
    empirical_bias_inputs,
    optimal_bandwidth,
    rule_of_thumb_bandwidth,
)
from .kernels import kernel_by_name, theta_phi
from .neighbors import neighbor_index

__all__ = ["DoubleSmoothedVolatility", "SingleSmoothedVolatility", "plugin_bandwidths"]


def plugin_bandwidths(path, kernel="epanechnikov", phi=1.0, x=None, grid=None):
    """Data-driven ``(h, eps)`` from a pilot double-smoothed fit.

    The pilot uses rule-of-thumb bandwidths; the plug-in formula is then
    evaluated at ``x`` (default: the median level) with estimated fourth
    moment, local time and bias inputs. When the estimated bias bracket
    vanishes, or the pilot is too sparse, the rule-of-thumb values are
    returned and ``source`` says so.
    """
    kernel = kernel_by_name(kernel)
    phi = check_positive(phi, "phi")
    h0 = rule_of_thumb_bandwidth(path)
    eps0 = h0 / phi
    if x is None:
        x = float(np.median(path.values))
    pilot_grid = default_grid(path) if grid is None else check_grid(grid)
    if not pilot_grid.min() < x < pilot_grid.max():
        pilot_grid = np.union1d(pilot_grid, [x])
    pilot = double_smoothed_moments(path, EstimatorConfig(h0, eps0, kernel, grid=pilot_grid))
    at_x = double_smoothed_moments(path, EstimatorConfig(h0, eps0, kernel, grid=[x]))[0]
    info = {"x": x, "pilot_h": h0, "pilot_eps": eps0, "phi": phi}
    try:
        inputs = empirical_bias_inputs(pilot, path, kernel, h0, x)
        bracket = 0.5 * inputs.m2_d2 + inputs.m2_d1 * inputs.score
        h, eps = optimal_bandwidth(at_x.m4, bracket, at_x.local_time, kernel, phi)
        info.update(source="plug-in", bracket=bracket)
    except NumericalError as exc:
        h, eps = h0, eps0
        info.update(source="rule-of-thumb", reason=str(exc))
    return h, eps, info


class DoubleSmoothedVolatility(BaseEstimator):
    """Double-smoothed estimator of the conditional second moment ``M^2(x)``.

    Parameters
    ----------
    h : float or "auto"
        Outer kernel bandwidth.
    eps : float or "auto"
        Radius of the level neighbourhoods that are pooled at each sample.
    phi : float, optional
        Ratio ``h / eps``; used by ``"auto"`` bandwidths and the ``ratio_h``
        regime. Defaults to ``h / eps`` after fitting.
    kernel : str
        One of "epanechnikov", "quartic", "gaussian".
    delta : float, optional
        Sampling interval; required when ``fit`` gets a plain array and must
        agree with the path's own interval otherwise.
    engine : {"fast", "naive"}
    min_local_time : float, optional
        Points with smaller estimated local time are flagged unreliable.
    regime : {"small_h", "ratio_h", "stationary"}
        Asymptotic regime used by :meth:`confidence_interval`.
    """

    def __init__(
        self,
        h="auto",
        eps="auto",
        phi=None,
        kernel="epanechnikov",
        delta=None,
        engine="fast",
        min_local_time=None,
        regime="small_h",
    ):
        self.h = h
        self.eps = eps
        self.phi = phi
        self.kernel = kernel
        self.delta = delta
        self.engine = engine
        self.min_local_time = min_local_time
        self.regime = regime

    def fit(self, X, y=None):
        """Store the path and build the neighbour index.

        ``X`` is a ``SamplePath`` or a 1-D array of levels sampled every
        ``delta``.
        """
        path = check_path(X, self.delta)
        kernel = kernel_by_name(self.kernel)
        Regime.coerce(self.regime)
        self.bandwidth_info_ = {}
        if self.h == "auto" or self.eps == "auto":
            phi = 1.0 if self.phi is None else self.phi
            h, eps, info = plugin_bandwidths(path, kernel, phi)
            if self.h != "auto":
                h = check_positive(self.h, "h")
                eps = h / phi
            elif self.eps != "auto":
                eps = check_positive(self.eps, "eps")
                h = phi * eps
            self.bandwidth_info_ = info
        else:
            h = check_positive(self.h, "h")
            eps = check_positive(self.eps, "eps")
        self.path_ = path
        self.kernel_ = kernel
        self.h_ = h
        self.eps_ = eps
        self.phi_ = h / eps if self.phi is None else float(self.phi)
        self.engine_ = neighbor_index(path, eps, self.engine)
        self.n_increments_ = path.n
        return self

    def _config(self, grid):
        return EstimatorConfig(
            self.h_, self.eps_, self.kernel_, grid=grid, engine=self.engine, min_local_time=self.min_local_time
        )

    def moments(self, x=None):
        """Per-point estimates (``MomentEstimate``); default grid if ``x`` is None."""
        check_is_fitted(self, "path_")
        grid = None if x is None else np.sort(np.unique(check_grid(x)))
        return double_smoothed_moments(self.path_, self._config(grid), self.engine_)

    def _at(self, x, attr):
        check_is_fitted(self, "path_")
        x = check_grid(x)
        order = np.unique(x)
        values = {e.x: getattr(e, attr) for e in self.moments(order)}
        return np.array([values[float(v)] for v in x])

    def predict(self, x):
        """Estimated ``M^2`` at the points ``x``."""
        return self._at(x, "m2")

    def predict_m4(self, x):
        return self._at(x, "m4")

    def local_time(self, x):
        return local_time_hat(self.path_, self.kernel_, self.h_, check_grid(x))

    def theta(self) -> float:
        check_is_fitted(self, "path_")
        return theta_phi(self.kernel_, self.phi_) if Regime.coerce(self.regime) is Regime.RATIO_H else 1.0

    def confidence_interval(self, x=None, alpha=0.05, bias_inputs="empirical", h_density=None):
        """Bias-corrected normal intervals at ``x``.

        ``bias_inputs`` is ``"empirical"`` (finite differences on the default
        grid plus a kernel density score), ``None`` for no bias correction, a
        single ``BiasInputs`` or a callable ``x -> BiasInputs``. Unreliable or
        undefined points get NaN intervals.
        """
        check_is_fitted(self, "path_")
        regime = Regime.coerce(self.regime)
        estimates = self.moments(x)
        theta = self.theta()
        phi = self.phi_ if regime is Regime.RATIO_H else None
        pilot = None
        if bias_inputs == "empirical":
            pilot_grid = np.union1d(default_grid(self.path_), [e.x for e in estimates])
            pilot = self.moments(pilot_grid)
            h_density = h_density or rule_of_thumb_bandwidth(self.path_)
        out = []
        for est in estimates:
            gamma, source = 0.0, "none"
            try:
                if bias_inputs == "empirical":
                    inputs = empirical_bias_inputs(pilot, self.path_, self.kernel_, h_density, est.x)
                elif isinstance(bias_inputs, BiasInputs):
                    inputs = bias_inputs
                elif callable(bias_inputs):
                    inputs = bias_inputs(est.x)
                else:
                    inputs = None
                if inputs is not None:
                    gamma = bias_constant(inputs, regime, self.kernel_, phi)
                    source = inputs.source
            except NumericalError:
                gamma, source = 0.0, "none"
            try:
                if not est.reliable:
                    raise NumericalError("unreliable grid point")
                res = confidence_interval(
                    est.m2, est.m4, gamma, self.eps_, est.local_time, alpha, regime, theta,
                    x=est.x, horizon=self.path_.horizon, bias_source=source,
                )
            except NumericalError:
                res = None
            out.append((est, res))
        return out


class SingleSmoothedVolatility(BaseEstimator):
    """Kernel-weighted squared increments, one bandwidth."""

    def __init__(self, h=0.1, kernel="epanechnikov", delta=None):
        self.h = h
        self.kernel = kernel
        self.delta = delta

    def fit(self, X, y=None):
        self.path_ = check_path(X, self.delta)
        self.kernel_ = kernel_by_name(self.kernel)
        self.h_ = check_positive(self.h, "h")
        return self

    def predict(self, x):
        check_is_fitted(self, "path_")
        grid = check_grid(x)
        return np.array([m2 for _, m2, _ in single_smoothed_m2(self.path_, self.kernel_, self.h_, grid)])

    def local_time(self, x):
        check_is_fitted(self, "path_")
        return local_time_hat(self.path_, self.kernel_, self.h_, check_grid(x))
