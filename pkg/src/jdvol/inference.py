"""Bias constants, standard errors, confidence intervals and plug-in bandwidths."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .exceptions import NumericalError
from .kernels import kernel_by_name, theta_phi
from .models import SamplePath

__all__ = [
    "Regime",
    "BiasInputs",
    "InferenceResult",
    "bias_bracket",
    "bias_constant",
    "std_error",
    "normal_quantile",
    "confidence_interval",
    "optimal_bandwidth",
    "rule_of_thumb_bandwidth",
    "empirical_bias_inputs",
    "analytic_bias_inputs",
    "kde_score",
    "bn_plugin_bandwidth",
]


class Regime(str, enum.Enum):
    SMALL_H = "small_h"  # h = o(eps)
    RATIO_H = "ratio_h"  # h / eps -> phi
    STATIONARY = "stationary"

    @classmethod
    def coerce(cls, value) -> "Regime":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(
                f"unknown regime {value!r}; choose from {[r.value for r in cls]}"
            ) from None


@dataclass(frozen=True)
class BiasInputs:
    m2_d1: float
    m2_d2: float
    score: float
    source: str = "analytic"

    def __post_init__(self):
        for name in ("m2_d1", "m2_d2", "score"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.source not in ("analytic", "empirical"):
            raise ValueError(f"source must be 'analytic' or 'empirical', got {self.source!r}")


@dataclass(frozen=True)
class InferenceResult:
    x: float
    m2_corrected: float
    bias_term: float
    std_error: float
    ci_low: float
    ci_high: float
    regime: Regime
    alpha: float
    bias_source: str = "none"


def bias_bracket(inputs: BiasInputs) -> float:
    """``(M^2)''/2 + (M^2)' s'/s``."""
    return 0.5 * inputs.m2_d2 + inputs.m2_d1 * inputs.score


def bias_constant(inputs: BiasInputs, regime, kernel="epanechnikov", phi: Optional[float] = None) -> float:
    """Leading bias coefficient; the bias itself is ``eps**2`` times this.

    ``small_h`` (and ``stationary``, which shares it) uses ``1/3 * bracket``;
    ``ratio_h`` uses ``(K2 phi^2 + 1/3) * bracket``.
    """
    regime = Regime.coerce(regime)
    bracket = bias_bracket(inputs)
    if regime is Regime.RATIO_H:
        if phi is None:
            raise ValueError("the ratio_h regime needs phi")
        if not phi > 0:
            raise ValueError(f"phi must be positive, got {phi!r}")
        return (kernel_by_name(kernel).k2 * phi * phi + 1.0 / 3.0) * bracket
    if phi is not None and regime is Regime.SMALL_H:
        raise ValueError("phi is only meaningful in the ratio_h regime")
    return bracket / 3.0


def std_error(m4_hat, eps, local_time, regime, theta=1.0, *, horizon=None) -> float:
    """Asymptotic standard error of the double-smoothed second moment.

    ``sqrt(theta * m4 / 2) / sqrt(eps * local_time)``. In the stationary regime
    the normaliser is ``horizon * eps`` and the variance is divided by the
    density estimate ``local_time / horizon``.
    """
    regime = Regime.coerce(regime)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    if m4_hat < 0 or not math.isfinite(m4_hat):
        raise NumericalError(f"fourth-moment estimate must be finite and >= 0, got {m4_hat!r}")
    if not (local_time > 0 and math.isfinite(local_time)):
        raise NumericalError("nonpositive local time: grid point is unreliable")
    if regime is Regime.STATIONARY:
        if horizon is None or not horizon > 0:
            raise ValueError("the stationary regime needs the observation horizon n * delta")
        density = local_time / horizon
        return math.sqrt(0.5 * theta * m4_hat / density) / math.sqrt(horizon * eps)
    return math.sqrt(0.5 * theta * m4_hat) / math.sqrt(eps * local_time)


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")
    return float(ndtri(p))


def confidence_interval(
    m2_hat, m4_hat, bias, eps, local_time, alpha=0.05, regime="small_h", theta=1.0, *,
    x=math.nan, horizon=None, bias_source="none",
) -> InferenceResult:
    """Bias-corrected normal interval ``m2 - eps^2 * bias +- z * se``.

    ``bias_source`` ("analytic", "empirical" or "none") is recorded on the result.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    regime = Regime.coerce(regime)
    se = std_error(m4_hat, eps, local_time, regime, theta, horizon=horizon)
    bias_term = eps * eps * bias
    center = m2_hat - bias_term
    half = normal_quantile(1.0 - alpha / 2.0) * se
    return InferenceResult(
        x=float(x),
        m2_corrected=center,
        bias_term=bias_term,
        std_error=se,
        ci_low=center - half,
        ci_high=center + half,
        regime=regime,
        alpha=float(alpha),
        bias_source=bias_source,
    )


def optimal_bandwidth(m4_hat, bracket, local_time, kernel="epanechnikov", phi=1.0, theta=None):
    """Plug-in outer bandwidth and the implied neighbourhood radius.

    ``h = phi * [ (theta * m4 / 2) / (local_time * (K2 phi^2 + 1/3)^2 * bracket^2) ]^(1/5)``
    and ``eps = h / phi``. Raises ``NumericalError`` when ``bracket == 0``,
    where the criterion has no interior minimiser.
    """
    kernel = kernel_by_name(kernel)
    if not phi > 0:
        raise ValueError(f"phi must be positive, got {phi!r}")
    if bracket == 0 or not math.isfinite(bracket):
        raise NumericalError("undefined plug-in optimum (zero bias bracket); use rule-of-thumb")
    if not local_time > 0:
        raise NumericalError("nonpositive local time")
    if theta is None:
        theta = theta_phi(kernel, phi)
    bias_factor = kernel.k2 * phi * phi + 1.0 / 3.0
    core = (0.5 * theta * m4_hat) / (local_time * bias_factor**2 * bracket**2)
    h = phi * core**0.2
    return h, h / phi


def rule_of_thumb_bandwidth(path: SamplePath) -> float:
    """``1.06 * sd * n^(-1/5)`` on the sampled levels (a density heuristic)."""
    sd = float(np.std(path.values))
    if sd == 0:
        raise NumericalError("constant path: no scale for a rule-of-thumb bandwidth")
    return 1.06 * sd * path.n ** -0.2


def kde_score(levels, h: float, x) -> float:
    """Log-derivative of a Gaussian kernel density estimate at ``x``."""
    u = (np.asarray(levels, dtype=float) - x) / h
    w = np.exp(-0.5 * u * u)
    total = w.sum()
    if total <= 0:
        raise NumericalError(f"no sample mass near x={x}")
    # f'(x)/f(x) with f = mean of phi((X - x)/h)/h
    return float(np.dot(w, u) / total / h)


def _central_differences(xs, ys, x):
    """First and second derivative at ``x`` from the three grid points around it.

    Uses the quadratic through the nearest three points (exact for quadratics,
    second order on smooth functions).
    """
    k = int(np.clip(np.argmin(np.abs(xs - x)), 1, xs.size - 2))
    x0, x1, x2 = xs[k - 1], xs[k], xs[k + 1]
    y0, y1, y2 = ys[k - 1], ys[k], ys[k + 1]
    d01 = (y1 - y0) / (x1 - x0)
    d12 = (y2 - y1) / (x2 - x1)
    second = 2.0 * (d12 - d01) / (x2 - x0)
    # derivative of the interpolating quadratic at x
    first = d01 + 0.5 * second * ((x - x0) + (x - x1))
    return first, second


def empirical_bias_inputs(grid_estimates: Sequence, path: SamplePath, kernel, h_density: float, x: float) -> BiasInputs:
    """Plug-in derivatives of the second moment and the density score at ``x``."""
    pts = [e for e in grid_estimates if e.reliable and math.isfinite(e.m2)]
    xs = np.array([e.x for e in pts])
    ys = np.array([e.m2 for e in pts])
    if xs.size < 5 or not (xs.min() < x < xs.max()):
        raise NumericalError(
            f"need at least 5 reliable grid points bracketing x={x}, have {xs.size}"
        )
    d1, d2 = _central_differences(xs, ys, float(x))
    score = kde_score(path.values[1:], h_density, float(x))
    return BiasInputs(float(d1), float(d2), score, "empirical")


def analytic_bias_inputs(model, x: float) -> BiasInputs:
    """Bias inputs from a model's analytic derivatives and density score."""
    if model.m2_derivatives is None:
        raise ValueError(f"model {model.name!r} has no analytic M^2 derivatives")
    d1, d2 = (float(np.asarray(v)) for v in model.m2_derivatives(np.asarray(float(x))))
    if d1 == 0.0:
        score = 0.0  # multiplies a zero derivative
    elif model.score is not None:
        score = float(np.asarray(model.score(np.asarray(float(x)))))
    else:
        raise ValueError(f"model {model.name!r} has no analytic density score")
    return BiasInputs(d1, d2, score, "analytic")


def bn_plugin_bandwidth(m4_hat, bracket, local_time, kernel="epanechnikov") -> float:
    """Plug-in bandwidth for the single-smoothed estimator.

    Minimises ``h^4 bracket^2 + K2 M4 / (h L)``, the mean squared error implied
    by that estimator's limit law (variance ``K2 M4``, bias ``h^2 bracket``):
    ``h = (K2 M4 / (4 bracket^2 L))^(1/5)``.
    """
    kernel = kernel_by_name(kernel)
    if bracket == 0 or not math.isfinite(bracket):
        raise NumericalError("undefined plug-in optimum (zero bias bracket)")
    if not local_time > 0:
        raise NumericalError("nonpositive local time")
    return (kernel.k2 * m4_hat / (4.0 * bracket**2 * local_time)) ** 0.2
