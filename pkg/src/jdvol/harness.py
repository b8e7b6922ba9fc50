"""Monte Carlo experiments for the double-smoothed volatility estimator.

An :class:`ExperimentPlan` describes a model, a ladder of sample sizes and a
bandwidth schedule. :func:`run_experiment` simulates independent paths per
rung, estimates ``M^2`` at one level and summarises bias, spread, Gaussian
fit of the self-normalised errors and interval coverage. :func:`compare_with_bn`
pits the double-smoothed estimator against the single-smoothed one on
identical paths.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .estimators import EstimatorConfig, double_smoothed_moments, single_smoothed_m2
from .inference import Regime, analytic_bias_inputs, bias_constant, confidence_interval
from .kernels import kernel_by_name, theta_phi
from .models import SamplePath, SimConfig, make_model, simulate_paths

__all__ = [
    "ExperimentPlan",
    "RungReport",
    "ExperimentReport",
    "run_experiment",
    "compare_with_bn",
    "path_modulus_diagnostic",
    "ks_normal",
    "worker_count",
]

log = logging.getLogger(__name__)

REGIMES = ("small_h", "ratio_h", "stationary", "bn_comparison")

# memory cap for one lockstep simulation batch
_BATCH_BYTES = 128 * 2**20


def worker_count() -> int:
    """Worker cap from ``JDVOL_THREADS``; all CPUs when unset."""
    raw = os.environ.get("JDVOL_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"JDVOL_THREADS must be an integer, got {raw!r}") from None
        if value < 1:
            raise ValueError("JDVOL_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


@dataclass
class ExperimentPlan:
    """Monte Carlo design.

    Bandwidth schedule per rung: ``eps = eps_scale * n ** -eps_power`` unless
    ``eps_values`` is given; then ``h = h_scale * eps ** h_power`` for
    ``small_h``/``stationary`` and ``h = phi * eps`` for ``ratio_h``, unless
    ``h_values`` is given. ``bn_comparison`` plans use ``h_values``/``eps_values``
    for the double-smoothed estimator and ``h_bn`` for the single-smoothed one.
    """

    model: str
    ladder: list
    regime: str = "small_h"
    replications: int = 100
    grid_point: float = 0.0
    seed_base: int = 0
    model_params: dict = field(default_factory=dict)
    kernel: str = "epanechnikov"
    eps_scale: float = 1.0
    eps_power: float = 1.0 / 6.0
    h_scale: float = 1.0
    h_power: float = 1.5
    phi: Optional[float] = None
    h_values: Optional[list] = None
    eps_values: Optional[list] = None
    h_bn: Optional[list] = None
    x0: Optional[float] = None
    substeps: int = 10
    alpha: float = 0.05
    bias_exponent: float = 5.0
    labels: tuple = ("double", "single")
    name: str = ""

    def __post_init__(self):
        self.ladder = [(int(n), float(d)) for n, d in self.ladder]
        if not self.ladder:
            raise ValueError("the ladder must contain at least one (n, delta) rung")
        for n, d in self.ladder:
            if n < 2 or not d > 0:
                raise ValueError(f"invalid rung (n={n}, delta={d})")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; choose from {REGIMES}")
        if int(self.replications) < 1:
            raise ValueError("replications must be >= 1")
        self.replications = int(self.replications)
        if self.regime == "ratio_h" and self.phi is None and self.h_values is None:
            raise ValueError("a ratio_h plan needs phi (or explicit h_values)")
        for name in ("h_values", "eps_values", "h_bn"):
            vals = getattr(self, name)
            if vals is not None:
                vals = [float(v) for v in vals]
                if len(vals) != len(self.ladder):
                    raise ValueError(f"{name} needs one value per rung")
                setattr(self, name, vals)
        if self.regime == "bn_comparison" and self.h_bn is None:
            raise ValueError("a bn_comparison plan needs h_bn")
        kernel_by_name(self.kernel)
        self.labels = tuple(self.labels)

    def bandwidths(self, rung: int) -> tuple:
        """``(h, eps)`` for the double-smoothed estimator on a rung."""
        n, _ = self.ladder[rung]
        eps = self.eps_values[rung] if self.eps_values else self.eps_scale * n ** -self.eps_power
        if self.h_values:
            h = self.h_values[rung]
        elif self.regime == "ratio_h":
            h = self.phi * eps
        else:
            h = self.h_scale * eps**self.h_power
        return h, eps

    def build_model(self):
        return make_model(self.model, **self.model_params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ladder"] = [list(r) for r in self.ladder]
        d["labels"] = list(self.labels)
        return d


@dataclass
class RungReport:
    n: int
    delta: float
    h: float
    eps: float
    replications: int
    valid: int
    bias: float
    sd: float
    rmse: float
    mean_local_time: float
    ks_stat: float
    ks_pvalue: float
    coverage: float
    z_mean: float
    z_sd: float
    bias_power_diag: float
    modulus_median: float


@dataclass
class ExperimentReport:
    plan: dict
    per_rung: list
    rate_fit: dict
    comparison: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "plan": self.plan,
            "per_rung": [asdict(r) for r in self.per_rung],
            "rate_fit": self.rate_fit,
            "comparison": self.comparison,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)


def ks_normal(z) -> tuple:
    """One-sample Kolmogorov-Smirnov test against N(0, 1)."""
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        return math.nan, math.nan
    res = stats.kstest(z, "norm")
    return float(res.statistic), float(res.pvalue)


def path_modulus_diagnostic(path: SamplePath) -> float:
    """``max |X_{i+1} - X_i| / sqrt(delta log(1/delta))``.

    Grid proxy for the continuity modulus of the path; stays O(1) for
    diffusions and blows up with jumps.
    """
    if path.n < 2:
        raise ValueError("need at least 2 increments")
    d = path.delta
    if d >= 1.0:
        raise ValueError("the modulus normalisation needs delta < 1")
    return float(np.max(np.abs(np.diff(path.values))) / math.sqrt(d * math.log(1.0 / d)))


def _batches(reps: int, n: int):
    size = max(1, min(reps, _BATCH_BYTES // (8 * (n + 1))))
    for start in range(0, reps, size):
        yield range(start, min(start + size, reps))


def _map(func, items):
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _moments_at(plan, rung, model, x0):
    """Yield per-replication ``(path, estimate)`` in replication order."""
    n, delta = plan.ladder[rung]
    h, eps = plan.bandwidths(rung)
    cfg = EstimatorConfig(h, eps, plan.kernel, grid=[plan.grid_point])
    sim = SimConfig(x0, n, delta, plan.substeps)
    for batch in _batches(plan.replications, n):
        seeds = [plan.seed_base + 1_000_003 * rung + r for r in batch]
        paths = simulate_paths(model, sim, seeds)
        estimates = _map(lambda p: double_smoothed_moments(p, cfg)[0], paths)
        for p, e in zip(paths, estimates):
            yield p, e


def _require_truth(model, x):
    if not model.has_analytic_moments:
        raise ValueError(
            f"model {model.name!r} lacks analytic jump moments; supply jump_size_moment "
            "so M^2 and M^4 are known"
        )
    return float(model.m2(x)), float(model.m4(x))


def _rate_fit(per_rung) -> dict:
    """Slope of log RMSE on log(eps * mean L); needs distinct sample sizes."""
    if len({r.n for r in per_rung}) < len(per_rung):
        return {"slope": math.nan, "stderr": math.nan, "intercept": math.nan}
    xs = np.array([math.log(r.eps * r.mean_local_time) for r in per_rung if r.rmse > 0])
    ys = np.array([math.log(r.rmse) for r in per_rung if r.rmse > 0])
    if xs.size < 2 or np.ptp(xs) == 0:
        return {"slope": math.nan, "stderr": math.nan, "intercept": math.nan}
    if xs.size == 2:
        slope = float((ys[1] - ys[0]) / (xs[1] - xs[0]))
        return {"slope": slope, "stderr": math.nan, "intercept": float(ys[0] - slope * xs[0])}
    fit = stats.linregress(xs, ys)
    return {"slope": float(fit.slope), "stderr": float(fit.stderr), "intercept": float(fit.intercept)}


def _x0(plan, model):
    if plan.x0 is not None:
        return float(plan.x0)
    return float(model.params.get("mean", plan.grid_point))


def run_experiment(plan: ExperimentPlan) -> ExperimentReport:
    """Simulate, estimate and summarise every rung of ``plan``.

    Errors are standardised per path as
    ``sqrt(eps * L) * (m2_hat - M2 - eps^2 * Gamma) / sqrt(theta * M4 / 2)``
    with analytic ``M2``, ``M4`` and ``Gamma`` and the path's own local time
    ``L`` (in the stationary regime ``sqrt(T * eps)`` and ``M4 / p(x)``).
    """
    if plan.regime == "bn_comparison":
        return compare_with_bn(plan)
    model = plan.build_model()
    x = plan.grid_point
    m2_true, m4_true = _require_truth(model, x)
    kernel = kernel_by_name(plan.kernel)
    regime = Regime.coerce(plan.regime)
    inputs = analytic_bias_inputs(model, x)
    density = None
    if regime is Regime.STATIONARY:
        if model.stationary_density is None:
            raise ValueError(f"model {model.name!r} has no stationary density")
        density = float(np.asarray(model.stationary_density(x)).ravel()[0])
    x0 = _x0(plan, model)

    per_rung = []
    for rung, (n, delta) in enumerate(plan.ladder):
        h, eps = plan.bandwidths(rung)
        if regime is Regime.RATIO_H:
            phi = h / eps
            theta = theta_phi(kernel, phi)
            gamma = bias_constant(inputs, regime, kernel, phi)
        else:
            theta = 1.0
            gamma = bias_constant(inputs, Regime.SMALL_H, kernel)
        errors, z, covered, lts, mods = [], [], [], [], []
        horizon = n * delta
        for path, est in _moments_at(plan, rung, model, x0):
            mods.append(path_modulus_diagnostic(path) if delta < 1 else math.nan)
            lts.append(est.local_time)
            if not (est.reliable and math.isfinite(est.m2)):
                continue
            err = est.m2 - m2_true
            errors.append(err)
            centred = err - eps * eps * gamma
            if m4_true == 0:
                pass  # no jumps: the standardisation is undefined
            elif regime is Regime.STATIONARY:
                z.append(math.sqrt(horizon * eps) * centred / math.sqrt(0.5 * theta * m4_true / density))
            else:
                z.append(math.sqrt(eps * est.local_time) * centred / math.sqrt(0.5 * theta * m4_true))
            ci = confidence_interval(
                est.m2, est.m4, gamma, eps, est.local_time, plan.alpha, regime, theta, x=x, horizon=horizon,
                bias_source="analytic",
            )
            covered.append(ci.ci_low <= m2_true <= ci.ci_high)
        errors = np.array(errors)
        z = np.array(z)
        mean_lt = float(np.mean(lts))
        if errors.size:
            bias = float(errors.mean())
            sd = float(errors.std())
            rmse = math.sqrt(bias * bias + sd * sd)
        else:
            bias = sd = rmse = math.nan
        ks_stat, ks_p = ks_normal(z)
        per_rung.append(
            RungReport(
                n=n,
                delta=delta,
                h=h,
                eps=eps,
                replications=plan.replications,
                valid=int(errors.size),
                bias=bias,
                sd=sd,
                rmse=rmse,
                mean_local_time=mean_lt,
                ks_stat=ks_stat,
                ks_pvalue=ks_p,
                coverage=float(np.mean(covered)) if covered else math.nan,
                z_mean=float(z.mean()) if z.size else math.nan,
                z_sd=float(z.std()) if z.size else math.nan,
                bias_power_diag=eps**plan.bias_exponent * mean_lt,
                modulus_median=float(np.nanmedian(mods)) if mods else math.nan,
            )
        )
    _check_bias_power(per_rung, plan.bias_exponent)
    return ExperimentReport(plan.to_dict(), per_rung, _rate_fit(per_rung))


def _check_bias_power(per_rung, exponent):
    """Warn when ``eps**exponent * L`` grows along the ladder.

    The limit theory needs it bounded; steady growth means the bias term will
    eventually dominate the standardised errors.
    """
    diag = [r.bias_power_diag for r in per_rung]
    if len(diag) > 1 and all(b > a for a, b in zip(diag, diag[1:])) and diag[-1] > 2 * diag[0]:
        log.warning("eps^%g * L grows along the ladder (%s); the bias may dominate", exponent, diag)


def compare_with_bn(plan: ExperimentPlan) -> ExperimentReport:
    """Empirical MSE of the double- vs single-smoothed estimator on shared paths.

    ``comparison["ratio"]`` is MSE(first label) / MSE(second label); with the
    default labels that is double / single.
    """
    if plan.regime != "bn_comparison":
        raise ValueError("compare_with_bn needs a plan with regime 'bn_comparison'")
    if plan.h_bn is None:
        raise ValueError("bn_comparison plan needs h_bn")
    model = plan.build_model()
    x = plan.grid_point
    m2_true, _ = _require_truth(model, x)
    kernel = kernel_by_name(plan.kernel)
    x0 = _x0(plan, model)

    per_rung, comparisons = [], []
    for rung, (n, delta) in enumerate(plan.ladder):
        h, eps = plan.bandwidths(rung)
        h_bn = plan.h_bn[rung]
        err_d, err_s, lts = [], [], []
        for path, est in _moments_at(plan, rung, model, x0):
            _, m2_bn, _ = single_smoothed_m2(path, kernel, h_bn, [x])[0]
            lts.append(est.local_time)
            if math.isfinite(est.m2) and math.isfinite(m2_bn):
                err_d.append(est.m2 - m2_true)
                err_s.append(m2_bn - m2_true)
        err_d, err_s = np.array(err_d), np.array(err_s)
        mse = {"double": float(np.mean(err_d**2)), "single": float(np.mean(err_s**2))}
        first, second = plan.labels
        ratio = mse[first] / mse[second] if mse[second] > 0 else math.nan
        comparisons.append(
            {
                "n": n,
                "labels": [first, second],
                "mse": [mse[first], mse[second]],
                "ratio": ratio,
                "h": h,
                "eps": eps,
                "h_bn": h_bn,
            }
        )
        bias = float(err_d.mean()) if err_d.size else math.nan
        sd = float(err_d.std()) if err_d.size else math.nan
        per_rung.append(
            RungReport(
                n=n, delta=delta, h=h, eps=eps, replications=plan.replications, valid=int(err_d.size),
                bias=bias, sd=sd, rmse=math.sqrt(bias * bias + sd * sd),
                mean_local_time=float(np.mean(lts)), ks_stat=math.nan, ks_pvalue=math.nan,
                coverage=math.nan, z_mean=math.nan, z_sd=math.nan,
                bias_power_diag=eps**plan.bias_exponent * float(np.mean(lts)), modulus_median=math.nan,
            )
        )
    last = comparisons[-1]
    comparison = dict(last, per_rung=comparisons)
    return ExperimentReport(plan.to_dict(), per_rung, _rate_fit(per_rung), comparison)
