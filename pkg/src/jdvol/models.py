"""Jump-diffusion model specifications and Euler simulation of sampled paths.

The simulated dynamics are

    dX = mu(X) dt + sigma(X) dW + int c(X-, y) (N(dt, dy) - lambda(X-) Pi(dy) dt)

i.e. ``mu`` is the drift of the compensated form and jumps are mean-corrected
by ``lambda(x) * E[c(x, Y)]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import exp1

from .exceptions import SimulationError

__all__ = [
    "ModelSpec",
    "SamplePath",
    "SimConfig",
    "simulate_path",
    "simulate_paths",
    "builtin_models",
    "make_model",
]

logger = logging.getLogger(__name__)

_COMPENSATOR_DRAWS = 10_000
_BLOCK = 4096


@dataclass(frozen=True)
class SamplePath:
    """Equally spaced observations ``X_0, X_delta, ..., X_{n delta}``."""

    values: np.ndarray
    delta: float

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("a sample path needs a 1-D array of at least 2 values")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample path values must be finite")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def n(self) -> int:
        """Number of increments."""
        return self.values.size - 1

    @property
    def horizon(self) -> float:
        return self.n * self.delta

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class SimConfig:
    x0: float
    n: int
    delta: float
    substeps: int = 10
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if int(self.substeps) < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")


def _const(value):
    def f(x):
        return np.full(np.shape(x), float(value))

    # lets the simulator skip the call and broadcast the scalar
    f.constant = float(value)
    return f


def _evaluator(func):
    value = getattr(func, "constant", None)
    if value is None:
        return func
    return lambda x: value


@dataclass
class ModelSpec:
    """Coefficients of a scalar jump-diffusion.

    All coefficient functions take and return numpy arrays. ``jump_sampler(x,
    rng, size)`` draws ``size`` jump sizes at the (scalar) state ``x``.
    Optional fields carry analytic ground truth used by tests and the Monte
    Carlo harness.
    """

    name: str
    drift: Callable
    diffusion: Callable
    jump_intensity: Callable
    jump_sampler: Callable
    jump_size_moment: Optional[Callable] = None
    stationary_density: Optional[Callable] = None
    speed_density: Optional[Callable] = None
    state_space: tuple = (-math.inf, math.inf)
    params: dict = field(default_factory=dict)
    m2_derivatives: Optional[Callable] = None
    score: Optional[Callable] = None

    def contains(self, x) -> bool:
        lo, hi = self.state_space
        return bool(lo < x < hi)

    def m2(self, x):
        """Analytic ``sigma^2 + lambda E[c^2]``; needs ``jump_size_moment``."""
        x = np.asarray(x, dtype=float)
        return self.diffusion(x) ** 2 + self._jump_moment(x, 2)

    def m4(self, x):
        """Analytic ``lambda E[c^4]``."""
        x = np.asarray(x, dtype=float)
        return self._jump_moment(x, 4)

    def _jump_moment(self, x, k):
        lam = self.jump_intensity(x)
        if self.jump_size_moment is None:
            if np.all(lam == 0):
                return np.zeros_like(lam)
            raise ValueError(f"model {self.name!r} has no analytic jump_size_moment")
        return lam * self.jump_size_moment(x, k)

    @property
    def has_analytic_moments(self) -> bool:
        return self.jump_size_moment is not None


class _Compensator:
    """E[c(x, Y)], analytic when available, else a cached Monte Carlo mean."""

    def __init__(self, model: ModelSpec, seed: int):
        self.model = model
        self.analytic = model.jump_size_moment is not None
        self.constant = getattr(model.jump_size_moment, "constant_moments", {}).get(1)
        self._cache: dict[float, float] = {}
        self._rng = np.random.default_rng([seed, 0x6A756D70])
        self._warned = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.constant is not None:
            return self.constant
        if self.analytic:
            return np.asarray(self.model.jump_size_moment(x, 1), dtype=float) * np.ones_like(x)
        if not self._warned:
            logger.warning(
                "model %r lacks jump_size_moment; compensator uses a %d-draw "
                "Monte Carlo mean (approximate)", self.model.name, _COMPENSATOR_DRAWS,
            )
            self._warned = True
        out = np.empty_like(x)
        for k, xv in enumerate(x.tolist()):
            mean = self._cache.get(xv)
            if mean is None:
                draws = self.model.jump_sampler(xv, self._rng, _COMPENSATOR_DRAWS)
                mean = self._cache[xv] = float(np.mean(draws))
            out[k] = mean
        return out


def _poisson_from_uniform(u: float, mean: float) -> int:
    """Inverse-CDF Poisson draw; only called when at least one jump occurs."""
    k = 0
    p = math.exp(-mean)
    cdf = p
    while u > cdf and k < 10_000:
        k += 1
        p *= mean / k
        cdf += p
    return k


def simulate_paths(model: ModelSpec, cfg: SimConfig, seeds: Sequence[int]) -> list:
    """Simulate one path per seed, advancing all of them in lockstep.

    Each path consumes its own ``numpy.random.Generator`` seeded by its seed,
    in a fixed order, so a path depends only on ``(model, cfg, seed)`` and not
    on which other seeds share the batch. ``cfg.seed`` is ignored.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        return []
    if not model.contains(cfg.x0):
        raise ValueError(f"x0={cfg.x0} lies outside the state space {model.state_space}")
    n, sub = int(cfg.n), int(cfg.substeps)
    dt = cfg.delta / sub
    sqdt = math.sqrt(dt)
    reps = len(seeds)
    rngs = [np.random.default_rng(s) for s in seeds]
    compensator = _Compensator(model, seeds[0])

    drift = _evaluator(model.drift)
    diffusion = _evaluator(model.diffusion)
    intensity = _evaluator(model.jump_intensity)
    const_lam = getattr(model.jump_intensity, "constant", None)
    jumps_possible = const_lam != 0.0
    const_rate = None if const_lam is None else const_lam * dt
    const_comp_zero = const_lam is not None and compensator.constant == 0.0

    out = np.empty((reps, n + 1))
    x = np.full(reps, float(cfg.x0))
    out[:, 0] = x
    total_steps = n * sub
    lo, hi = model.state_space
    bounded = lo > -math.inf or hi < math.inf
    exits = 0
    step = 0
    while step < total_steps:
        block = min(_BLOCK, total_steps - step)
        z = np.empty((block, reps))
        u = np.empty((block, reps))
        for r, rng in enumerate(rngs):
            z[:, r] = rng.standard_normal(block)
            u[:, r] = rng.random(block)
        z *= sqdt
        # a jump occurs iff u > exp(-lambda dt), i.e. -log(u) < lambda dt
        with np.errstate(divide="ignore"):
            neg_log_u = -np.log(u)
        if const_rate is not None:
            # constant intensity: find all jump candidates of the block at once
            hit_b, hit_r = np.nonzero(neg_log_u < const_rate)
            block_hits = {}
            for b, r in zip(hit_b.tolist(), hit_r.tolist()):
                block_hits.setdefault(b, []).append(r)
        for b in range(block):
            x_new = x + drift(x) * dt + diffusion(x) * z[b]
            if jumps_possible:
                lam = intensity(x)
                comp = compensator(x)
                if not const_comp_zero:
                    x_new -= lam * comp * dt
                mean_jumps = lam * dt
                if const_rate is not None:
                    hits = block_hits.get(b, ())
                else:
                    hits = np.flatnonzero(neg_log_u[b] < mean_jumps).tolist()
                if hits:
                    mean_jumps = np.broadcast_to(mean_jumps, x.shape)
                    for r in hits:
                        count = _poisson_from_uniform(u[b, r], mean_jumps[r])
                        if count:
                            sizes = model.jump_sampler(x[r], rngs[r], count)
                            x_new[r] += float(np.sum(sizes))
            x = x_new
            step += 1
            if step % sub == 0:
                if not np.all(np.isfinite(x)):
                    bad = int(np.flatnonzero(~np.isfinite(x))[0])
                    raise SimulationError(
                        f"non-finite state near step {step} (seed {seeds[bad]})", step=step
                    )
                out[:, step // sub] = x
                if bounded:
                    exits += int(np.count_nonzero((x <= lo) | (x >= hi)))
    if exits:
        logger.warning("%d recorded states left the state space %s", exits, model.state_space)
    return [SamplePath(row, cfg.delta) for row in out]


def simulate_path(model: ModelSpec, cfg: SimConfig) -> SamplePath:
    """Euler scheme for the compensated jump-diffusion; deterministic in ``cfg.seed``."""
    return simulate_paths(model, cfg, [cfg.seed])[0]


# --- built-in catalog -------------------------------------------------------


def _gaussian_jumps(scale: float, mean: float = 0.0):
    def sampler(x, rng, size):
        return mean + scale * rng.standard_normal(size)

    def moment(x, k):
        # raw moments of N(mean, scale^2)
        m, s = mean, scale
        table = {
            0: 1.0,
            1: m,
            2: m * m + s * s,
            3: m**3 + 3 * m * s * s,
            4: m**4 + 6 * m * m * s * s + 3 * s**4,
        }
        if k not in table:
            raise ValueError(f"jump moment of order {k} not available")
        return np.full(np.shape(x), table[k])

    moment.constant_moments = {1: float(mean)}
    return sampler, moment


def _ou_jump_density(kappa, mean, sigma, lam, jump_sd):
    """Stationary density of an OU process driven by Brownian motion plus
    compound Poisson N(0, jump_sd^2) jumps, by Fourier inversion of

        log phi(u) = i u mean - sigma^2 u^2 / (4 kappa) - (lam / 2 kappa) Ein(jump_sd^2 u^2 / 2)
    """

    def ein(z):
        z = np.asarray(z, dtype=float)
        small = z < 1e-8
        zs = np.where(small, 1.0, z)
        val = exp1(zs) + np.log(zs) + np.euler_gamma
        return np.where(small, z, val)

    def log_cf_real(u):
        return -(sigma**2) * u * u / (4 * kappa) - lam / (2 * kappa) * ein(0.5 * (jump_sd * u) ** 2)

    if sigma > 0:
        umax = math.sqrt(4 * kappa * 40.0) / sigma
    else:
        umax = 200.0 / max(jump_sd, 1e-12)

    def density(x):
        shape = np.shape(x)
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        res = np.empty_like(x)
        for k, xv in enumerate(x):
            val, _ = integrate.quad(
                lambda u: math.exp(log_cf_real(u)) * math.cos(u * (xv - mean)),
                0.0, umax, limit=400, epsabs=1e-12,
            )
            res[k] = val / math.pi
        return res.reshape(shape)

    return density


def _ou_jump(kappa=1.0, mean=0.0, sigma=0.5, lam=1.0, jump_sd=0.2, name="ou-jump"):
    sampler, moment = _gaussian_jumps(jump_sd)
    var = (sigma**2 + lam * jump_sd**2) / (2 * kappa)

    def drift(x):
        return kappa * (mean - np.asarray(x, dtype=float))

    if lam > 0:
        density = _ou_jump_density(kappa, mean, sigma, lam, jump_sd)
    else:
        def density(x):
            x = np.asarray(x, dtype=float)
            return np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)

    def derivs(x):
        z = np.zeros(np.shape(x))
        return z, z

    def score(x):
        # Gaussian approximation with the exact stationary variance; only
        # enters bias constants multiplied by (M^2)' which is 0 here
        return -(np.asarray(x, dtype=float) - mean) / var

    return ModelSpec(
        name=name,
        drift=drift,
        diffusion=_const(sigma),
        jump_intensity=_const(lam),
        jump_sampler=sampler,
        jump_size_moment=moment,
        stationary_density=density,
        speed_density=density,
        params=dict(kappa=kappa, mean=mean, sigma=sigma, lam=lam, jump_sd=jump_sd),
        m2_derivatives=derivs,
        score=score,
    )


def _ou_pure(kappa=1.0, mean=0.0, sigma=0.5):
    model = _ou_jump(kappa=kappa, mean=mean, sigma=sigma, lam=0.0, jump_sd=0.0, name="ou-pure")
    model.params = dict(kappa=kappa, mean=mean, sigma=sigma)
    return model


def _statejump(kappa=1.0, mean=0.0, sigma=0.5, lam0=2.0, jump_sd=0.3):
    sampler, moment = _gaussian_jumps(jump_sd)

    def intensity(x):
        x = np.asarray(x, dtype=float)
        return lam0 / (1.0 + x * x)

    def drift(x):
        return kappa * (mean - np.asarray(x, dtype=float))

    def derivs(x):
        # M^2(x) = sigma^2 + lam0 s^2 / (1 + x^2)
        x = np.asarray(x, dtype=float)
        a = lam0 * jump_sd**2
        d1 = -2 * a * x / (1 + x * x) ** 2
        d2 = a * (6 * x * x - 2) / (1 + x * x) ** 3
        return d1, d2

    return ModelSpec(
        name="statejump",
        drift=drift,
        diffusion=_const(sigma),
        jump_intensity=intensity,
        jump_sampler=sampler,
        jump_size_moment=moment,
        params=dict(kappa=kappa, mean=mean, sigma=sigma, lam0=lam0, jump_sd=jump_sd),
        m2_derivatives=derivs,
    )


def _bm_jump(sigma=0.5, lam=1.0, jump_sd=0.2):
    sampler, moment = _gaussian_jumps(jump_sd)

    def derivs(x):
        z = np.zeros(np.shape(x))
        return z, z

    return ModelSpec(
        name="bm-jump",
        drift=_const(0.0),
        diffusion=_const(sigma),
        jump_intensity=_const(lam),
        jump_sampler=sampler,
        jump_size_moment=moment,
        params=dict(sigma=sigma, lam=lam, jump_sd=jump_sd),
        m2_derivatives=derivs,
    )


_FACTORIES = {
    "ou-jump": _ou_jump,
    "ou-pure": _ou_pure,
    "statejump": _statejump,
    "bm-jump": _bm_jump,
}


def make_model(name: str, **params) -> ModelSpec:
    """Instantiate a catalog model, overriding default parameters."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {', '.join(sorted(_FACTORIES))}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for model {name!r}: {exc}") from None


def builtin_models() -> dict:
    """Catalog of illustrative models with their default parameters.

    These are example processes for exercising the estimators; none of them is
    taken from an empirical study.
    """
    return {name: factory() for name, factory in _FACTORIES.items()}
