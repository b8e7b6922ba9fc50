"""Local time, double-smoothed second/fourth moment and single-smoothed estimators.

Index conventions for a path ``X_0 .. X_n``:

* the outer kernel sum runs over ``i = 1 .. n``;
* the inner neighbor sums run over ``j = 1 .. n-1`` (the forward increment
  ``X_{j+1} - X_j`` must exist);
* the single-smoothed estimator uses ``i = 1 .. n-1`` in numerator and
  denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kernels import KernelSpec, kernel_by_name
from .models import SamplePath
from .neighbors import neighbor_index

__all__ = [
    "EstimatorConfig",
    "MomentEstimate",
    "local_time_hat",
    "double_smoothed_moments",
    "single_smoothed_m2",
    "default_grid",
    "default_min_local_time",
]


@dataclass(frozen=True)
class EstimatorConfig:
    h: float
    eps: float
    kernel: KernelSpec = field(default_factory=lambda: kernel_by_name("epanechnikov"))
    grid: Optional[Sequence[float]] = None
    engine: str = "fast"
    min_local_time: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kernel", kernel_by_name(self.kernel))
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h!r}")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be positive, got {self.eps!r}")
        if self.engine not in ("naive", "fast"):
            raise ValueError(f"engine must be 'naive' or 'fast', got {self.engine!r}")
        if self.grid is not None:
            grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
            if grid.size == 0:
                raise ValueError("evaluation grid is empty")
            if np.any(np.diff(grid) <= 0):
                raise ValueError("evaluation grid must be strictly increasing")
            object.__setattr__(self, "grid", grid)
        if self.min_local_time is not None and self.min_local_time < 0:
            raise ValueError("min_local_time must be nonnegative")

    @property
    def phi(self) -> float:
        return self.h / self.eps


@dataclass(frozen=True)
class MomentEstimate:
    x: float
    m2: float
    m4: float
    local_time: float
    neighbor_stats: tuple  # (min, median, max) neighbor count over contributing i
    reliable: bool


def _as_path(path) -> SamplePath:
    if isinstance(path, SamplePath):
        return path
    raise TypeError(f"expected a SamplePath, got {type(path).__name__}")


def default_grid(path: SamplePath, size: int = 25) -> np.ndarray:
    """Equally spaced points between the 5th and 95th percentile of the levels."""
    lo, hi = np.percentile(path.values, [5.0, 95.0])
    if hi <= lo:
        return np.array([float(lo)])
    return np.linspace(lo, hi, size)


def default_min_local_time(kernel: KernelSpec, h: float, delta: float) -> float:
    """About ten effective observations: ``10 * delta * K(0) / h``."""
    return 10.0 * delta * kernel.peak / h


def local_time_hat(path: SamplePath, kernel, h: float, x):
    """Kernel estimate ``(delta / h) * sum_{i=1}^{n} K((X_i - x) / h)``.

    Returns a float for scalar ``x`` and an array otherwise.
    """
    path = _as_path(path)
    kernel = kernel_by_name(kernel)
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    levels = path.values[1:]
    xs = np.asarray(x, dtype=float)
    out = np.array([kernel((levels - xv) / h).sum() for xv in np.atleast_1d(xs)])
    out *= path.delta / h
    return float(out[0]) if xs.ndim == 0 else out


def _kernel_rows(levels, grid, kernel, h):
    """Per grid point: ``(x, kernel sum, indices with K > 0, their weights)``."""
    rows = []
    for xv in grid:
        w = kernel((levels - xv) / h)
        nz = np.flatnonzero(w > 0)
        rows.append((float(xv), float(w.sum()), nz, w[nz]))
    return rows


def double_smoothed_moments(path: SamplePath, cfg: EstimatorConfig, engine=None) -> list:
    """Double-smoothed estimates of the second and fourth infinitesimal moments.

    At each sampled level ``X_i`` the squared (quartic) forward increments of
    all ``eps``-neighbours are averaged and divided by ``delta``; these local
    averages are then kernel-smoothed around each grid point with bandwidth
    ``h``. Points with no kernel mass, or whose local time falls below
    ``min_local_time``, are flagged unreliable; moments are NaN when undefined.
    A prebuilt neighbor ``engine`` for the same path and ``eps`` may be passed.
    """
    path = _as_path(path)
    if path.n < 2:
        raise ValueError("double smoothing needs at least 2 increments")
    kernel = cfg.kernel
    grid = default_grid(path) if cfg.grid is None else cfg.grid
    min_lt = cfg.min_local_time
    if min_lt is None:
        min_lt = default_min_local_time(kernel, cfg.h, path.delta)

    levels = path.values[1:]
    rows = _kernel_rows(levels, grid, kernel, cfg.h)
    idx = np.unique(np.concatenate([nz for _, _, nz, _ in rows]))

    if engine is None:
        engine = neighbor_index(path, cfg.eps, cfg.engine)
    elif engine.eps != cfg.eps:
        raise ValueError("engine radius differs from cfg.eps")
    counts, s2, s4 = engine.query(levels[idx])
    usable = counts > 0
    safe = np.where(usable, counts, 1) * path.delta
    a2 = np.where(usable, s2 / safe, 0.0)
    a4 = np.where(usable, s4 / safe, 0.0)

    results = []
    scale = path.delta / cfg.h
    for xv, ksum, nz, w in rows:
        lt = ksum * scale
        pos = np.searchsorted(idx, nz)
        wu = np.where(usable[pos], w, 0.0)
        denom = wu.sum()
        if nz.size:
            c = counts[pos]
            stats = (int(c.min()), float(np.median(c)), int(c.max()))
        else:
            stats = (0, 0.0, 0)
        if denom > 0:
            m2 = float(np.dot(wu, a2[pos]) / denom)
            m4 = float(np.dot(wu, a4[pos]) / denom)
            ok = lt >= min_lt
        else:
            m2 = m4 = math.nan
            ok = False
        results.append(MomentEstimate(xv, m2, m4, lt, stats, bool(ok)))
    return results


def single_smoothed_m2(path: SamplePath, kernel, h: float, grid) -> list:
    """Kernel-weighted squared increments, ``i = 1 .. n-1``.

    Returns ``(x, m2, local_time)`` tuples; ``m2`` is NaN without kernel mass.
    """
    path = _as_path(path)
    kernel = kernel_by_name(kernel)
    if path.n < 2:
        raise ValueError("single smoothing needs at least 2 increments")
    if not h > 0:
        raise ValueError(f"h must be positive, got {h!r}")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("evaluation grid is empty")
    levels = path.values[1:-1]
    sq = np.diff(path.values[1:]) ** 2 / path.delta
    lts = local_time_hat(path, kernel, h, grid)
    out = []
    for xv, lt in zip(grid, lts):
        w = kernel((levels - xv) / h)
        denom = w.sum()
        m2 = float(np.dot(w, sq) / denom) if denom > 0 else math.nan
        out.append((float(xv), m2, float(lt)))
    return out
