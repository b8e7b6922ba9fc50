"""Smoothing kernels, their moment constants and the ratio-regime variance constant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate
from scipy.special import ndtr

__all__ = ["KernelSpec", "KERNELS", "kernel_by_name", "theta_phi"]

# Gaussian tails beyond this radius change a CDF window by < 1e-12.
_GAUSS_EFFECTIVE_RADIUS = 7.5


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric, nonnegative, unit-mass kernel.

    ``evaluate`` and ``cdf`` are vectorised over numpy arrays. ``moment(i, j)``
    returns ``int K(u)**i * u**j du``.
    """

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    cdf: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    support_radius: float
    _moment: Callable[[int, int], float] = field(repr=False)

    def __call__(self, u):
        return self.evaluate(u)

    def moment(self, i: int, j: int) -> float:
        if i < 1 or j < 0:
            raise ValueError(f"moment indices must satisfy i >= 1, j >= 0, got ({i}, {j})")
        return self._moment(int(i), int(j))

    @property
    def k2(self) -> float:
        """Second moment ``int u**2 K(u) du``."""
        return self.moment(1, 2)

    @property
    def roughness(self) -> float:
        """``int K(u)**2 du``."""
        return self.moment(2, 0)

    @property
    def peak(self) -> float:
        return float(self.evaluate(np.array(0.0)))

    @property
    def is_compact(self) -> bool:
        return math.isfinite(self.support_radius)

    @property
    def effective_radius(self) -> float:
        return self.support_radius if self.is_compact else _GAUSS_EFFECTIVE_RADIUS


def _polynomial_kernel(name: str, poly: Polynomial) -> KernelSpec:
    """Kernel equal to ``poly`` on [-1, 1] and zero elsewhere."""
    antider = poly.integ()
    lower = antider(-1.0)

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, poly(u), 0.0)

    def cdf(u):
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        return antider(u) - lower

    def moment(i, j):
        # exact: K**i * u**j is a polynomial on the support
        p = (poly**i) * Polynomial.basis(j)
        q = p.integ()
        return float(q(1.0) - q(-1.0))

    return KernelSpec(name, evaluate, cdf, 1.0, moment)


def _gaussian_kernel() -> KernelSpec:
    norm = 1.0 / math.sqrt(2.0 * math.pi)

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        return norm * np.exp(-0.5 * u * u)

    def moment(i, j):
        if j % 2:
            return 0.0
        double_fact = math.prod(range(j - 1, 0, -2)) if j > 0 else 1
        return (2.0 * math.pi) ** ((1 - i) / 2) * double_fact * i ** (-(j + 1) / 2)

    return KernelSpec("gaussian", evaluate, ndtr, math.inf, moment)


KERNELS: dict[str, KernelSpec] = {
    "epanechnikov": _polynomial_kernel("epanechnikov", Polynomial([0.75, 0.0, -0.75])),
    "quartic": _polynomial_kernel(
        "quartic", Polynomial([15 / 16, 0.0, -30 / 16, 0.0, 15 / 16])
    ),
    "gaussian": _gaussian_kernel(),
}


def kernel_by_name(name) -> KernelSpec:
    """Look up a catalog kernel. A ``KernelSpec`` is passed through unchanged."""
    if isinstance(name, KernelSpec):
        return name
    try:
        return KERNELS[str(name).lower()]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; available: {', '.join(sorted(KERNELS))}"
        ) from None


def theta_phi(kernel, phi: float) -> float:
    """Variance constant of the regime where ``h / eps`` tends to ``phi``.

    Evaluates ``0.5 * int [F((z+1)/phi) - F((z-1)/phi)]**2 dz`` with ``F`` the
    kernel CDF. Tends to 1 as ``phi -> 0``.
    """
    kernel = kernel_by_name(kernel)
    phi = float(phi)
    if not phi > 0 or not math.isfinite(phi):
        raise ValueError(f"phi must be a positive finite number, got {phi!r}")
    cdf = kernel.cdf

    def window(z):
        return float(cdf((z + 1.0) / phi) - cdf((z - 1.0) / phi))

    def integrand(z):
        w = window(z)
        return w * w

    radius = kernel.effective_radius
    zmax = 1.0 + phi * radius
    # integrand is even in z and piecewise smooth with breaks at |z| = 1 +- phi*R
    breaks = sorted({b for b in (abs(1.0 - phi * radius), 1.0, 1.0 + phi * radius) if 0 < b < zmax})
    edges = [0.0] + breaks + [zmax]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    # 0.5 * (2 * half-line integral)
    return total
