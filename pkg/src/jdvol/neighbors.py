"""Epsilon-neighbor queries over the sampled levels of a path.

For a level ``v`` a query returns, over ``j = 1 .. n-1``,

    count = #{j : |X_j - v| <= eps}
    s2    = sum of (X_{j+1} - X_j)**2 over those j
    s4    = sum of (X_{j+1} - X_j)**4 over those j

Two engines give the same answers: ``NaiveNeighborEngine`` scans every
sample per query; ``SortedNeighborEngine`` sorts once and answers each query
with two binary searches and compensated prefix sums.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NeighborEngine",
    "NaiveNeighborEngine",
    "SortedNeighborEngine",
    "ENGINES",
    "neighbor_index",
]

_NAIVE_CHUNK_ELEMENTS = 4_000_000


class NeighborEngine:
    """Immutable neighbor-query structure for one path and one radius."""

    def __init__(self, values, eps: float):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size < 3:
            raise ValueError("neighbor queries need a path with at least 2 increments")
        eps = float(eps)
        if not eps > 0:
            raise ValueError(f"eps must be positive, got {eps!r}")
        self.eps = eps
        # j = 1 .. n-1: levels X_j and their forward increments
        self.levels = values[1:-1]
        inc = np.diff(values[1:])
        self.sq = inc * inc
        self.quart = self.sq * self.sq

    @property
    def size(self) -> int:
        return self.levels.size

    def query(self, v):
        """Return ``(count, s2, s4)`` arrays for the query levels ``v``."""
        raise NotImplementedError


class NaiveNeighborEngine(NeighborEngine):
    """Direct O(n) scan per query."""

    def query(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        counts = np.empty(v.size, dtype=np.int64)
        s2 = np.empty(v.size)
        s4 = np.empty(v.size)
        chunk = max(1, _NAIVE_CHUNK_ELEMENTS // max(self.size, 1))
        for start in range(0, v.size, chunk):
            stop = min(start + chunk, v.size)
            mask = np.abs(self.levels[None, :] - v[start:stop, None]) <= self.eps
            counts[start:stop] = mask.sum(axis=1)
            s2[start:stop] = np.where(mask, self.sq, 0.0).sum(axis=1)
            s4[start:stop] = np.where(mask, self.quart, 0.0).sum(axis=1)
        return counts, s2, s4


def _two_sum_error(a, b, s):
    """Exact rounding error of ``s = fl(a + b)`` (Knuth's TwoSum)."""
    bp = s - a
    ap = s - bp
    return (a - ap) + (b - bp)


class _CompensatedPrefix:
    """Prefix sums carried as an unevaluated pair ``head + tail``.

    ``head`` is the ordinary running sum; ``tail`` accumulates the exact
    rounding error of every addition, so range sums do not suffer the
    cancellation of a plain ``cumsum`` difference.
    """

    def __init__(self, x):
        head = np.concatenate(([0.0], np.cumsum(x)))
        err = _two_sum_error(head[:-1], x, head[1:])
        self.head = head
        self.tail = np.concatenate(([0.0], np.cumsum(err)))

    def range_sum(self, lo, hi):
        a, b = self.head[hi], self.head[lo]
        d = a - b
        d_err = _two_sum_error(a, -b, d)
        return d + (d_err + (self.tail[hi] - self.tail[lo]))


class SortedNeighborEngine(NeighborEngine):
    """Sort once (O(n log n)); O(log n) per query."""

    def __init__(self, values, eps: float):
        super().__init__(values, eps)
        order = np.argsort(self.levels, kind="stable")
        self.sorted_levels = self.levels[order]
        self._p2 = _CompensatedPrefix(self.sq[order])
        self._p4 = _CompensatedPrefix(self.quart[order])

    def _inside(self, k, v):
        return np.abs(self.sorted_levels[k] - v) <= self.eps

    def _bounds(self, v):
        xs, eps, m = self.sorted_levels, self.eps, self.sorted_levels.size
        lo = np.searchsorted(xs, v - eps, side="left")
        hi = np.searchsorted(xs, v + eps, side="right")
        # searchsorted compares against v -+ eps, which can round differently
        # from |X - v| <= eps; walk the edges until they agree with the predicate
        while True:
            grow = (lo > 0) & self._inside(np.maximum(lo - 1, 0), v)
            shrink = (lo < hi) & ~self._inside(np.minimum(lo, m - 1), v)
            if not (grow.any() or shrink.any()):
                break
            lo = lo - grow + shrink
        while True:
            grow = (hi < m) & self._inside(np.minimum(hi, m - 1), v)
            shrink = (hi > lo) & ~self._inside(np.maximum(hi - 1, 0), v)
            if not (grow.any() or shrink.any()):
                break
            hi = hi + grow - shrink
        return lo, hi

    def query(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        lo, hi = self._bounds(v)
        counts = (hi - lo).astype(np.int64)
        return counts, self._p2.range_sum(lo, hi), self._p4.range_sum(lo, hi)


ENGINES = {"naive": NaiveNeighborEngine, "fast": SortedNeighborEngine}


def neighbor_index(path, eps: float, engine: str = "fast") -> NeighborEngine:
    """Build a neighbor engine for ``path`` (a ``SamplePath`` or value array)."""
    values = getattr(path, "values", path)
    try:
        cls = ENGINES[engine]
    except KeyError:
        raise ValueError(f"unknown engine {engine!r}; choose from {sorted(ENGINES)}") from None
    return cls(values, eps)
