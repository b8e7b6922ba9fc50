"""Input checks shared by the estimator classes and the CLI."""

from __future__ import annotations

import math
import numbers

import numpy as np

from .models import SamplePath


def check_path(X, delta=None) -> SamplePath:
    """Coerce ``X`` to a ``SamplePath``.

    Accepts a ``SamplePath`` (``delta`` must then be None or agree), a 1-D
    array, or a single-column 2-D array.
    """
    if isinstance(X, SamplePath):
        if delta is not None and not math.isclose(delta, X.delta, rel_tol=1e-12):
            raise ValueError(f"delta={delta} conflicts with the path's delta={X.delta}")
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D sequence of levels, got shape {arr.shape}")
    if delta is None:
        raise ValueError("delta (the sampling interval) is required for array input")
    return SamplePath(arr, check_positive(delta, "delta"))


def check_positive(value, name) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


def check_grid(x) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(x, dtype=float))
    if grid.ndim == 2 and grid.shape[1] == 1:
        grid = grid[:, 0]
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("evaluation points must form a non-empty 1-D array")
    if not np.all(np.isfinite(grid)):
        raise ValueError("evaluation points must be finite")
    return grid
