"""CSV ingestion, path/result serialisation and plan files."""

from __future__ import annotations

import configparser
import csv
import json
import math
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import __version__
from .exceptions import DataError
from .harness import ExperimentPlan
from .models import SamplePath

__all__ = [
    "TickSeries",
    "ingest_csv",
    "read_ticks",
    "resample_previous_tick",
    "write_path_csv",
    "write_table",
    "read_header_config",
    "format_float",
    "load_plan",
    "parse_plan",
    "shipped_plans",
    "PATH_KIND",
]

PATH_KIND = "sample-path"
_UNIFORM_RTOL = 1e-6


def format_float(value) -> str:
    """Shortest decimal that round-trips to the same double."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


class TickSeries:
    """Timestamped observations with strictly increasing times."""

    def __init__(self, timestamps, prices, source=""):
        self.timestamps = np.asarray(timestamps, dtype=float)
        self.prices = np.asarray(prices, dtype=float)
        self.source = source
        if self.timestamps.shape != self.prices.shape or self.timestamps.ndim != 1:
            raise DataError("timestamps and prices must be 1-D and of equal length")
        if self.timestamps.size < 2:
            raise DataError("need at least 2 observations")
        bad = np.flatnonzero(np.diff(self.timestamps) <= 0)
        if bad.size:
            raise DataError(f"non-monotone timestamp at row {bad[0] + 2}")

    def __len__(self):
        return self.timestamps.size


def _data_lines(handle):
    """Skip ``#`` comment lines, keeping physical line numbers."""
    for lineno, line in enumerate(handle, start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield lineno, line


def read_header_config(path) -> dict:
    """Return the header comments (``# key: value``) of a file written here."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition(":")
            if sep:
                value = value.strip()
                if key.strip() == "config":
                    value = json.loads(value)
                out[key.strip()] = value
    return out


def read_ticks(path, time_col="t", price_col="x") -> TickSeries:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    times, prices = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = _data_lines(fh)
        try:
            _, header_line = next(lines)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in next(csv.reader([header_line]))]
        for col in (time_col, price_col):
            if col not in header:
                raise DataError(f"{path}: column {col!r} not found in header {header}")
        ti, pi = header.index(time_col), header.index(price_col)
        for row_no, (_, line) in enumerate(lines, start=1):
            cells = next(csv.reader([line]))
            parsed = []
            for idx, col in ((ti, time_col), (pi, price_col)):
                try:
                    parsed.append(float(cells[idx]))
                except (ValueError, IndexError):
                    cell = cells[idx] if idx < len(cells) else ""
                    raise DataError(f"unparsable cell {cell!r} at row {row_no}, column {col!r}") from None
                if not math.isfinite(parsed[-1]):
                    raise DataError(f"non-finite value at row {row_no}, column {col!r}")
            if times and parsed[0] <= times[-1]:
                raise DataError(f"non-monotone timestamp at row {row_no}")
            times.append(parsed[0])
            prices.append(parsed[1])
    return TickSeries(times, prices, source=str(path))


def resample_previous_tick(ticks: TickSeries, delta: float) -> np.ndarray:
    """Last observation carried forward onto ``t0 + k * delta``."""
    if not delta > 0:
        raise DataError(f"resample delta must be positive, got {delta!r}")
    t = ticks.timestamps
    span = t[-1] - t[0]
    count = int(math.floor(span / delta + 1e-9))
    grid = t[0] + delta * np.arange(count + 1)
    # tolerance absorbs grid rounding such as 3 * 0.1 != 0.3
    idx = np.searchsorted(t, grid + 1e-9 * delta, side="right") - 1
    return ticks.prices[np.clip(idx, 0, None)]


def ingest_csv(path, time_col="t", price_col="x", resample_delta: Optional[float] = None, log_prices=False) -> SamplePath:
    """Read a time/value CSV into a ``SamplePath``.

    Without ``resample_delta`` the timestamps must already be equally spaced
    (relative tolerance 1e-6). With it, observations are resampled by previous
    tick. ``log_prices`` takes logarithms after resampling.
    """
    ticks = read_ticks(path, time_col, price_col)
    if resample_delta is None:
        gaps = np.diff(ticks.timestamps)
        typical = float(np.median(gaps))
        off = np.flatnonzero(np.abs(gaps - typical) > _UNIFORM_RTOL * typical)
        if off.size:
            k = off[0]
            raise DataError(
                f"non-uniform spacing: gap {float(gaps[k])!r} between rows {k + 1} and {k + 2} "
                f"(typical spacing {typical!r}); pass a resample delta"
            )
        delta = float(gaps.mean())
        declared = read_header_config(path).get("delta")
        if declared is not None and math.isclose(float(declared), delta, rel_tol=_UNIFORM_RTOL):
            # files written by write_path_csv carry the exact spacing
            delta = float(declared)
        elif np.all(gaps == gaps[0]):
            delta = float(gaps[0])
        values = ticks.prices
    else:
        delta = float(resample_delta)
        values = resample_previous_tick(ticks, delta)
    if log_prices:
        if np.any(values <= 0):
            raise DataError("log transform needs strictly positive prices")
        values = np.log(values)
    try:
        return SamplePath(values, delta)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _header_lines(meta: dict) -> list:
    lines = [f"# jdvol: {__version__}"]
    for key, value in meta.items():
        if key == "config":
            value = json.dumps(value, sort_keys=True)
        lines.append(f"# {key}: {value}")
    return lines


def write_table(path, columns: list, rows: Iterable, meta: dict):
    """CSV with ``#`` header comments and shortest round-trip floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in _header_lines(meta):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def write_path_csv(path, sample: SamplePath, meta: Optional[dict] = None):
    meta = dict(meta or {})
    meta.setdefault("kind", PATH_KIND)
    meta.setdefault("delta", format_float(sample.delta))
    times = np.arange(sample.values.size) * sample.delta
    write_table(path, ["t", "x"], zip(times.tolist(), sample.values.tolist()), meta)


# --- plan files ------------------------------------------------------------

_PLAN_FLOATS = {
    "grid_point", "eps_scale", "eps_power", "h_scale", "h_power", "phi", "x0", "alpha", "bias_exponent",
}
_PLAN_INTS = {"replications", "seed_base", "substeps"}
_PLAN_LISTS = {"h_values", "eps_values", "h_bn"}


def _parse_number(text):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_plan(text: str, name: str = "") -> ExperimentPlan:
    """Parse a flat ``key = value`` plan.

    Keys: ``model``, ``regime``, ``ladder`` (``n:delta`` pairs, comma
    separated), ``replications``, ``grid_point``, ``seed_base``, ``kernel``,
    ``eps_scale``, ``eps_power``, ``h_scale``, ``h_power``, ``phi``, ``x0``,
    ``substeps``, ``alpha``, ``bias_exponent``, ``h_values``, ``eps_values``,
    ``h_bn`` (comma-separated, one per rung), ``labels`` and ``model.<param>``
    for model parameters.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[plan]\n" + text)
    except configparser.Error as exc:
        raise DataError(f"malformed plan file: {exc}") from None
    raw = dict(parser["plan"])
    kwargs: dict = {"model_params": {}, "name": raw.pop("name", name)}
    try:
        for key, value in raw.items():
            if key.startswith("model."):
                kwargs["model_params"][key[6:]] = _parse_number(value)
            elif key in ("model", "regime", "kernel"):
                kwargs[key] = value.strip()
            elif key == "ladder":
                rungs = []
                for item in value.split(","):
                    n, _, d = item.strip().partition(":")
                    rungs.append((int(float(n)), float(d)))
                kwargs["ladder"] = rungs
            elif key == "labels":
                kwargs["labels"] = tuple(v.strip() for v in value.split(","))
            elif key in _PLAN_FLOATS:
                kwargs[key] = float(value)
            elif key in _PLAN_INTS:
                kwargs[key] = int(value)
            elif key in _PLAN_LISTS:
                kwargs[key] = [float(v) for v in value.split(",")]
            else:
                raise DataError(f"unknown plan key {key!r}")
        return ExperimentPlan(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"invalid plan: {exc}") from None


def shipped_plans() -> dict:
    """Plans bundled with the package, keyed by file stem."""
    root = resources.files("jdvol") / "plans"
    return {p.name[: -len(".plan")]: p for p in root.iterdir() if p.name.endswith(".plan")}


def load_plan(ref) -> ExperimentPlan:
    """Load a plan from a file path or the name of a shipped plan."""
    path = Path(ref)
    if path.exists():
        return parse_plan(path.read_text(encoding="utf-8"), name=path.stem)
    plans = shipped_plans()
    if str(ref) in plans:
        return parse_plan(plans[str(ref)].read_text(encoding="utf-8"), name=str(ref))
    raise DataError(f"no plan file {ref!r}; shipped plans: {', '.join(sorted(plans))}")
