"""Command-line interface: ``jdvol simulate | estimate | mc-study | theta | bandwidth``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every output file starts with ``#`` comments carrying the package version,
the seed and the fully resolved configuration as JSON; ``--config FILE``
re-runs a command from such a header (explicit options still win).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import default_grid
from .exceptions import DataError, NumericalError, SimulationError
from .harness import run_experiment
from .inference import Regime, analytic_bias_inputs
from .io import (
    PATH_KIND,
    format_float,
    ingest_csv,
    load_plan,
    read_header_config,
    write_path_csv,
    write_table,
)
from .kernels import KERNELS, theta_phi
from .models import SimConfig, builtin_models, make_model, simulate_path
from .volatility import DoubleSmoothedVolatility, plugin_bandwidths

__all__ = ["cli_main", "main", "ESTIMATE_COLUMNS"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

ESTIMATE_COLUMNS = ["x", "m2", "m2_corrected", "m4", "local_time", "std_error", "ci_low", "ci_high", "reliable"]

# options that describe where results go rather than what is computed
_NOT_ECHOED = {"command", "config", "func", "output", "report", "plot_data"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key!r} needs a number, got {value!r}") from None


def _auto_or_float(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def parse_grid(spec):
    """``lo:hi:k`` (k equally spaced points) or a comma-separated list."""
    if spec is None:
        return None
    try:
        if ":" in spec:
            lo, hi, k = spec.split(":")
            grid = np.linspace(float(lo), float(hi), int(k))
        else:
            grid = np.array([float(v) for v in spec.split(",")])
    except ValueError:
        raise UsageError(f"bad grid spec {spec!r}; use lo:hi:k or v1,v2,...") from None
    grid = np.unique(grid)
    if grid.size == 0 or not np.all(np.isfinite(grid)):
        raise UsageError(f"bad grid spec {spec!r}")
    return grid


def _add_source(p):
    src = p.add_argument_group("input", "a path CSV (--input) or a simulated path (--model)")
    src.add_argument("--input", help="CSV with a time and a price column")
    src.add_argument("--time-col", default="t")
    src.add_argument("--price-col", default="x")
    src.add_argument("--resample", type=float, help="previous-tick resampling interval")
    src.add_argument(
        "--transform", choices=("auto", "log", "none"), default="auto",
        help="auto: none for sample-path files written by simulate, log otherwise",
    )
    _add_model(src, required=False)


def _add_model(p, required=True):
    p.add_argument("--model", required=required, choices=sorted(builtin_models()))
    p.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                   help="model parameter override (repeatable)")
    p.add_argument("--n", type=int, default=10000, help="number of increments")
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--x0", type=float, help="starting level (default: the model's mean)")
    p.add_argument("--substeps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="jdvol", description="Double-smoothed volatility estimation for jump-diffusions.")
    parser.add_argument("--version", action="version", version=f"jdvol {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a built-in model to a path CSV")
    _add_model(p)
    p.add_argument("--output", required=True)
    p.add_argument("--config", help="re-run from the header of a previous output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate M^2 on a grid with confidence intervals")
    _add_source(p)
    p.add_argument("--h", type=_auto_or_float, default="auto")
    p.add_argument("--eps", type=_auto_or_float, default="auto")
    p.add_argument("--phi", type=float, help="h / eps for auto bandwidths and the ratio_h regime")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    p.add_argument("--grid", help="lo:hi:k or v1,v2,... (default: 25 points, 5%%-95%% quantiles)")
    p.add_argument("--regime", choices=[r.value for r in Regime], default="small_h")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--engine", choices=("fast", "naive"), default="fast")
    p.add_argument("--bias", choices=("empirical", "analytic", "none"), default="empirical",
                   help="bias inputs; analytic needs --model")
    p.add_argument("--min-local-time", type=float)
    p.add_argument("--output", required=True, help="results CSV")
    p.add_argument("--report", help="structured-text report")
    p.add_argument("--plot-data", help="CSV of x, m2 and interval bands")
    p.add_argument("--config", help="re-run from the header of a previous output")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("mc-study", help="run a Monte Carlo plan")
    p.add_argument("--plan", required=True, help="plan file or shipped plan name")
    p.add_argument("--replications", type=int, help="override the plan's replication count")
    p.add_argument("--seed-base", type=int, help="override the plan's seed base")
    p.add_argument("--output", required=True, help="per-rung CSV table")
    p.add_argument("--report", help="full report as JSON text")
    p.add_argument("--config", help="re-run from the header of a previous output")
    p.set_defaults(func=cmd_mc_study)

    p = sub.add_parser("theta", help="variance constant of the ratio regime")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    p.add_argument("--phi", type=float, required=True)
    p.set_defaults(func=cmd_theta)

    p = sub.add_parser("bandwidth", help="plug-in (h, eps) from a pilot estimate")
    _add_source(p)
    p.add_argument("--kernel", choices=sorted(KERNELS), default="epanechnikov")
    p.add_argument("--phi", type=float, default=1.0)
    p.add_argument("--at", type=float, help="level for the plug-in (default: median)")
    p.set_defaults(func=cmd_bandwidth)
    return parser, sub


# --- helpers ---------------------------------------------------------------


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}


def _meta(args, seed, **extra) -> dict:
    meta = {"command": args.command, "seed": seed}
    meta.update(extra)
    meta["config"] = dict(_resolved(args), command=args.command)
    return meta


def _model_from(args):
    return make_model(args.model, **dict(args.param))


def _simulate(args):
    model = _model_from(args)
    x0 = args.x0 if args.x0 is not None else float(model.params.get("mean", 0.0))
    return model, simulate_path(model, SimConfig(x0, args.n, args.delta, args.substeps, args.seed))


def _load_source(args):
    """``(path, model or None, seed or None)`` from --input or --model."""
    if args.input and args.model:
        raise UsageError("give either --input or --model, not both")
    if args.input:
        header = read_header_config(args.input) if Path(args.input).exists() else {}
        transform = args.transform
        if transform == "auto":
            transform = "none" if header.get("kind") == PATH_KIND else "log"
            args.transform = transform
        path = ingest_csv(args.input, args.time_col, args.price_col, args.resample, transform == "log")
        return path, None, header.get("seed")
    if args.model:
        model, path = _simulate(args)
        return path, model, args.seed
    raise UsageError("an input is required: --input FILE or --model NAME")


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    return value


# --- subcommands -----------------------------------------------------------


def cmd_simulate(args, out):
    model, path = _simulate(args)
    args.param = sorted(args.param)
    write_path_csv(args.output, path, {"kind": PATH_KIND, "delta": format_float(path.delta),
                                       **_meta(args, args.seed, model=model.name)})
    print(f"wrote {path.n + 1} levels to {args.output}", file=out)


def _bias_inputs(args, model):
    if args.bias == "none":
        return None
    if args.bias == "empirical":
        return "empirical"
    if model is None:
        raise UsageError("--bias analytic needs a simulated --model input")
    return lambda x: analytic_bias_inputs(model, x)


def cmd_estimate(args, out):
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    if args.regime == "ratio_h" and args.phi is None and "auto" not in (args.h, args.eps):
        args.phi = args.h / args.eps
    path, model, seed = _load_source(args)
    grid = parse_grid(args.grid)
    if grid is None:
        grid = default_grid(path)
    est = DoubleSmoothedVolatility(
        h=args.h, eps=args.eps, phi=args.phi, kernel=args.kernel, engine=args.engine,
        min_local_time=args.min_local_time, regime=args.regime,
    ).fit(path)
    if est.bandwidth_info_:
        print(f"bandwidth source: {est.bandwidth_info_['source']}", file=out)
    print(f"h = {format_float(est.h_)}", file=out)
    print(f"eps = {format_float(est.eps_)}", file=out)
    # echo resolved numbers so a re-run from the header needs no plug-in
    args.h, args.eps, args.phi = est.h_, est.eps_, est.phi_
    args.grid = ",".join(format_float(v) for v in grid)

    rows = []
    for m, res in est.confidence_interval(grid, args.alpha, _bias_inputs(args, model)):
        if res is None:
            rows.append([m.x, m.m2, math.nan, m.m4, m.local_time, math.nan, math.nan, math.nan, False])
        else:
            rows.append([m.x, m.m2, res.m2_corrected, m.m4, m.local_time, res.std_error,
                         res.ci_low, res.ci_high, m.reliable])
    meta = _meta(args, seed, n=path.n, delta=format_float(path.delta))
    write_table(args.output, ESTIMATE_COLUMNS, ([_fmt(v) for v in r] for r in rows), meta)
    if args.plot_data:
        write_table(args.plot_data, ["x", "m2", "ci_low", "ci_high"],
                    ([r[0], r[1], r[6], r[7]] for r in rows), meta)
    if args.report:
        _write_estimate_report(args.report, meta, est, rows)
    n_ok = sum(1 for r in rows if r[-1])
    print(f"{n_ok}/{len(rows)} grid points reliable; results in {args.output}", file=out)


def _write_estimate_report(target, meta, est, rows):
    lines = [f"# jdvol: {__version__}"] + [
        f"# {k}: {json.dumps(v, sort_keys=True) if k == 'config' else v}" for k, v in meta.items()
    ]
    lines += [
        "[bandwidths]",
        f"h = {format_float(est.h_)}",
        f"eps = {format_float(est.eps_)}",
        f"phi = {format_float(est.phi_)}",
        f"source = {est.bandwidth_info_.get('source', 'user')}",
        "[path]",
        f"n = {est.path_.n}",
        f"delta = {format_float(est.path_.delta)}",
        f"horizon = {format_float(est.path_.horizon)}",
    ]
    for r in rows:
        lines.append(f"[point {format_float(r[0])}]")
        for name, value in zip(ESTIMATE_COLUMNS[1:], r[1:]):
            lines.append(f"{name} = {_fmt(value) if isinstance(value, (bool, np.bool_)) else format_float(value)}")
    Path(target).write_text("\n".join(lines) + "\n", encoding="utf-8")


_RUNG_COLUMNS = ["n", "delta", "h", "eps", "replications", "valid", "bias", "sd", "rmse", "mean_local_time",
                 "ks_stat", "ks_pvalue", "coverage", "z_mean", "z_sd", "bias_power_diag", "modulus_median"]


def cmd_mc_study(args, out):
    plan = load_plan(args.plan)
    if args.replications is not None:
        plan.replications = args.replications
    if args.seed_base is not None:
        plan.seed_base = args.seed_base
    try:
        plan.__post_init__()
    except ValueError as exc:
        raise DataError(f"invalid plan: {exc}") from None
    args.replications, args.seed_base = plan.replications, plan.seed_base
    report = run_experiment(plan)
    meta = _meta(args, plan.seed_base, plan=json.dumps(plan.to_dict(), sort_keys=True))
    rows = [[getattr(r, c) for c in _RUNG_COLUMNS] for r in report.per_rung]
    write_table(args.output, _RUNG_COLUMNS, rows, meta)
    if args.report:
        header = "\n".join([f"# jdvol: {__version__}", f"# seed: {plan.seed_base}",
                            f"# config: {json.dumps(meta['config'], sort_keys=True)}"])
        Path(args.report).write_text(header + "\n" + report.to_json() + "\n", encoding="utf-8")
    for r in report.per_rung:
        print(f"n={r.n} rmse={format_float(r.rmse)} ks_p={format_float(r.ks_pvalue)} "
              f"coverage={format_float(r.coverage)}", file=out)
    if report.comparison:
        for c in report.comparison["per_rung"]:
            print(f"n={c['n']} mse_ratio={format_float(c['ratio'])}", file=out)
    print(f"rate slope = {format_float(report.rate_fit['slope'])}", file=out)


def cmd_theta(args, out):
    print(format_float(theta_phi(args.kernel, args.phi)), file=out)


def cmd_bandwidth(args, out):
    path, _, _ = _load_source(args)
    h, eps, info = plugin_bandwidths(path, args.kernel, args.phi, x=args.at)
    print(f"h = {format_float(h)}", file=out)
    print(f"eps = {format_float(eps)}", file=out)
    print(f"source = {info['source']}", file=out)
    if "reason" in info:
        print(f"reason = {info['reason']}", file=out)


# --- entry points ----------------------------------------------------------


def _apply_config(parser, sub, argv):
    """Seed subcommand defaults from ``--config FILE`` when present."""
    if "--config" not in argv:
        return
    k = argv.index("--config")
    if k + 1 >= len(argv):
        parser.parse_args(argv)  # reports the missing value
    header = read_header_config(argv[k + 1])
    config = header.get("config")
    if not isinstance(config, dict):
        raise DataError(f"{argv[k + 1]}: no '# config:' header")
    command = config.get("command")
    if argv and argv[0] != command:
        raise UsageError(f"config was written by {command!r}, not {argv[0]!r}")
    defaults = {key: value for key, value in config.items() if key != "command"}
    if "param" in defaults:
        defaults["param"] = [tuple(p) for p in defaults["param"]]
    sp = sub.choices[command]
    for action in sp._actions:
        # options satisfied by the config stop being required
        if action.dest in defaults:
            action.required = False
    sp.set_defaults(**defaults)


def cli_main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        _apply_config(parser, sub, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(err)
            return EXIT_USAGE
        args.func(args, out)
        return EXIT_OK
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=err)
        return EXIT_DATA
    except (NumericalError, SimulationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_NUMERICAL
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
