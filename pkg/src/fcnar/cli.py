"""Command-line interface.

Every command writes into ``--output-dir`` using fixed file names (see
docs/formats.md). Options can also come from a JSON ``--config`` file whose
keys mirror the long flag names; a flag given on the command line wins over
the file. Failures print a JSON error object to stderr and exit with 1
(usage errors) or 2 (everything else).
"""
from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import io as fio
from .design import build_designs, prepare_spec
from .estimate import DEFAULT_LAMBDA_GRID, cross_validate_lambda, fit, fit_ridge, threshold_range
from .experiments import (
    ci_coverage,
    county_config,
    f_test_calibration,
    f_test_power,
    forecast_comparison,
    function_recovery,
)
from .inference import f_test, function_ci, make_constraints, same_bases
from .model import Exogenous, FcnarSpec, Lagged, stability_check
from .selection import BASELINES, SelectionGrid, aic, fit_baseline, forecast_one_step, select
from .simulate import SCENARIOS, make_scenario, simulate

log = logging.getLogger("fcnar")


class UsageError(ValueError):
    pass


# Option registry: every option is declared with default=SUPPRESS so that we
# can tell explicit flags from defaults and merge a config file in between.

_DEFAULTS: dict[str, dict] = {}


def _opt(parser, command, *flags, default=None, **kw):
    action = parser.add_argument(*flags, default=argparse.SUPPRESS, **kw)
    _DEFAULTS.setdefault(command, {})[action.dest] = default
    if default is not None and kw.get("help") and "%(default)" not in kw["help"]:
        action.help = f"{kw['help']} (default: {default})"
    return action


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_pair(text) -> tuple[float, float]:
    vals = [float(v) for v in text] if isinstance(text, (list, tuple)) else [float(v) for v in str(text).split(",")]
    if len(vals) != 2:
        raise UsageError(f"expected two comma-separated numbers, got {text!r}")
    return vals[0], vals[1]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcnar", description="Functional-coefficient network autoregression")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default: WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, name):
        _opt(p, name, "--config", help="JSON file of option values; flags override it")
        _opt(p, name, "--output-dir", default=".", help="directory for output files")

    def data_opts(p, name):
        _opt(p, name, "--panel", help="wide panel CSV (time + one column per node)")
        _opt(p, name, "--weights", help="N x N weight matrix CSV")
        _opt(p, name, "--normalize", action="store_true", default=False, help="row-normalise the weights")
        _opt(p, name, "--thresholds", help="exogenous threshold CSV with the panel's shape")

    def model_opts(p, name):
        _opt(p, name, "--q1", type=int, default=1, help="own lags")
        _opt(p, name, "--q2", type=int, default=1, help="network lags")
        _opt(p, name, "--order", type=int, default=4, help="spline order M")
        _opt(p, name, "--n-knots", type=int, default=10, help="number of knots K")
        _opt(p, name, "--threshold-lag", type=int, default=1,
             help="delay d of a lagged threshold (ignored with --thresholds)")
        _opt(p, name, "--knot-range", default="0.01,0.99", help="quantile range for knot placement")
        _opt(p, name, "--shared-knots", action="store_true", default=False,
             help="place one knot set from all nodes' thresholds pooled")

    p = sub.add_parser("simulate", help="simulate a scenario panel")
    common(p, "simulate")
    _opt(p, "simulate", "--scenario", default="B1", help=f"one of {', '.join(SCENARIOS)}, county")
    _opt(p, "simulate", "--seed", type=int, default=0, help="random seed")
    _opt(p, "simulate", "--N", type=int, help="number of nodes")
    _opt(p, "simulate", "--T", type=int, help="number of time points")
    _opt(p, "simulate", "--burn-in", type=int, help="discarded initial steps")
    _opt(p, "simulate", "--order", type=int, help="spline order of the simulated model")
    _opt(p, "simulate", "--n-knots", type=int, help="knot count of the simulated model")
    _opt(p, "simulate", "--bandwidth", type=int, help="banded weight-matrix bandwidth")
    _opt(p, "simulate", "--sigma2", type=float, help="noise variance")

    p = sub.add_parser("stability", help="spectral-radius stability check")
    common(p, "stability")
    _opt(p, "stability", "--scenario", help="scenario whose closed-form functions to check")
    _opt(p, "stability", "--fit", help="fit artifact whose fitted functions to check")
    _opt(p, "stability", "--u-range", default="-4,4", help="threshold range for sup-norm bounds of a scenario")

    p = sub.add_parser("fit", help="estimate an FCNAR model")
    common(p, "fit")
    data_opts(p, "fit")
    model_opts(p, "fit")
    _opt(p, "fit", "--from-selection", help="selection.json whose chosen model to fit")
    _opt(p, "fit", "--lambda", dest="lam", help="ridge penalty, or 'cv' for cross-validation")
    _opt(p, "fit", "--lambda-grid", help="comma-separated penalties for --lambda cv")
    _opt(p, "fit", "--folds", type=int, default=5, help="cross-validation folds")
    _opt(p, "fit", "--dof-correct", action="store_true", default=False,
         help="divide RSS by N (T_eff - p) instead of N T_eff")
    _opt(p, "fit", "--train-end", type=int, help="use only the first TRAIN_END time points")
    _opt(p, "fit", "--dump-design", action="store_true", default=False, help="also write design.csv")

    p = sub.add_parser("ci", help="pointwise confidence intervals of fitted functions")
    common(p, "ci")
    _opt(p, "ci", "--fit", default="fit.json", help="fit artifact")
    _opt(p, "ci", "--panel", help="panel used to place the grid (required)")
    _opt(p, "ci", "--thresholds", help="exogenous threshold CSV")
    _opt(p, "ci", "--node", default="1", help="1-based node index, comma list, or 'all'")
    _opt(p, "ci", "--lag", type=int, default=1, help="lag j of a_ij and b_ij")
    _opt(p, "ci", "--grid", type=int, default=200, help="number of grid points")
    _opt(p, "ci", "--range", dest="qrange", default="0.05,0.95", help="threshold quantile range of the grid")
    _opt(p, "ci", "--level", type=float, default=0.95, help="confidence level")

    p = sub.add_parser("test", help="F-test of a linear hypothesis")
    common(p, "test")
    _opt(p, "test", "--fit", default="fit.json", help="fit artifact")
    _opt(p, "test", "--kind", default="C1",
         help="C1/C2 (linearity of a/b), A/B (homogeneity of a/b) or custom")
    _opt(p, "test", "--node", type=int, default=1, help="1-based node for linearity and custom node tests")
    _opt(p, "test", "--lag", type=int, default=1, help="lag of the tested block")
    _opt(p, "test", "--D", dest="D", help="CSV constraint matrix for --kind custom")
    _opt(p, "test", "--r", dest="r", help="comma-separated target for --kind custom")
    _opt(p, "test", "--scope", default="node", help="custom test scope: node or global")
    _opt(p, "test", "--alpha", type=float, default=0.05, help="significance level reported")

    p = sub.add_parser("select", help="AIC search over lags, spline order, knots and threshold delay")
    common(p, "select")
    data_opts(p, "select")
    _opt(p, "select", "--q1", default="1", help="candidate own lags")
    _opt(p, "select", "--q2", default="1", help="candidate network lags")
    _opt(p, "select", "--order", default="2,3,4", help="candidate spline orders")
    _opt(p, "select", "--n-knots", default="3,5,10", help="candidate knot counts")
    _opt(p, "select", "--threshold-lag", default="1", help="candidate threshold delays")
    _opt(p, "select", "--knot-range", default="0.01,0.99", help="quantile range for knot placement")
    _opt(p, "select", "--shared-knots", action="store_true", default=False,
         help="place one knot set from all nodes' thresholds pooled")
    _opt(p, "select", "--penalty", default="node", help="AIC penalty: node (one node's parameters) or full (all nodes)")
    _opt(p, "select", "--train-end", type=int, help="use only the first TRAIN_END time points")

    p = sub.add_parser("forecast", help="one-step-ahead forecasts and predicted RMSE")
    common(p, "forecast")
    data_opts(p, "forecast")
    _opt(p, "forecast", "--fit", default="fit.json", help="fit artifact")
    _opt(p, "forecast", "--start", type=int, help="first forecast index (default: end of the training sample)")
    _opt(p, "forecast", "--stop", type=int, help="one past the last forecast index (default: panel end)")
    _opt(p, "forecast", "--baselines", default="", help=f"comma list of {', '.join(BASELINES)}")
    _opt(p, "forecast", "--clamp", default="knots", help="threshold clamping: knots, range or none")

    p = sub.add_parser("benchmark", help="Monte Carlo studies")
    common(p, "benchmark")
    _opt(p, "benchmark", "--forecast-comparison", action="store_true", default=False, help="forecast comparison table")
    _opt(p, "benchmark", "--coverage", action="store_true", default=False, help="CI coverage study")
    _opt(p, "benchmark", "--recovery", action="store_true", default=False, help="function recovery study")
    _opt(p, "benchmark", "--calibration", action="store_true", default=False, help="F-test size and power")
    _opt(p, "benchmark", "--reps", type=int, default=10, help="replicates per setting")
    _opt(p, "benchmark", "--seed", type=int, default=1, help="base seed")
    _opt(p, "benchmark", "--N", type=int, default=100, help="number of nodes")
    _opt(p, "benchmark", "--T-values", default="200,400,800,1600,3200", help="sample sizes for coverage/recovery")

    p = sub.add_parser("convert", help="long CSV (time,node,value) to a wide panel")
    common(p, "convert")
    _opt(p, "convert", "--long", help="long-format CSV")
    _opt(p, "convert", "--time-col", default="time", help="time column")
    _opt(p, "convert", "--node-col", default="node", help="node column")
    _opt(p, "convert", "--value-col", default="value", help="value column")
    return parser


def resolve_options(command: str, explicit: dict) -> argparse.Namespace:
    """Merge defaults, the JSON config file and explicit flags (flags win)."""
    opts = dict(_DEFAULTS[command])
    cfg_path = explicit.get("config")
    if cfg_path:
        with open(cfg_path) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise UsageError(f"config file {cfg_path} must hold a JSON object")
        for key, value in cfg.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest == "lambda":
                dest = "lam"
            if dest == "range":
                dest = "qrange"
            if dest not in opts:
                raise UsageError(f"config key {key!r} is not an option of '{command}'")
            if dest in explicit and explicit[dest] != value:
                log.warning("option %s: command-line value %r overrides config value %r",
                            dest, explicit[dest], value)
            opts[dest] = value
    opts.update({k: v for k, v in explicit.items() if k != "command"})
    return argparse.Namespace(**opts)


# Shared helpers

def _outdir(opts) -> Path:
    out = Path(opts.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(opts, *names):
    for name in names:
        if getattr(opts, name, None) in (None, ""):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _load_data(opts):
    _need(opts, "panel")
    data = fio.load_panel(opts.panel, getattr(opts, "thresholds", None))
    W = None
    if getattr(opts, "weights", None):
        W = fio.load_weights(opts.weights, normalize=bool(opts.normalize))
        if W.N != data.N:
            raise UsageError(f"weights are {W.N} x {W.N} but the panel has {data.N} nodes")
    return data, W


def _threshold(opts, data, lag):
    return Exogenous() if data.U is not None else Lagged(int(lag))


def _node_index(value, N) -> list[int]:
    if str(value).lower() == "all":
        return list(range(N))
    nodes = [v - 1 for v in _int_list(value)]
    for i in nodes:
        if not 0 <= i < N:
            raise UsageError(f"node {i + 1} is outside 1..{N}")
    return nodes


# Commands

def cmd_simulate(opts, header):
    overrides = {k: getattr(opts, k) for k in ("N", "T", "order", "n_knots", "bandwidth", "sigma2")
                 if getattr(opts, k) is not None}
    if opts.burn_in is not None:
        overrides["burn_in"] = opts.burn_in
    if str(opts.scenario).lower() == "county":
        cfg = county_config(seed=opts.seed, **{k: v for k, v in overrides.items() if k in ("N", "T")})
    else:
        cfg = make_scenario(opts.scenario, seed=opts.seed, **overrides)
    data = simulate(cfg)
    out = _outdir(opts)
    fio.write_panel(out / "panel.csv", data, header)
    if isinstance(cfg.spec.threshold, Exogenous):
        fio.write_panel(out / "thresholds.csv", data, header, values=data.U)
    fio.write_weights(out / "weights.csv", cfg.spec.W, header)
    return {"outputs": sorted(p.name for p in out.glob("*.csv") if p.name in
                              ("panel.csv", "thresholds.csv", "weights.csv")),
            "N": data.N, "T": data.T, "scenario": cfg.name}


def cmd_stability(opts, header):
    if opts.fit:
        res = fio.load_fit(opts.fit)
        u_range = (float(res.u_range[:, 0].min()), float(res.u_range[:, 1].max()))
        report = stability_check(res.spec, coeffs=res.coefficients(), u_range=u_range)
    elif opts.scenario:
        cfg = make_scenario(opts.scenario)
        u_range = _float_pair(opts.u_range)
        report = stability_check(cfg.spec, coeffs=cfg.coeffs, u_range=u_range)
    else:
        raise UsageError("give --scenario or --fit")
    payload = {"stability": {**report.to_dict(), "u_range": list(u_range)}}
    fio.write_json(_outdir(opts) / "stability.json", payload, header)
    return payload["stability"]


def _spec_from_opts(opts, data, W) -> FcnarSpec:
    if W is None:
        raise UsageError("--weights is required")
    values = {"q1": opts.q1, "q2": opts.q2, "order": opts.order, "n_knots": opts.n_knots,
              "threshold_lag": opts.threshold_lag}
    if opts.from_selection:
        chosen = fio.read_json(opts.from_selection)["selected"]
        for key in values:
            if key in chosen and key not in getattr(opts, "_explicit", ()):
                values[key] = chosen[key]
    return FcnarSpec(N=data.N, q1=int(values["q1"]), q2=int(values["q2"]),
                     threshold=_threshold(opts, data, values["threshold_lag"]), W=W,
                     order=int(values["order"]), n_knots=int(values["n_knots"]),
                     knot_range=_float_pair(opts.knot_range), shared_knots=bool(opts.shared_knots))


def cmd_fit(opts, header):
    data, W = _load_data(opts)
    if opts.train_end:
        data = data.window(0, int(opts.train_end))
    spec = _spec_from_opts(opts, data, W)
    payload = {}
    if opts.lam is None:
        res = fit(data, spec, dof_correct=bool(opts.dof_correct))
    elif str(opts.lam).lower() == "cv":
        spec = prepare_spec(data, spec)
        designs = build_designs(data, spec)
        grid = DEFAULT_LAMBDA_GRID if not opts.lambda_grid else [float(v) for v in str(opts.lambda_grid).split(",")]
        lam, scores = cross_validate_lambda(designs, spec, grid, int(opts.folds))
        res = fit_ridge(designs, spec, lam, dof_correct=bool(opts.dof_correct))
        res.u_range = threshold_range(data, spec, designs)
        payload["cross_validation"] = {"grid": list(map(float, grid)), "rmse": scores, "lambda": lam}
    else:
        res = fit(data, spec, lam=float(opts.lam), dof_correct=bool(opts.dof_correct))
    out = _outdir(opts)
    summary = {"sigma2": res.sigma2, "T_eff": res.T_eff, "method": res.method, "lambda": res.lam,
               "aic": aic(res, allow_degenerate=True)}
    fio.write_json(out / "fit.json", {"fit": fio.fit_to_dict(res), "summary": summary, **payload}, header)
    if opts.dump_design:
        designs = build_designs(data, res.spec)
        cols = ["node", "t", "y"] + [f"z{k + 1}" for k in range(res.spec.n_params)]
        rows = ([d.node + 1, int(t), float(y)] + [float(v) for v in z]
                for d in designs for t, y, z in zip(d.t_index, d.response, d.rows))
        fio.write_table(out / "design.csv", cols, rows, header)
    return summary


def _fit_and_panel(opts):
    _need(opts, "panel")
    res = fio.load_fit(opts.fit)
    data = fio.load_panel(opts.panel, getattr(opts, "thresholds", None))
    if data.N != res.spec.N:
        raise UsageError(f"panel has {data.N} nodes, the fit has {res.spec.N}")
    return res, data


def cmd_ci(opts, header):
    res, data = _fit_and_panel(opts)
    from .design import threshold_values

    lo, hi = _float_pair(opts.qrange)
    if not 0 <= lo < hi <= 1:
        raise UsageError("--range must be two quantile levels 0 <= lo < hi <= 1")
    U = threshold_values(data, res.spec)
    rows = []
    for i in _node_index(opts.node, res.spec.N):
        u_i = U[i, res.start:]
        grid = np.linspace(*np.quantile(u_i[np.isfinite(u_i)], [lo, hi]), int(opts.grid))
        ci_a, ci_b = function_ci(res, i, grid, float(opts.level), int(opts.lag))
        for k, u in enumerate(grid):
            rows.append([float(u), i + 1, int(opts.lag), float(ci_a.estimate[k]), float(ci_a.lower[k]),
                         float(ci_a.upper[k]), float(ci_b.estimate[k]), float(ci_b.lower[k]), float(ci_b.upper[k])])
    cols = ["u", "node", "lag", "a_hat", "a_lo", "a_hi", "b_hat", "b_lo", "b_hi"]
    fio.write_table(_outdir(opts) / "ci.csv", cols, rows, header)
    return {"rows": len(rows)}


def _read_matrix(path) -> np.ndarray:
    _, rows = fio.read_table(path)
    return np.array([[float(v) for v in r] for r in rows])


def cmd_test(opts, header):
    res = fio.load_fit(opts.fit)
    kind = str(opts.kind)
    node, lag = int(opts.node) - 1, int(opts.lag)
    if not 0 <= node < res.spec.N:
        raise UsageError(f"node {node + 1} is outside 1..{res.spec.N}")
    key = kind.lower()
    if key in ("c1", "c2", "linearity_a", "linearity_b"):
        D, r = make_constraints(kind, res.spec, lag)
        report = f_test(res, D, r, ("node", node, lag))
    elif key in ("a", "b", "homogeneity_a", "homogeneity_b"):
        D, r = make_constraints(kind, res.spec, lag)
        report = f_test(res, D, r, "global", check_rank=False)
    elif key == "custom":
        _need(opts, "D")
        D = _read_matrix(opts.D)
        r = None if not opts.r else [float(v) for v in str(opts.r).split(",")]
        D, r = make_constraints("custom", res.spec, lag, D, r)
        scope = "global" if opts.scope == "global" else ("node", node, lag)
        report = f_test(res, D, r, scope)
    else:
        raise UsageError(f"unknown test kind {kind!r}")
    body = report.to_dict()
    body.update({"kind": kind, "alpha": opts.alpha, "reject": bool(report.p_value < opts.alpha)})
    if key in ("a", "b", "homogeneity_a", "homogeneity_b"):
        body["shared_bases"] = same_bases(res.spec)
        body.pop("D")  # (N-1)(M+K) x 2N(M+K)q; reproducible from kind and spec
    fio.write_json(_outdir(opts) / "test.json", {"test": body}, header)
    return {k: body[k] for k in ("F", "df", "p_value", "reject")}


def cmd_select(opts, header):
    data, W = _load_data(opts)
    if W is None:
        raise UsageError("--weights is required")
    if opts.train_end:
        data = data.window(0, int(opts.train_end))
    exogenous = data.U is not None
    grid = SelectionGrid(q1=_int_list(opts.q1), q2=_int_list(opts.q2), order=_int_list(opts.order),
                         n_knots=_int_list(opts.n_knots), d=_int_list(opts.threshold_lag))
    base = FcnarSpec(N=data.N, q1=grid.q1[0], q2=grid.q2[0],
                     threshold=Exogenous() if exogenous else Lagged(grid.d[0]), W=W,
                     knot_range=_float_pair(opts.knot_range), shared_knots=bool(opts.shared_knots))
    result = select(data, base, grid, penalty=opts.penalty)
    spec = result.spec
    chosen = {"q1": spec.q1, "q2": spec.q2, "order": spec.order, "n_knots": spec.n_knots,
              "threshold_lag": spec.threshold.lag, "aic": result.aic, "sigma2": result.fit.sigma2}
    out = _outdir(opts)
    cols = ["q1", "q2", "M", "K", "d", "aic", "sigma2", "status"]
    fio.write_table(out / "selection_trace.csv", cols, ([t[c] for c in cols] for t in result.trace), header)
    fio.write_json(out / "selection.json", {"selected": chosen, "penalty": opts.penalty,
                                            "start": result.fit.start, "n_candidates": len(result.trace)}, header)
    return chosen


def cmd_forecast(opts, header):
    res = fio.load_fit(opts.fit)
    data, _ = _load_data(opts)
    if data.N != res.spec.N:
        raise UsageError(f"panel has {data.N} nodes, the fit has {res.spec.N}")
    start = res.start + res.T_eff if opts.start is None else int(opts.start)
    stop = data.T if opts.stop is None else int(opts.stop)
    clamp = None if str(opts.clamp).lower() == "none" else opts.clamp
    models = {res.tag: res}
    baselines = [b for b in str(opts.baselines).split(",") if b.strip()]
    if baselines:
        train = data.window(0, start)
        for kind in baselines:
            b = fit_baseline(kind.strip(), train, res.spec, start=res.start)
            models[b.tag] = b
    reports = {tag: forecast_one_step(m, data, (start, stop), clamp=clamp, model_tag=tag)
               for tag, m in models.items()}
    out = _outdir(opts)
    fio.write_json(out / "forecast.json", {"forecasts": [r.to_dict() for r in reports.values()]}, header)
    times = data.time or [str(t) for t in range(data.T)]
    rows = []
    for tag, r in reports.items():
        for k, t in enumerate(r.t_index):
            for i in range(data.N):
                rows.append([tag, times[t], i + 1, float(r.truth[i, k]), float(r.predictions[i, k])])
    fio.write_table(out / "forecast.csv", ["model", "time", "node", "actual", "predicted"], rows, header)
    return {tag: r.rmse for tag, r in reports.items()}


def cmd_benchmark(opts, header):
    out = _outdir(opts)
    done = {}
    T_values = _int_list(opts.T_values)
    if not (opts.forecast_comparison or opts.coverage or opts.recovery or opts.calibration):
        raise UsageError("choose at least one of --forecast-comparison, --coverage, --recovery, --calibration")
    if opts.forecast_comparison:
        comp = forecast_comparison(reps=opts.reps, seed=opts.seed, N=opts.N)
        fio.write_table(out / "forecast_comparison.csv", ["model"] + list(comp.scenarios), comp.rows(), header)
        reps = [[m, s, k, float(v)] for (m, s), vals in sorted(comp.rmse.items()) for k, v in enumerate(vals)]
        fio.write_table(out / "forecast_comparison_replicates.csv", ["model", "scenario", "replicate", "rmse"], reps, header)
        done["forecast_comparison"] = {m: dict(zip(comp.scenarios, vals)) for m, *vals in comp.rows()}
    if opts.recovery:
        rec = function_recovery(T_values=T_values, reps=opts.reps, seed=opts.seed, N=opts.N)
        rows = [[T, float(a), float(b), float(ra), float(rb)] for T, a, b, ra, rb in
                zip(rec.T_values, rec.median_a(), rec.median_b(), rec.replicate_sup_error("a"),
                    rec.replicate_sup_error("b"))]
        fio.write_table(out / "recovery.csv", ["T", "median_curve_sup_error_a", "median_curve_sup_error_b",
                                               "median_sup_error_a", "median_sup_error_b"], rows, header)
        done["recovery"] = len(rows)
    if opts.coverage:
        cov = ci_coverage(T_values=T_values, reps=opts.reps, seed=opts.seed, N=opts.N)
        rows = []
        for kind in ("a", "b"):
            c, h = cov.coverage(kind), cov.mean_half_width(kind)
            for k, T in enumerate(cov.T_values):
                for j, u in enumerate(cov.u_points):
                    rows.append([kind, T, float(u), float(c[k, j]), float(h[k, j])])
        fio.write_table(out / "coverage.csv", ["function", "T", "u", "coverage", "mean_half_width"], rows, header)
        done["coverage"] = len(rows)
    if opts.calibration:
        size = f_test_calibration(reps=opts.reps, seed=opts.seed)
        power = f_test_power(reps=opts.reps, seed=opts.seed)
        rows = [["size", k, v] for k, v in size.rates.items()] + [["power", k, v] for k, v in power.rates.items()]
        fio.write_table(out / "calibration.csv", ["study", "test", "rejection_rate"], rows, header)
        done["calibration"] = {f"{s}:{k}": v for s, k, v in rows}
    return done


def cmd_convert(opts, header):
    _need(opts, "long")
    data = fio.long_to_wide(opts.long, opts.time_col, opts.node_col, opts.value_col)
    fio.write_panel(_outdir(opts) / "panel.csv", data, header)
    return {"N": data.N, "T": data.T}


COMMANDS = {
    "simulate": cmd_simulate,
    "stability": cmd_stability,
    "fit": cmd_fit,
    "ci": cmd_ci,
    "test": cmd_test,
    "select": cmd_select,
    "forecast": cmd_forecast,
    "benchmark": cmd_benchmark,
    "convert": cmd_convert,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(ns.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    explicit = {k: v for k, v in vars(ns).items() if k not in ("log_level",)}
    command = explicit.pop("command")
    try:
        opts = resolve_options(command, explicit)
        opts._explicit = set(explicit)
        seed = getattr(opts, "seed", None)
        header = fio.header_lines(shlex.join(["fcnar"] + argv), seed)
        t0 = time.perf_counter()
        result = COMMANDS[command](opts, header)
        log.info("%s finished in %.2fs", command, time.perf_counter() - t0)
    except UsageError as exc:
        _report_error(command, exc)
        return 1
    except Exception as exc:  # every failure becomes a machine-readable error
        log.debug("command failed", exc_info=True)
        _report_error(command, exc)
        return 2
    print(json.dumps(fio._plain({"command": command, "status": "ok", "result": result})))
    return 0


def _report_error(command, exc) -> None:
    json.dump({"command": command, "status": "error", "error": type(exc).__name__, "message": str(exc)},
              sys.stderr)
    sys.stderr.write("\n")


if __name__ == "__main__":
    sys.exit(main())
