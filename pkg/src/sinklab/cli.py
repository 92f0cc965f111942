"""Command-line driver: ``sinklab solve|oracle|compare|sweep|selftest``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  On
failure a JSON object describing the error is printed to stderr and, when
the output directory is usable, written to ``error.json``.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from sinklab import __version__
from sinklab.analytic import field_series, origin_series, survival_series
from sinklab.config import ConfigError, RunConfig, load_config, load_config_file, with_values
from sinklab.fidelity import fidelity_report, validate_report
from sinklab.model import ModelParams, NoSink, NumericalError, ValidationError, is_trivial
from sinklab.observables import flux_identity_residual
from sinklab.oracle import cn_solve, mc_solve
from sinklab.volterra import volterra_p0

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

STRENGTH_KEYS = ("sink.alpha0", "sink.alpha1", "sink.alpha", "sink.beta")


# --- output helpers ------------------------------------------------------
def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _clean(obj):
    """Make ``obj`` strict-JSON friendly: numpy scalars to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def thread_cap():
    raw = os.environ.get("SINKLAB_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"must be a positive integer, got {raw!r}", "SINKLAB_THREADS") from None
    if n < 1:
        raise ConfigError(f"must be a positive integer, got {raw!r}", "SINKLAB_THREADS")
    return n


def _sup(d):
    return float(np.max(np.abs(d))) if len(d) else 0.0


def _rms(d):
    return float(math.sqrt(np.mean(np.square(d)))) if len(d) else 0.0


# --- commands ------------------------------------------------------------
def cmd_solve(cfg: RunConfig, out: Path) -> int:
    params, spec, x0 = cfg.params(), cfg.sink(), cfg.x0
    times, xs = cfg.times(), cfg.positions()
    ilt, copts = cfg.ilt(), cfg.closure_opts()
    fs = field_series(params, spec, x0, xs, times, ilt, **copts)
    surv = survival_series(params, spec, x0, times, ilt, **copts)
    rows = [
        (t, x, fs.values[i, j], fs.discrepancy[i, j])
        for i, t in enumerate(times)
        for j, x in enumerate(xs)
    ]
    write_csv(out / "field.csv", ["t", "x", "P_analytic", "ilt_discrepancy"], rows)
    summary = {
        "command": "solve",
        "version": __version__,
        "config": cfg.resolved(),
        "rows": len(rows),
        "ilt": {
            "method": ilt.method,
            "agreement_tol": ilt.agreement_tol,
            "flags_set": int(np.sum(fs.flags)),
            "discrepancy_max": float(np.nanmax(fs.discrepancy)) if np.any(np.isfinite(fs.discrepancy)) else None,
        },
        "closure_residual_max": max(fs.residual_max, surv.residual_max),
        "closure_residual_max_all_nodes": max(fs.residual_max_all, surv.residual_max_all),
        "survival": {"t": times, "S": surv.values},
    }
    write_json(out / "summary.json", summary)
    if cfg.values["output"]["plots"]:
        from sinklab.plotting import plot_field, plot_routes

        if len(xs) > 1:
            plot_field(out / "field.png", xs, times, fs.values, f"analytic P(x,t), {spec.law} sink")
        plot_routes(out / "survival.png", times, {"analytic": surv.values}, "S(t)", "survival")
    return EXIT_OK


def _run_cn(cfg, times):
    params, spec, x0 = cfg.params(), cfg.sink(), cfg.x0
    grid = cfg.grid()
    return cn_solve(params, spec, x0, grid, t_out=times[times <= grid.t_max]), grid


def cmd_oracle(cfg: RunConfig, out: Path) -> int:
    params, spec = cfg.params(), cfg.sink()
    times, xs = cfg.times(), cfg.positions()
    res, grid = _run_cn(cfg, times)
    S_at = np.interp(times, res.t, res.survival)
    J_at = np.interp(times, res.t, res.flux)
    fields = res.at_times(times)
    rows = []
    for i, t in enumerate(times):
        P_x = np.interp(xs, res.x, fields[i])
        rows.extend((t, x, P_x[j], S_at[i], J_at[i]) for j, x in enumerate(xs))
    write_csv(out / "field.csv", ["t", "x", "P_oracle", "S", "J"], rows)
    resid, scale = flux_identity_residual(res.t, res.survival, res.flux, params.sigma)
    summary = {
        "command": "oracle",
        "version": __version__,
        "config": cfg.resolved(),
        "rows": len(rows),
        "grid": {"L": grid.L, "nx": grid.nx, "dx": grid.dx, "dt": grid.dt, "t_max": grid.t_max,
                 "delta_width": grid.delta_width},
        "x0_used": res.info["x0_used"],
        "conservation": {
            "applicable": is_trivial(spec),
            "survival_deviation_max": float(np.max(np.abs(res.survival - 1.0))),
        },
        "flux_identity": {
            "residual": resid,
            "scale": scale,
            "relative": resid / scale if scale > 0 else 0.0,
        },
        "min_value": res.info["min_value"],
    }
    if cfg.values["mc"]["enabled"]:
        summary["mc"] = _mc_block(cfg, times)
    write_json(out / "summary.json", summary)
    if cfg.values["output"]["plots"]:
        from sinklab.plotting import plot_field

        keep = np.abs(res.x) <= max(5.0, float(np.max(np.abs(xs))))
        plot_field(out / "field.png", res.x[keep], times[:8], fields[:8, keep], f"CN P(x,t), {spec.law} sink")
    return EXIT_OK


def _mc_block(cfg, times):
    m = cfg.values["mc"]
    mc = mc_solve(
        cfg.params(), cfg.sink(), cfg.x0, n_paths=m["n_paths"], dt=m["dt"], t_max=float(times.max()),
        seed=cfg.values["run"]["seed"], delta_width=m["delta_width"],
    )
    S = np.interp(times, mc.t, mc.survival)
    err = np.interp(times, mc.t, mc.survival_err)
    # reference CN run with the same hat as the paths
    grid = cfg.grid()
    grid = replace(grid, delta_width=max(1.0, m["delta_width"] / grid.dx))
    ref = cn_solve(cfg.params(), cfg.sink(), cfg.x0, grid)
    S_cn = np.interp(times, ref.t, ref.survival)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, (S - S_cn) / err, 0.0)
    return {"t": times, "S": S, "stderr": err, "S_cn": S_cn, "z_vs_cn": z, "seed": cfg.values["run"]["seed"]}


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    params, spec, x0 = cfg.params(), cfg.sink(), cfg.x0
    tol = cfg.values["compare"]["tol"]
    times = cfg.times()
    times = times[times >= cfg.values["compare"]["t_min"]]
    if len(times) == 0:
        raise ConfigError("no output times at or after compare.t_min", "output.t")
    ilt, copts = cfg.ilt(), cfg.closure_opts()

    routes, errors = {}, {}
    try:
        o = origin_series(params, spec, x0, times, ilt, **copts)
        s = survival_series(params, spec, x0, times, ilt, **copts)
        routes["analytic"] = {"origin": o.values, "survival": s.values,
                              "closure_residual_max": max(o.residual_max, s.residual_max),
                              "ilt_flags_set": int(np.sum(o.flags) + np.sum(s.flags))}
    except (NumericalError, ValidationError) as exc:
        errors["analytic"] = _err(exc)
    try:
        res, _ = _run_cn(cfg, times)
        routes["cn"] = {"origin": np.interp(times, res.t, res.origin),
                        "survival": np.interp(times, res.t, res.survival)}
    except (NumericalError, ValidationError) as exc:
        errors["cn"] = _err(exc)
    try:
        h = cfg.values["volterra"]["dt"]
        n = int(math.ceil(times.max() / h))
        tg = np.linspace(0.0, n * h, n + 1)
        p = volterra_p0(params, spec, x0, tg)
        routes["volterra"] = {"origin": np.interp(times, tg, p)}
    except (NumericalError, ValidationError) as exc:
        errors["volterra"] = _err(exc)
    if not routes:
        raise NumericalError("every comparison route failed: " + json.dumps(errors, sort_keys=True))

    diff_rows, comparisons, curves = [], [], {}
    for obs in ("origin", "survival"):
        have = [r for r in ("analytic", "cn", "volterra") if r in routes and obs in routes[r]]
        for a, b in itertools.combinations(have, 2):
            d = routes[a][obs] - routes[b][obs]
            curves[f"{obs}: {a}-{b}"] = d
            comparisons.append({"observable": obs, "routes": [a, b], "sup": _sup(d), "l2": _rms(d),
                                "tol": tol, "passed": _sup(d) <= tol})
            diff_rows.extend((obs, f"{a}-{b}", t, va, vb, va - vb)
                             for t, va, vb in zip(times, routes[a][obs], routes[b][obs]))
    write_csv(out / "diff.csv", ["observable", "pair", "t", "value_a", "value_b", "difference"], diff_rows)

    def col(r, obs):
        return routes[r][obs] if r in routes and obs in routes[r] else np.full(len(times), np.nan)

    write_csv(
        out / "field.csv",
        ["t", "x", "P_analytic", "P_cn", "P_volterra", "S_analytic", "S_cn"],
        [(t, 0.0, *vals) for t, *vals in zip(times, col("analytic", "origin"), col("cn", "origin"),
                                                col("volterra", "origin"), col("analytic", "survival"),
                                                col("cn", "survival"))],
    )
    report = fidelity_report(params, x0, spec)
    validate_report(report)
    summary = {
        "command": "compare",
        "version": __version__,
        "config": cfg.resolved(),
        "routes": {r: {k: v for k, v in d.items() if k not in ("origin", "survival")} | {"status": "ok"}
                   for r, d in routes.items()} | {r: {"status": "failed", **e} for r, e in errors.items()},
        "comparisons": comparisons,
        "passed": bool(comparisons) and all(c["passed"] for c in comparisons),
        "fidelity": report,
    }
    write_json(out / "summary.json", summary)
    if cfg.values["output"]["plots"]:
        from sinklab.plotting import plot_differences, plot_routes

        plot_routes(out / "origin.png", times, {r: col(r, "origin") for r in routes}, "P(0,t)",
                    f"origin density, {spec.law} sink")
        plot_routes(out / "survival.png", times,
                    {r: col(r, "survival") for r in routes if "survival" in routes[r]}, "S(t)", "survival")
        if curves:
            plot_differences(out / "diff.png", times, curves, tol)
    return EXIT_OK


def _err(exc):
    kind = "config" if isinstance(exc, ValidationError) else "numerical"
    return {"error": kind, "message": str(exc)}


def _sweep_cell(values, updates, route, t_obs):
    cfg = with_values(RunConfig(values), updates)
    try:
        params, spec, x0 = cfg.params(), cfg.sink(), cfg.x0
        if route == "analytic":
            S = float(survival_series(params, spec, x0, [t_obs], cfg.ilt(), **cfg.closure_opts()).values[0])
            P0 = float(origin_series(params, spec, x0, [t_obs], cfg.ilt(), **cfg.closure_opts()).values[0])
        else:
            res = cn_solve(params, spec, x0, cfg.grid(t_obs), t_out=[t_obs])
            S = float(np.interp(t_obs, res.t, res.survival))
            P0 = float(np.interp(t_obs, res.t, res.origin))
        return S, P0, "ok", ""
    except (NumericalError, ValidationError) as exc:
        return math.nan, math.nan, "failed", str(exc)


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    keys = list(cfg.sweep)
    route = cfg.values["sweep"]["route"]
    t_obs = cfg.values["sweep"]["t_obs"]
    if not t_obs > 0:
        raise ConfigError("must be > 0", "sweep.t_obs")
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(cfg.sweep[k] for k in keys))] if keys else []
    n_workers = min(thread_cap(), max(len(cells), 1))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_sweep_cell, [cfg.values] * len(cells), cells,
                                    [route] * len(cells), [t_obs] * len(cells)))
    else:
        results = [_sweep_cell(cfg.values, c, route, t_obs) for c in cells]
    rows = [[c[k] for k in keys] + list(r) for c, r in zip(cells, results)]
    write_csv(out / "sweep.csv", keys + ["S", "P0", "status", "error"], rows)

    checks = []
    sigma = cfg.values["model"]["sigma"]
    for key in keys:
        if key not in STRENGTH_KEYS or sigma != -1:
            continue
        others = [k for k in keys if k != key]
        groups = {}
        for c, r in zip(cells, results):
            groups.setdefault(tuple(c[k] for k in others), []).append((abs(c[key]), r[0]))
        ok = True
        for pts in groups.values():
            pts.sort()
            vals = [v for _, v in pts if math.isfinite(v)]
            ok &= all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        checks.append({"check": f"S(t_obs) nonincreasing in |{key}|", "passed": ok})
    summary = {
        "command": "sweep",
        "version": __version__,
        "config": cfg.resolved(),
        "cells": len(cells),
        "failed_cells": sum(r[2] != "ok" for r in results),
        "workers": n_workers,
        "checks": checks,
    }
    write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_selftest(cfg: RunConfig, out: Path) -> int:
    """Fast internal consistency checks; exit 3 if any fails."""
    from sinklab.closure import closure_residual, origin_response
    from sinklab.green import exact_v_green, free_drift_green
    from sinklab.ilt import talbot
    from sinklab.model import Constant, ExpDecay, InverseTime, Linear
    from sinklab.oracle import GridSpec

    checks = []

    def add(name, value, limit):
        checks.append({"check": name, "value": value, "limit": limit, "passed": bool(value < limit)})

    add("talbot 1/(s+2) at t=1", abs(talbot(lambda s: 1 / (s + 2), 1.0) - math.exp(-2)), 1e-8)
    add("talbot 1/sqrt(s) at t=1", abs(talbot(lambda s: 1 / np.sqrt(s), 1.0) - 1 / math.sqrt(math.pi)), 1e-4)
    P = ModelParams(1.0, 1.0, -1)
    s = np.array([0.5, 1.0, 2.0 + 1.0j, 7.0])
    base = origin_response(s, P, NoSink(), 0.5).p0
    worst = max(
        float(np.max(np.abs(origin_response(s, P, sp, 0.5).p0 - base)))
        for sp in (Constant(0.0), Linear(0.0), InverseTime(0.0), ExpDecay(0.0, 1.0))
    )
    add("zero-strength laws equal no sink", worst, 1e-10)
    add("omega->0 propagator equals free diffusion",
        float(np.max(np.abs(exact_v_green(np.array([-1.0, 0.0, 0.7]), 0.3, 1.5, ModelParams(1.0, 0.0))
                            - free_drift_green(np.array([-1.0, 0.0, 0.7]), 0.3, 1.5, ModelParams(1.0, 0.0))))),
        1e-10)
    for sp in (Constant(0.5), Linear(0.5), InverseTime(0.3, 0.01), ExpDecay(0.5, 1.0)):
        r = origin_response(s, P, sp, 0.5)
        add(f"closure residual, {sp.law}", float(np.max(closure_residual(r, P, 0.5))), 1e-8)
    g = GridSpec.auto(P, 2.0, dx=0.02, dt=2e-3)
    res = cn_solve(P, NoSink(), 0.5, g)
    add("CN conservation without sink", float(np.max(np.abs(res.survival - 1))), 1e-4)
    summary = {"command": "selftest", "version": __version__, "checks": checks,
               "passed": all(c["passed"] for c in checks)}
    write_json(out / "summary.json", summary)
    return EXIT_OK if summary["passed"] else EXIT_NUMERICAL


COMMANDS = {
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="sinklab", description="V-potential diffusion with a time-dependent point sink")
    ap.add_argument("--version", action="version", version=f"sinklab {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI-style config file (defaults are used when omitted)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a setting, e.g. --set sink.alpha0=0.5 (repeatable)")
    ap.add_argument("--out", required=True, help="output directory")
    return ap


def _fail(out, code, kind, exc):
    payload = {"error": kind, "exit_code": code, "message": str(exc)}
    if getattr(exc, "field", None):
        payload["field"] = exc.field
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "error.json", payload)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        thread_cap()
        if args.config:
            cfg = load_config_file(args.config, args.overrides)
        else:
            cfg = load_config("", args.overrides)
        cfg.validate()
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ValidationError as exc:
        return _fail(out, EXIT_CONFIG, "config", exc)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(out, EXIT_NUMERICAL, "numerical", exc)


if __name__ == "__main__":
    sys.exit(main())
