"""Time-domain results of the Laplace-domain route.

All Talbot nodes for all requested times are evaluated in one call to the
closure, so the ODE-type laws share their ray quadratures.  Closure
residuals are reported per node; ``residual_max`` only counts nodes whose
weighted contribution to the inversion is visible in double precision
(see ``contributing_nodes``), while ``residual_max_all`` covers every node.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from sinklab.closure import assemble_field, closure_residual, origin_response
from sinklab.ilt import IltConfig, stehfest_coefficients, talbot_contour, talbot_scale
from sinklab.model import ModelParams, NumericalError, ValidationError, spectral

# nodes contributing less than this fraction of the inversion sum are ignored
# in the residual summary
CONTRIBUTION_FLOOR = 1e-16


@dataclass
class LaplaceSeries:
    """Inverted time series with per-time diagnostics."""

    t: np.ndarray
    values: np.ndarray
    discrepancy: np.ndarray
    flags: np.ndarray
    residual_max: float
    residual_max_all: float
    info: dict = field(default_factory=dict)


def _check_times(times):
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise ValidationError("analytic times must be finite and > 0")
    return t


def talbot_plan(times, M):
    """Nodes (len(times), M) and the matching complex weights r/M w exp(r t z)."""
    z, w = talbot_contour(M)
    r = np.array([talbot_scale(t, M) for t in times])
    nodes = r[:, None] * z[None, :]
    weights = (r / M)[:, None] * w[None, :] * np.exp(r[:, None] * times[:, None] * z[None, :])
    return nodes, weights


def contributing_nodes(weights, values):
    """Mask of nodes whose term |w F| is above CONTRIBUTION_FLOOR of the row total."""
    terms = np.abs(weights * values)
    total = terms.sum(axis=-1, keepdims=True)
    return terms >= CONTRIBUTION_FLOOR * np.maximum(total, 1e-300)


def stehfest_plan(times, N):
    V = np.array(stehfest_coefficients(N))
    a = np.log(2.0) / times
    nodes = a[:, None] * np.arange(1, N + 1)[None, :]
    return nodes.astype(complex), a[:, None] * V[None, :]


def _solve(params, spec, x0, nodes, closure_opts):
    flat = nodes.ravel()
    resp = origin_response(flat, params, spec, x0, **closure_opts)
    res = closure_residual(resp, params, x0).reshape(nodes.shape)
    return resp, res


def _invert(params, spec, x0, times, ilt: IltConfig, closure_opts, transform):
    """Shared driver: ``transform(resp)`` maps an OriginResponse to (n_nodes, ...) values."""
    times = _check_times(times)
    use_talbot = ilt.method in ("talbot", "both")
    use_steh = ilt.method in ("stehfest", "both")
    out_t = out_s = None
    res_used, res_all = [], []
    if use_talbot:
        nodes, weights = talbot_plan(times, ilt.talbot_nodes)
        resp, res = _solve(params, spec, x0, nodes, closure_opts)
        vals = transform(resp)  # shape (n_nodes_total, ...)
        vals = vals.reshape(nodes.shape + vals.shape[1:])
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite transform value on the Talbot contour")
        wexp = weights.reshape(weights.shape + (1,) * (vals.ndim - 2))
        out_t = np.sum(wexp * vals, axis=1).real
        mask = contributing_nodes(weights, resp.p0.reshape(nodes.shape))
        res_used.append(res[mask])
        res_all.append(res.ravel())
    if use_steh:
        nodes, weights = stehfest_plan(times, ilt.stehfest_terms)
        resp, res = _solve(params, spec, x0, nodes, closure_opts)
        vals = transform(resp)
        vals = vals.reshape(nodes.shape + vals.shape[1:]).real
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite transform value on the real axis")
        wexp = weights.reshape(weights.shape + (1,) * (vals.ndim - 2))
        out_s = np.sum(wexp * vals, axis=1)
        res_used.append(res.ravel())
        res_all.append(res.ravel())
    if ilt.method == "both":
        disc = np.abs(out_t - out_s)
        values = out_t
    else:
        disc = np.full(out_t.shape if out_t is not None else out_s.shape, np.nan)
        values = out_t if out_t is not None else out_s
    flags = np.nan_to_num(disc, nan=0.0) > ilt.agreement_tol
    r_used = float(np.max(np.concatenate(res_used))) if res_used else 0.0
    r_all = float(np.max(np.concatenate(res_all))) if res_all else 0.0
    return times, values, disc, flags, r_used, r_all


def origin_series(params: ModelParams, spec, x0, times, ilt: IltConfig = IltConfig(), **closure_opts) -> LaplaceSeries:
    """P(0, t) by inversion of the closure solution."""
    t, v, d, f, r, ra = _invert(params, spec, x0, times, ilt, closure_opts, lambda resp: resp.p0)
    return LaplaceSeries(t, v, d, f, r, ra)


def field_series(params: ModelParams, spec, x0, x, times, ilt: IltConfig = IltConfig(), **closure_opts) -> LaplaceSeries:
    """P(x, t) on the grid ``times`` x ``x``; ``values`` has shape (len(t), len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def transform(resp):
        return assemble_field(x[None, :], _column(resp), params, spec, x0)

    t, v, d, f, r, ra = _invert(params, spec, x0, times, ilt, closure_opts, transform)
    return LaplaceSeries(t, v, d, f, r, ra)


def _column(resp):
    """View an OriginResponse with s as a column so it broadcasts against x."""
    return replace(resp, s=resp.s[:, None], p0=resp.p0[:, None], sink_lap=resp.sink_lap[:, None], a_s=resp.a_s[:, None])


def survival_laplace(resp, params: ModelParams):
    """S(s) = 1/s + 2 a(s)/(p+q): the conserved part plus the integrated sink mode."""
    q, p = spectral(params, resp.s)
    return 1.0 / resp.s + 2.0 * resp.a_s / (p + q)


def survival_series(params: ModelParams, spec, x0, times, ilt: IltConfig = IltConfig(), **closure_opts) -> LaplaceSeries:
    """S(t) by inversion of the integrated field."""
    t, v, d, f, r, ra = _invert(
        params, spec, x0, times, ilt, closure_opts, lambda resp: survival_laplace(resp, params)
    )
    return LaplaceSeries(t, v, d, f, r, ra)
