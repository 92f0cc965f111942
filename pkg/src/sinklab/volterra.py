"""Time-domain origin density from the Volterra form of the closure.

    P(0,t) = G(0,t|x0) + 2 sigma int_0^t G(0,t-t'|0) k(t') P(0,t') dt'

The kernel is known in closed form,

    G(0,tau|0) = exp(-D q^2 tau) / (2 sqrt(pi D tau)) + q/2 + (q/2) erf(q sqrt(D tau)),

and is split as tau^(-1/2) k1(tau) + q/2 + tau^(1/2) k2(tau) with k1, k2 smooth.
Each piece is integrated against a piecewise-linear interpolant of
k(t')P(0,t') times the smooth factor, using exact moments of tau^beta on
every panel (product integration), then solved by forward substitution.
The forcing G(0,t|x0) comes from the Talbot inversion of the sink-free
propagator.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from sinklab.green import green_at_origin
from sinklab.ilt import talbot
from sinklab.model import ModelParams, NumericalError, ValidationError


def origin_kernel(tau, params: ModelParams):
    """G(0,tau|0), the sink-free return density at the cusp."""
    tau = np.asarray(tau, dtype=float)
    D, q = params.D, params.q
    return (
        np.exp(-D * q * q * tau) / (2 * np.sqrt(math.pi * D * tau))
        + 0.5 * q
        + 0.5 * q * erf(q * np.sqrt(D * tau))
    )


def _kernel_parts(params):
    D, q = params.D, params.q
    c2 = 0.5 * q

    def k1(tau):
        return np.exp(-D * q * q * tau) / (2 * math.sqrt(math.pi * D))

    def k0(tau):
        return np.full_like(tau, 0.5 * q)

    def k2(tau):
        # (q/2) erf(q sqrt(D tau)) / sqrt(tau), finite at tau = 0
        out = np.empty_like(tau)
        z = q * np.sqrt(D * tau)
        small = z < 1e-4
        out[~small] = c2 * erf(z[~small]) / np.sqrt(tau[~small])
        out[small] = c2 * q * math.sqrt(D) * 2 / math.sqrt(math.pi) * (1 - z[small] ** 2 / 3)
        return out

    return [(-0.5, k1), (0.0, k0), (0.5, k2)]


def _moments(lo, hi, beta):
    """int_lo^hi tau^beta dtau and int_lo^hi tau^(beta+1) dtau."""
    m0 = (hi ** (beta + 1) - lo ** (beta + 1)) / (beta + 1)
    m1 = (hi ** (beta + 2) - lo ** (beta + 2)) / (beta + 2)
    return m0, m1


def origin_forcing(params: ModelParams, x0, t_grid, M=32):
    """G(0,t|x0) on the grid via Talbot; exactly 0 at t = 0 for x0 != 0."""
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.empty_like(t_grid)
    F = lambda s: green_at_origin(x0, s, params, allow_continuation=True)  # noqa: E731
    for i, t in enumerate(t_grid):
        if t == 0:
            out[i] = 0.0 if x0 != 0 else np.inf
        else:
            out[i] = talbot(F, t, M)
    return out


def volterra_p0(params: ModelParams, spec, x0, t_grid, rate=None, forcing=None):
    """Solve for P(0,t) on ``t_grid`` (increasing, starting at 0).

    ``rate`` overrides the sink law with an arbitrary callable k(t).
    Returns an array aligned with ``t_grid``; the t = 0 entry is the
    initial value (0 for a source off the sink).
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 2 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValidationError("t_grid must be strictly increasing and start at 0")
    k = np.asarray(rate(t) if rate is not None else spec.rate(t), dtype=float)
    if not np.all(np.isfinite(k)):
        raise NumericalError("sink rate is not finite on the time grid")
    g = origin_forcing(params, x0, t) if forcing is None else np.asarray(forcing, dtype=float)
    if not np.all(np.isfinite(g[1:])):
        raise NumericalError("kernel inversion produced non-finite forcing")
    if x0 == 0 and np.any(k[:1] != 0):
        raise ValidationError("source on the sink needs k(0) = 0 for the Volterra route")

    parts = _kernel_parts(params)
    two_s = 2.0 * params.sigma
    n_t = len(t)
    P = np.zeros(n_t)
    P[0] = g[0] if np.isfinite(g[0]) else 0.0
    f = np.zeros(n_t)  # k * P
    f[0] = k[0] * P[0]
    for n in range(1, n_t):
        tn = t[n]
        lo = tn - t[1 : n + 1]  # panel j = [t_j, t_{j+1}] -> tau in [tn - t_{j+1}, tn - t_j]
        hi = tn - t[:n]
        h = t[1 : n + 1] - t[:n]
        w_left = np.zeros(n)  # weight on value at t_j
        w_right = np.zeros(n)  # weight on value at t_{j+1}
        for beta, kern in parts:
            m0, m1 = _moments(lo, hi, beta)
            # linear interpolant in t' = tn - tau:
            #   value(t_j) (t_{j+1} - t')/h + value(t_{j+1}) (t' - t_j)/h
            # with t_{j+1} - t' = tau - lo and t' - t_j = hi - tau
            left = (m1 - lo * m0) / h
            right = (hi * m0 - m1) / h
            w_left += left * kern(hi)
            w_right += right * kern(lo)
        history = np.dot(w_left, f[:n]) + np.dot(w_right[:-1], f[1:n])
        diag = w_right[-1]
        denom = 1.0 - two_s * diag * k[n]
        if denom == 0:
            raise NumericalError(f"singular forward-substitution step at t={tn}")
        P[n] = (g[n] + two_s * history) / denom
        f[n] = k[n] * P[n]
    return P
