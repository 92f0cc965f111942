"""Survival, sink flux, effective rate and the equilibrium profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sinklab.analytic import survival_series
from sinklab.ilt import IltConfig
from sinklab.model import ModelParams, ValidationError

SOURCES = ("analytic-ilt", "cn", "mc", "volterra")


@dataclass
class SurvivalCurve:
    t: np.ndarray
    S: np.ndarray
    source: str
    discrepancy: np.ndarray | None = None
    flags: np.ndarray | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValidationError(f"unknown survival source {self.source!r}")
        self.t = np.asarray(self.t, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.t.shape != self.S.shape:
            raise ValidationError("t and S must have the same shape")


def survival_from_laplace(params: ModelParams, spec, x0, t, ilt: IltConfig = IltConfig(), **closure_opts) -> SurvivalCurve:
    """S(t) from the transformed field integrated in closed form and inverted."""
    series = survival_series(params, spec, x0, t, ilt, **closure_opts)
    return SurvivalCurve(series.t, series.values, "analytic-ilt", series.discrepancy, series.flags)


def sink_flux(spec, t, origin, rate=None):
    """J(t) = 2 k(t) P(0,t), the rate at which the sink exchanges probability."""
    t = np.asarray(t, dtype=float)
    origin = np.asarray(origin, dtype=float)
    if t.shape != origin.shape:
        raise ValidationError(f"time grid {t.shape} and origin series {origin.shape} do not match")
    k = rate(t) if rate is not None else spec.rate(t)
    return 2.0 * np.asarray(k, dtype=float) * origin


def effective_rate(J, S, floor=1e-6):
    """k_eff = J/S where S > ``floor``, NaN elsewhere."""
    J = np.asarray(J, dtype=float)
    S = np.asarray(S, dtype=float)
    out = np.full(np.broadcast(J, S).shape, np.nan)
    ok = S > floor
    out[ok] = J[ok] / S[ok]
    return out


def flux_identity_residual(t, S, J, sigma=-1, skip=1):
    """max |dS/dt - sigma J| over step midpoints, J averaged over each step.

    The first ``skip`` steps are left out (startup steps are not
    trapezoidal in time).  Returns (residual, scale) with
    scale = max |J|.
    """
    t = np.asarray(t, dtype=float)
    S = np.asarray(S, dtype=float)
    J = np.asarray(J, dtype=float)
    if not (t.shape == S.shape == J.shape) or len(t) < skip + 3:
        raise ValidationError("t, S and J must share one grid with at least a few steps")
    dS = np.diff(S) / np.diff(t)
    Jm = 0.5 * (J[1:] + J[:-1])
    r = np.abs(dS - sigma * Jm)[skip:]
    return float(r.max()), float(np.abs(J).max())


def equilibrium_profile(params: ModelParams, x):
    """Stationary density (omega/2) exp(-omega |x|)."""
    if params.omega <= 0:
        raise ValidationError("no normalisable equilibrium for omega = 0")
    x = np.asarray(x, dtype=float)
    return 0.5 * params.omega * np.exp(-params.omega * np.abs(x))
