"""Time-domain oracles: Crank-Nicolson finite volumes and Monte Carlo paths.

The finite-volume scheme works on nodes x_i = -L + i dx with control
volumes of width dx (half cells at the reflecting ends).  The flux between
neighbouring nodes uses the Scharfetter-Gummel form

    J_{i+1/2} = (D/dx) [B(du) P_i - B(-du) P_{i+1}],   B(z) = z / (e^z - 1),

with du = omega (|x_{i+1}| - |x_i|).  It reduces to centred differences
where the potential is smooth, handles the cusp at the origin node
exactly, and keeps exp(-omega|x|) as an exact discrete steady state.
The sink 2 sigma k(t) delta_h(x) P is a diagonal term; delta_h is a hat of
half-width h sampled at the nodes and normalised so sum(delta_h dx) = 1.
With h = dx only the origin node carries it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import solve_banded

from sinklab.model import ModelParams, NumericalError, ValidationError


@dataclass(frozen=True)
class GridSpec:
    """Spatial and temporal resolution of the finite-volume oracle.

    ``delta_width`` is the hat half-width in units of dx (1 = single node).
    """

    L: float = 25.0
    nx: int = 5001
    dt: float = 1e-3
    t_max: float = 5.0
    delta_width: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L > 0):
            raise ValidationError(f"L must be finite and > 0, got {self.L!r}")
        if self.nx < 5 or self.nx % 2 == 0:
            raise ValidationError(f"nx must be odd and >= 5 so the origin is a node, got {self.nx!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be finite and > 0, got {self.dt!r}")
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise ValidationError(f"t_max must be finite and > 0, got {self.t_max!r}")
        if not (math.isfinite(self.delta_width) and self.delta_width >= 1):
            raise ValidationError(f"delta_width must be >= 1 (units of dx), got {self.delta_width!r}")

    @property
    def dx(self) -> float:
        return 2 * self.L / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.nx)

    @classmethod
    def auto(cls, params: ModelParams, t_max: float, dx: float = 0.01, dt: float = 1e-3, delta_width: float = 1.0):
        """Half-length with exp(-omega L) < 1e-10 (or 8 sqrt(D t_max) + 2 for free diffusion)."""
        L = 8 * math.sqrt(params.D * t_max) + 2
        if params.omega > 0:
            L = max(L if params.omega < 0.5 else 0.0, 10 * math.log(10) / params.omega + 1)
        n_half = int(math.ceil(L / dx))
        return cls(L=n_half * dx, nx=2 * n_half + 1, dt=dt, t_max=t_max, delta_width=delta_width)

    def check_domain(self, params: ModelParams):
        if params.omega > 0:
            ok = math.exp(-params.omega * self.L) < 1e-10
        else:
            ok = self.L > 8 * math.sqrt(params.D * self.t_max)
        if not ok:
            raise ValidationError(
                "domain too short: need exp(-omega L) < 1e-10, or L > 8 sqrt(D t_max) when omega = 0"
            )


@dataclass
class TimeGridField:
    """Oracle output.

    ``t``, ``origin``, ``survival`` and ``flux`` are full time series (every
    step); ``field`` holds P(x, t) at ``t_field`` only.
    """

    x: np.ndarray
    t: np.ndarray
    origin: np.ndarray
    survival: np.ndarray
    flux: np.ndarray
    t_field: np.ndarray
    field: np.ndarray
    source: str = "cn"
    survival_err: np.ndarray | None = None
    probes: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def at_times(self, times):
        """P(x, t) for ``times`` that are in ``t_field``."""
        idx = [int(np.argmin(np.abs(self.t_field - t))) for t in np.atleast_1d(times)]
        for i, t in zip(idx, np.atleast_1d(times)):
            if abs(self.t_field[i] - t) > 1e-9 * max(1.0, abs(t)):
                raise ValidationError(f"t={t} was not stored; pass it in t_out")
        return self.field[idx]


def bernoulli(z):
    """B(z) = z / (e^z - 1), with B(0) = 1."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = np.abs(z) > 1e-8
    out[nz] = z[nz] / np.expm1(z[nz])
    out[~nz] = 1.0 - z[~nz] / 2
    return out


def hat_weights(x, width):
    """Nodal hat of half-width ``width`` normalised to unit discrete mass."""
    dx = x[1] - x[0]
    w = np.clip(1.0 - np.abs(x) / width, 0.0, None)
    if w.sum() == 0:
        raise ValidationError("sink hat does not cover any node")
    return w / (w.sum() * dx)


def _operator(params: ModelParams, x):
    """Banded (3, n) matrix of the sink-free operator acting on nodal values."""
    D, w = params.D, params.omega
    dx = x[1] - x[0]
    du = w * (np.abs(x[1:]) - np.abs(x[:-1]))
    bp, bm = bernoulli(du), bernoulli(-du)
    vol = np.full(len(x), dx)
    vol[0] = vol[-1] = dx / 2
    c = D / dx
    # dP_i/dt vol_i = J_{i-1/2} - J_{i+1/2}
    diag = np.zeros(len(x))
    upper = np.zeros(len(x))  # coefficient of P_{i+1} in row i, stored at column i+1
    lower = np.zeros(len(x))  # coefficient of P_{i-1} in row i, stored at column i-1
    diag[:-1] -= c * bp
    upper[1:] = c * bm
    diag[1:] -= c * bm
    lower[:-1] = c * bp
    ab = np.zeros((3, len(x)))
    ab[0] = upper / vol[np.r_[0, : len(x) - 1]]
    ab[0, 0] = 0.0
    ab[1] = diag / vol
    ab[2, :-1] = lower[:-1] / vol[1:]
    return ab, vol


def _banded_matvec(ab, v):
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def _graded_start(dt_start, dt, t_max, growth=1.1):
    """Geometric steps from dt_start up to dt."""
    pts, t, h = [], 0.0, dt_start
    while h < dt and t + h < t_max:
        t += h
        pts.append(t)
        h *= growth
    return np.array(pts)


def _step_schedule(t_max, dt, t_out, dt_start=None):
    """Time levels hitting every requested output time exactly.

    With ``dt_start`` the run begins with geometrically growing steps,
    which resolves the short-time spike of a source sitting on a probe.
    """
    graded = _graded_start(dt_start, dt, t_max) if dt_start else np.zeros(0)
    marks = np.unique(np.concatenate([[0.0], graded, np.asarray(t_out, dtype=float), [t_max]]))
    marks = marks[(marks >= 0) & (marks <= t_max)]
    levels = [np.array([0.0])]
    for a, b in zip(marks[:-1], marks[1:]):
        n = max(1, int(math.ceil((b - a) / dt - 1e-9)))
        levels.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(levels)


def _snap_source(x, x0):
    i = int(np.argmin(np.abs(x - x0)))
    return i, float(x[i])


def cn_solve(
    params: ModelParams, spec, x0, grid: GridSpec, t_out=None, rate=None, rannacher=2, probes=None, dt_start=None
) -> TimeGridField:
    """Crank-Nicolson run from P(x,0) = delta(x - x0).

    ``t_out`` selects the times at which the whole field is stored (always
    including t_max); the time step is shortened locally so they are hit
    exactly.  ``probes`` lists positions (snapped to nodes) recorded at every
    step.  ``dt_start`` switches on a graded start.  ``rate`` overrides the sink law with any callable k(t).  The
    first step is replaced by ``rannacher`` implicit-Euler substeps.
    """
    grid.check_domain(params)
    x = grid.x
    dx = grid.dx
    if abs(x0) > grid.L - 10 * dx:
        raise ValidationError("x0 lies outside the computational domain")
    k_of = rate if rate is not None else spec.rate
    ab, vol = _operator(params, x)
    delta = hat_weights(x, grid.delta_width * dx)
    sink_shape = 2.0 * params.sigma * delta
    i0 = len(x) // 2
    t_out = np.atleast_1d(np.asarray([] if t_out is None else t_out, dtype=float))
    if np.any(t_out < 0) or np.any(t_out > grid.t_max):
        raise ValidationError("t_out must lie in [0, t_max]")
    if dt_start is not None and not (math.isfinite(dt_start) and 0 < dt_start):
        raise ValidationError("dt_start must be > 0")
    levels = _step_schedule(grid.t_max, grid.dt, t_out, dt_start)
    k = np.asarray(k_of(levels), dtype=float) * np.ones_like(levels)
    if not np.all(np.isfinite(k)):
        raise NumericalError("sink rate is not finite on the time grid")

    isrc, x0_snapped = _snap_source(x, x0)
    P = np.zeros(len(x))
    P[isrc] = 1.0 / vol[isrc]

    origin = np.empty(len(levels))
    surv = np.empty(len(levels))
    iprobe = [int(np.argmin(np.abs(x - xp))) for xp in np.atleast_1d([] if probes is None else probes)]
    trace = np.empty((len(levels), len(iprobe)))
    trace[0] = P[iprobe]
    origin[0] = P[i0]
    surv[0] = float(np.dot(P, vol))
    store = set(np.searchsorted(levels, np.concatenate([t_out, [grid.t_max]]) - 1e-12).tolist())
    t_field, fields = [], []
    if 0 in store:
        t_field.append(0.0)
        fields.append(P.copy())

    for n in range(1, len(levels)):
        h = levels[n] - levels[n - 1]
        if n == 1 and rannacher > 0:
            sub = np.linspace(levels[0], levels[1], rannacher + 1)
            ksub = np.asarray(k_of(sub), dtype=float) * np.ones_like(sub)
            for m in range(1, rannacher + 1):
                hs = sub[m] - sub[m - 1]
                lhs = -hs * ab
                lhs[1] = 1.0 + lhs[1] - hs * sink_shape * ksub[m]
                P = solve_banded((1, 1), lhs, P)
        else:
            rhs = P + 0.5 * h * (_banded_matvec(ab, P) + sink_shape * k[n - 1] * P)
            lhs = -0.5 * h * ab
            lhs[1] = 1.0 + lhs[1] - 0.5 * h * sink_shape * k[n]
            P = solve_banded((1, 1), lhs, rhs)
        if not np.all(np.isfinite(P)):
            raise NumericalError(f"Crank-Nicolson produced non-finite values at t={levels[n]}")
        origin[n] = P[i0]
        trace[n] = P[iprobe]
        surv[n] = float(np.dot(P, vol))
        if n in store:
            t_field.append(levels[n])
            fields.append(P.copy())

    info = {
        "x0_requested": float(x0),
        "x0_used": x0_snapped,
        "dx": dx,
        "steps": len(levels) - 1,
        "min_value": float(min(f.min() for f in fields)),
    }
    flux = 2.0 * k * origin
    return TimeGridField(
        x=x,
        t=levels,
        origin=origin,
        survival=surv,
        flux=flux,
        t_field=np.array(t_field),
        field=np.array(fields),
        source="cn",
        probes=trace if probes is not None else None,
        info=info,
    )


def mc_solve(
    params: ModelParams,
    spec,
    x0,
    n_paths=100_000,
    dt=2e-4,
    t_max=1.0,
    seed=0,
    delta_width=0.05,
    t_out=None,
    bins=None,
    rate=None,
) -> TimeGridField:
    """Euler-Maruyama paths of dX = -omega D sgn(X) dt + sqrt(2D) dW with killing.

    A path at X is removed during a step with probability
    1 - exp(-2 k(t) delta_h(X) dt), delta_h the hat of half-width
    ``delta_width`` (absolute length, unit mass).  Only the absorbing
    sign sigma = -1 has a path interpretation.
    """
    if params.sigma != -1:
        raise ValidationError("Monte Carlo needs sigma = -1 (absorbing sink)")
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    if not (dt > 0 and t_max > 0 and delta_width > 0):
        raise ValidationError("dt, t_max and delta_width must be > 0")
    k_of = rate if rate is not None else spec.rate
    n_steps = int(math.ceil(t_max / dt - 1e-9))
    t = np.linspace(0.0, n_steps * dt, n_steps + 1)
    k = np.asarray(k_of(t), dtype=float) * np.ones_like(t)
    if np.any(k < 0):
        raise ValidationError("Monte Carlo killing needs k(t) >= 0")
    peak = 2 * float(k.max()) / delta_width * dt
    if peak >= 0.1:
        raise ValidationError(f"dt too large for the killing rate: 2 k delta_h dt = {peak:.3g} >= 0.1")
    t_out = np.atleast_1d(np.asarray([] if t_out is None else t_out, dtype=float))
    out_steps = {int(round(tt / dt)): tt for tt in t_out}
    if bins is None:
        reach = 3 * math.sqrt(2 * params.D * t_max) + abs(x0) + 1
        bins = np.linspace(-reach, reach, 201)
    bins = np.asarray(bins, dtype=float)
    centers = 0.5 * (bins[1:] + bins[:-1])

    rng = np.random.default_rng(seed)
    X = np.full(n_paths, float(x0))
    alive = np.ones(n_paths, dtype=bool)
    surv = np.empty(n_steps + 1)
    flux = np.zeros(n_steps + 1)
    surv[0] = 1.0
    drift = params.omega * params.D
    noise = math.sqrt(2 * params.D * dt)
    hists, t_field = [], []

    def hat(y):
        return np.clip(1.0 - np.abs(y) / delta_width, 0.0, None) / delta_width

    for n in range(1, n_steps + 1):
        idx = np.flatnonzero(alive)
        xa = X[idx]
        xn = xa - drift * np.sign(xa) * dt + noise * rng.standard_normal(len(idx))
        # trapezoid in time for the killing intensity over the step
        lam = (k[n - 1] * hat(xa) + k[n] * hat(xn)) * dt
        killed = rng.random(len(idx)) < -np.expm1(-lam)
        X[idx] = xn
        alive[idx[killed]] = False
        surv[n] = alive.sum() / n_paths
        flux[n] = killed.sum() / n_paths / dt
        if n in out_steps:
            h, _ = np.histogram(X[alive], bins=bins)
            hists.append(h / (n_paths * np.diff(bins)))
            t_field.append(t[n])
    err = np.sqrt(np.clip(surv * (1 - surv), 0, None) / n_paths)
    # origin density from the bin containing 0
    return TimeGridField(
        x=centers,
        t=t,
        origin=np.full(n_steps + 1, np.nan),
        survival=surv,
        flux=flux,
        t_field=np.array(t_field),
        field=np.array(hists) if hists else np.zeros((0, len(centers))),
        source="mc",
        survival_err=err,
        info={"seed": seed, "n_paths": n_paths, "dt": dt, "delta_width": delta_width, "alive_positions": X[alive]},
    )


def numeric_laplace(t, values, s, t_max=None, tail="constant", min_decay=20.0, rule="trapezoid"):
    """int_0^inf exp(-s t) P(t) dt from samples; returns (value, remainder).

    Trapezoid (or ``rule='simpson'``) quadrature on the samples up to
    ``t_max`` (default: last sample).
    The remainder beyond ``t_max`` is P(t_max) exp(-s t_max) / s, which is
    exact for a series that has reached a constant.  With ``tail='none'``
    the remainder is only reported, and an insufficient window
    (s t_max < ``min_decay``) raises instead of truncating silently.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.shape != values.shape or t.ndim != 1 or len(t) < 2:
        raise ValidationError("t and values must be 1-d arrays of equal length >= 2")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("t must be strictly increasing")
    s = float(s)
    if not s > 0:
        raise ValidationError("numeric_laplace needs real s > 0")
    if t_max is not None:
        keep = t <= t_max + 1e-12
        t, values = t[keep], values[keep]
    tm = t[-1]
    w = np.exp(-s * t)
    if rule == "trapezoid":
        body = float(np.trapezoid(w * values, t))
    elif rule == "simpson":
        body = float(simpson(w * values, x=t))
    else:
        raise ValidationError(f"unknown quadrature rule {rule!r}")
    remainder = float(values[-1] * math.exp(-s * tm) / s)
    if tail == "constant":
        return body + remainder, abs(remainder)
    if tail == "none":
        if s * tm < min_decay:
            raise ValidationError(
                f"s*t_max = {s * tm:.3g} < {min_decay}: truncation error not negligible; use tail='constant'"
            )
        return body, abs(remainder)
    raise ValidationError(f"unknown tail model {tail!r}")
