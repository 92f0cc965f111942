"""Origin closure for the four sink laws and assembly of the full field.

Treating the sink term 2 sigma k(t) delta(x) P(x, t) as a source located at
the origin gives, in the Laplace domain,

    P(0,s) = G(0,s|x0) + 2 sigma G(0,s|0) L[k P(0,.)](s),

with G the sink-free V-potential propagator.  Each law turns the unknown
transform L[k P(0,.)] into something expressible through P(0,.):

    constant   alpha0 P(0,s)                    algebraic
    linear     -alpha1 dP(0,s)/ds               first-order ODE in s
    inverse    alpha u(s), u = int_s^inf P(0)   first-order ODE in s for u
    expdecay   beta P(0, s + alpha_decay)       shift recursion

The ODE laws are integrated along the horizontal ray s + tau, tau >= 0,
from a large abscissa where the sink correction is negligible back to the
requested point; this works for complex s off the negative real axis, so
the same code feeds the Talbot contour.  Unknowns are carried scaled by
exp((p - q)|x0|) so nothing underflows at large |s|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import exp1

from sinklab.green import exact_v_green, green_at_origin, origin_green
from sinklab.model import (
    Constant,
    ExpDecay,
    InverseTime,
    Linear,
    ModelParams,
    NoSink,
    NumericalError,
    ValidationError,
    spectral,
)


@dataclass(frozen=True)
class OriginResponse:
    """P(0,s) together with the sink transform and homogeneous amplitude.

    All numeric fields have the shape of ``s``.
    """

    s: np.ndarray
    p0: np.ndarray
    sink_lap: np.ndarray
    a_s: np.ndarray
    key: tuple
    depth: np.ndarray | None = None
    info: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class SeriesState:
    """Terms of the expanded shift recursion for one value of s."""

    terms: np.ndarray
    factors: np.ndarray
    depth: int
    tail_bound: float


def _key(params, spec, x0):
    return (params.D, params.omega, params.sigma, repr(spec), float(x0))


def _as_s(s, allow_continuation=True):
    s = np.asarray(s, dtype=complex)
    if not np.all(np.isfinite(s)):
        raise ValidationError("Laplace variable s must be finite")
    if not allow_continuation and np.any(s.real <= 0):
        raise ValidationError("closure requires Re s > 0")
    return s


def _respond(s, params, spec, x0, p0, sink_lap, **extra):
    g1 = green_at_origin(x0, s, params, allow_continuation=True)
    a_s = np.asarray(p0 - g1)
    return OriginResponse(
        s=s, p0=np.asarray(p0), sink_lap=np.asarray(sink_lap), a_s=a_s, key=_key(params, spec, x0), **extra
    )


def p0_nosink(s, params: ModelParams, x0, allow_continuation=True) -> OriginResponse:
    s = _as_s(s, allow_continuation)
    g1 = green_at_origin(x0, s, params, allow_continuation=True)
    return _respond(s, params, NoSink(), x0, np.asarray(g1), np.zeros(s.shape, complex))


def p0_constant(s, params: ModelParams, spec: Constant, x0, allow_continuation=True) -> OriginResponse:
    """Algebraic closure: P(0,s) = G(0|x0) / (1 - 2 sigma alpha0 G(0|0))."""
    s = _as_s(s, allow_continuation)
    g1 = green_at_origin(x0, s, params, allow_continuation=True)
    g0 = origin_green(s, params, allow_continuation=True)
    denom = 1.0 - 2.0 * params.sigma * spec.alpha0 * g0
    if np.any(np.abs(denom) < 1e-13):
        raise NumericalError("constant-sink closure hits a pole (1 - 2 sigma alpha0 G(0|0) = 0)")
    p0 = g1 / denom
    return _respond(s, params, spec, x0, p0, spec.alpha0 * p0)


def printed_p0_constant(s, params: ModelParams, spec: Constant, x0):
    """Printed constant-sink origin value, evaluated with decaying exponent.

    e^{-(p+q)|x0|} (p + q - 2 omega) / (2 (p+q) (p+q-omega-alpha0))
    """
    s = _as_s(s)
    q, p = spectral(params, s)
    w = params.omega
    pp = p + q
    denom = 2 * pp * (pp - w - spec.alpha0)
    if np.any(np.abs(denom) < 1e-14):
        raise NumericalError("printed constant-sink form has a pole at p + q = omega + alpha0")
    return np.exp(-pp * abs(x0)) * (pp - 2 * w) / denom


def default_s_max(s, params: ModelParams) -> float:
    s = np.asarray(s, dtype=complex)
    scale = max(float(np.max(np.abs(s))), params.D * params.q**2 + 1.0)
    return 1e3 * scale


def _ray_span(s, s_max):
    # common tau range so every ray starts at Re >= s_max
    return max(s_max - float(np.min(s.real)), 0.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _ray_quadrature(s, params, integrand, exponent, stop=60.0, max_panels=4000):
    """int_0^inf integrand(s + tau) exp(-(exponent(s + tau) - exponent(s))) dtau.

    Composite 20-point Gauss-Legendre on geometrically growing panels; the
    first panel is a small fraction of the distance from s to the pole at 0
    and the branch point at -D q^2.  Stops once the exponential factor has
    dropped below exp(-stop) for every ray.
    """
    s = np.asarray(s, dtype=complex)
    e0 = exponent(s)
    dist = np.minimum(np.abs(s), np.abs(s + params.D * params.q**2))
    h = 0.02 * max(float(np.min(dist)), 1e-12)
    # resolve the initial decay of the exponential factor as well
    delta = 1e-6 * max(float(np.max(np.abs(s))), 1.0)
    rate = float(np.max(np.abs(exponent(s + delta) - e0))) / delta
    if rate > 0:
        h = min(h, 0.1 / rate)
    total = np.zeros(s.shape, complex)
    a = 0.0
    for _ in range(max_panels):
        b = a + h
        tau = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X
        z = s[:, None] + tau[None, :]
        vals = integrand(z) * np.exp(-(exponent(z) - e0[:, None]))
        total += vals @ (0.5 * (b - a) * _GL_W)
        if np.all((exponent(s + b) - e0).real > stop) and b > 1.0:
            return total
        a, h = b, h * 1.25
    raise NumericalError("ray quadrature did not reach the decay threshold")


def _linear_ode(flat, params, kappa, x0a, s_max, ode_tol):
    D, q = params.D, params.q
    span = _ray_span(flat, s_max)

    def coeffs(tau):
        z = flat + tau
        p = np.sqrt(q * q + z / D)
        pm = (z / D) / (p + q)
        g0 = (p + q) / (2 * z)
        return kappa * pm, g0, x0a / (2 * D * p)

    # y = P(0) exp((p-q)|x0|):  y' = c (y - G(0|0)) + |x0| p' y
    def rhs(tau, y):
        c, g0, dp = coeffs(tau)
        return c * (y - g0) + dp * y

    def jac(tau, y):
        c, _, dp = coeffs(tau)
        return np.diag(c + dp)

    _, g0_end, _ = coeffs(span)
    sol = solve_ivp(rhs, (span, 0.0), g0_end.astype(complex), method="BDF", jac=jac, rtol=ode_tol, atol=1e-14)
    if not sol.success:
        raise NumericalError(f"linear-sink ODE failed: {sol.message}")
    y = sol.y[:, -1]
    c, g0, _ = coeffs(0.0)
    return y, c * (y - g0), sol.nfev


def _linear_quadrature(flat, params, kappa, x0a):
    D, q = params.D, params.q

    def parts(z):
        p = np.sqrt(q * q + z / D)
        return p, (z / D) / (p + q), (p + q) / (2 * z)

    def exponent(z):
        p, _, _ = parts(z)
        return kappa * ((2 * D / 3) * p**3 - q * z) + x0a * p

    def amplitude(z):
        _, pm, g0 = parts(z)
        return kappa * pm * g0

    def d_amplitude(z):
        # d/dz [c G1] - c^2 G1, scaled like the value (see p0_linear)
        p, pm, g0 = parts(z)
        dp = 1.0 / (2 * D * p)
        c = kappa * pm
        dg1 = g0 * (-x0a * dp + dp / (p + q) - 1.0 / z)
        return kappa * dp * g0 + c * dg1 - c * c * g0

    y = _ray_quadrature(flat, params, amplitude, exponent)
    rest = _ray_quadrature(flat, params, d_amplitude, exponent)
    _, pm, _ = parts(flat)
    dy = kappa * pm * y + rest
    return y, dy


def p0_linear(
    s, params: ModelParams, spec: Linear, x0, s_max=None, ode_tol=1e-10, allow_continuation=True, method="quadrature"
) -> OriginResponse:
    """Linear ramp k(t) = alpha1 t.

    L[kP] = -alpha1 dP(0,s)/ds, so the closure becomes

        dP(0,s)/ds = c(s) (P(0,s) - G(0|x0)),   c = -D (p - q) / (sigma alpha1),

    a transform exists only when sigma * alpha1 <= 0 (net removal);
    otherwise P(0,t) grows like exp(const t^2).

    ``method='ode'`` integrates backwards from ``s_max`` with
    P(0, s_max) = G(0, s_max | x0).  ``method='quadrature'`` evaluates the
    integrating-factor solution

        P(0,s) = int_s^inf c(s') G(0,s'|x0) exp(-(F(s') - F(s))) ds',
        F(s) = kappa ((2D/3) p^3 - q s),  kappa = -D / (sigma alpha1),

    and obtains dP/ds from a second quadrature, so the closure residual is
    a genuine consistency check for this method.
    """
    s = _as_s(s, allow_continuation)
    if spec.alpha1 == 0:
        out = p0_nosink(s, params, x0)
        return OriginResponse(out.s, out.p0, out.sink_lap, out.a_s, _key(params, spec, x0))
    if params.sigma * spec.alpha1 > 0:
        raise ValidationError(
            "linear sink with sigma*alpha1 > 0 injects probability at a growing rate; "
            "P(0,t) grows like exp(c t^2) and has no Laplace transform"
        )
    D, q, x0a = params.D, params.q, abs(float(x0))
    kappa = -D / (params.sigma * spec.alpha1)
    flat = s.ravel()
    info = {"method": method}
    if method == "ode":
        if s_max is None:
            s_max = default_s_max(flat, params)
        y, dy, nfev = _linear_ode(flat, params, kappa, x0a, s_max, ode_tol)
        info.update(s_max=s_max, nfev=nfev)
    elif method == "quadrature":
        y, dy = _linear_quadrature(flat, params, kappa, x0a)
    else:
        raise ValidationError(f"unknown method {method!r}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(dy))):
        raise NumericalError("linear-sink solve produced non-finite values")
    _, p = spectral(params, flat)
    decay = np.exp(-((flat / D) / (p + q)) * x0a)
    p0 = y * decay
    sink_lap = -spec.alpha1 * dy * decay
    return _respond(s, params, spec, x0, p0.reshape(s.shape), sink_lap.reshape(s.shape), info=info)


def _scaled_exp1(z):
    """exp(z) E1(z) for Re z > 0 without overflow."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 60
    out[small] = np.exp(z[small]) * exp1(z[small])
    zb = z[~small]
    acc = np.zeros_like(zb)
    term = 1.0 / zb
    for n in range(1, 30):
        acc += term
        term = term * (-n) / zb
    out[~small] = acc
    return out


def inverse_tail(s, params: ModelParams, x0):
    """u0(s) = int_s^inf G(0,s'|x0) ds' in closed form, scaled by exp((p-q)|x0|).

    With v = p - q the integral is e^{-v x0}/x0 + q E1(v x0).
    """
    x0a = abs(float(x0))
    if x0a == 0:
        raise ValidationError("tail integral of G(0|0) diverges; source must be off the sink")
    s = np.asarray(s, dtype=complex)
    q, p = spectral(params, s)
    v = (s / params.D) / (p + q)
    tail = 1.0 / x0a
    if q:
        tail = tail + q * _scaled_exp1(v * x0a)
    return tail


def _inverse_ode(flat, params, two_sa, x0, s_max, ode_tol):
    D, q, x0a = params.D, params.q, abs(float(x0))
    span = _ray_span(flat, s_max)

    def coeffs(tau):
        z = flat + tau
        p = np.sqrt(q * q + z / D)
        g0 = (p + q) / (2 * z)
        return g0, x0a / (2 * D * p)

    # v = u exp((p-q)|x0|):  v' = -G(0|0) (1 + 2 sigma alpha v) + |x0| p' v
    def rhs(tau, v):
        g0, dp = coeffs(tau)
        return -g0 * (1.0 + two_sa * v) + dp * v

    v_end = inverse_tail(flat + span, params, x0) * np.ones_like(flat)
    sol = solve_ivp(rhs, (span, 0.0), v_end.astype(complex), method="DOP853", rtol=ode_tol, atol=1e-14)
    if not sol.success:
        raise NumericalError(f"inverse-time ODE failed: {sol.message}")
    return sol.y[:, -1], sol.nfev


def _inverse_quadrature(flat, params, two_sa, x0a):
    D, q = params.D, params.q

    def exponent(z):
        p = np.sqrt(q * q + z / D)
        # -(integrating factor) + scaling; log(p - q) stays on one branch along each ray
        psi = two_sa * (p + q * np.log((z / D) / (p + q))) if q else two_sa * p
        return -psi + x0a * p

    def amplitude(z):
        p = np.sqrt(q * q + z / D)
        return (p + q) / (2 * z)

    return _ray_quadrature(flat, params, amplitude, exponent)


def p0_inverse(
    s, params: ModelParams, spec: InverseTime, x0, s_max=None, ode_tol=1e-10, allow_continuation=True, method="quadrature"
) -> OriginResponse:
    """Inverse-time sink k(t) = alpha / t.

    With u(s) = int_s^inf P(0,s') ds' the closure reads
    P(0,s) = G(0|x0) + 2 sigma alpha G(0|0) u(s) and u' = -P(0,s), i.e.

        u' + 2 sigma alpha G(0|0) u = -G(0|x0).

    ``method='ode'`` integrates this backwards from ``s_max`` starting at the
    closed-form tail of G(0|x0); ``method='quadrature'`` uses the
    integrating factor exp(2 sigma alpha (p + q log(p - q))).  P(0,s) is
    recovered from the closure, not by differentiating u.  The transform
    uses the ungated law; the activation time only enters the time-domain
    oracles, where its effect is of order P(0, t_on), tiny for x0 != 0.
    """
    s = _as_s(s, allow_continuation)
    if spec.alpha == 0:
        out = p0_nosink(s, params, x0)
        return OriginResponse(out.s, out.p0, out.sink_lap, out.a_s, _key(params, spec, x0))
    if float(x0) == 0:
        raise ValidationError(
            "inverse-time sink with the source on the sink: int P(0,t)/t dt diverges at t = 0"
        )
    D, q, x0a = params.D, params.q, abs(float(x0))
    two_sa = 2.0 * params.sigma * spec.alpha
    flat = s.ravel()
    info = {"method": method}
    if method == "ode":
        if s_max is None:
            s_max = default_s_max(flat, params)
        v, nfev = _inverse_ode(flat, params, two_sa, x0, s_max, ode_tol)
        info.update(s_max=s_max, nfev=nfev)
    elif method == "quadrature":
        if params.sigma > 0 and x0a <= 2 * spec.alpha:
            raise ValidationError("integrating-factor integral diverges for sigma=+1 unless |x0| > 2 alpha")
        v = _inverse_quadrature(flat, params, two_sa, x0a)
    else:
        raise ValidationError(f"unknown method {method!r}")
    if not np.all(np.isfinite(v)):
        raise NumericalError("inverse-time solve produced non-finite values")
    _, p = spectral(params, flat)
    decay = np.exp(-((flat / D) / (p + q)) * x0a)
    u = v * decay
    g1 = green_at_origin(x0, flat, params, allow_continuation=True)
    g0 = origin_green(flat, params, allow_continuation=True)
    p0 = g1 + two_sa * g0 * u
    info["u"] = u.reshape(s.shape)
    return _respond(s, params, spec, x0, p0.reshape(s.shape), (spec.alpha * u).reshape(s.shape), info=info)


def expdecay_series(s, params: ModelParams, spec: ExpDecay, x0, depth_max=400, tail_tol=1e-15, min_depth=0):
    """Expand P(0,s) = sum_n [prod_{j<n} 2 sigma beta G(0, s+j a|0)] G(0, s+n a|x0).

    Returns (value, SeriesState).  Truncation stops once the geometric tail
    bound |term_N| r/(1-r), r the last factor magnitude, drops below
    ``tail_tol`` times the partial sum, or at ``min_depth`` if that is larger.
    """
    s = complex(s)
    a = spec.alpha_decay
    coupling = 2.0 * params.sigma * spec.beta
    terms, factors = [], []
    prod = 1.0 + 0j
    total = 0j
    for n in range(depth_max + 1):
        sn = s + n * a
        term = prod * green_at_origin(x0, sn, params, allow_continuation=True)
        terms.append(term)
        total += term
        f = coupling * origin_green(sn, params, allow_continuation=True)
        factors.append(f)
        r = abs(f)
        if n >= min_depth and r < 1:
            # remaining terms bounded by |prod| r^k |G(0|x0)| with |G(0|x0)| non-increasing along the shift
            tail = abs(term) * r / (1 - r)
            if tail <= tail_tol * max(abs(total), 1e-300):
                state = SeriesState(np.array(terms), np.array(factors), n, tail)
                return total, state
        prod *= f
        if not math.isfinite(abs(prod)):
            break
    raise NumericalError(
        f"exponential-sink series did not converge within depth {depth_max}; "
        f"factor magnitudes {np.round(np.abs(factors[:10]), 6).tolist()}..."
    )


def _expdecay_vec(s, params, spec, x0, depth_max, tail_tol):
    """Vectorised ``expdecay_series`` value over a flat array of s; returns (values, depths)."""
    a = spec.alpha_decay
    coupling = 2.0 * params.sigma * spec.beta
    prod = np.ones(s.shape, complex)
    total = np.zeros(s.shape, complex)
    depth = np.full(s.shape, -1)
    active = np.ones(s.shape, bool)
    for n in range(depth_max + 1):
        sn = s[active] + n * a
        term = prod[active] * green_at_origin(x0, sn, params, allow_continuation=True)
        total[active] += term
        f = coupling * origin_green(sn, params, allow_continuation=True)
        r = np.abs(f)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(r < 1, np.abs(term) * r / (1 - r), np.inf)
        done = tail <= tail_tol * np.maximum(np.abs(total[active]), 1e-300)
        idx = np.flatnonzero(active)
        depth[idx[done]] = n
        prod[idx] *= f
        active[idx[done]] = False
        if not active.any():
            return total, depth
        if not np.all(np.isfinite(prod[active])):
            break
    bad = s[active][:1]
    raise NumericalError(
        f"exponential-sink series did not converge within depth {depth_max} at s={complex(bad[0])}; "
        f"factor magnitudes {np.round(np.abs(_factor_list(complex(bad[0]), params, spec, 10)), 6).tolist()}..."
    )


def _factor_list(s, params, spec, n):
    sn = s + spec.alpha_decay * np.arange(n)
    return 2.0 * params.sigma * spec.beta * origin_green(sn, params, allow_continuation=True)


def p0_expdecay(
    s, params: ModelParams, spec: ExpDecay, x0, depth_max=400, tail_tol=1e-15, allow_continuation=True
) -> OriginResponse:
    """Exponential sink via the shift recursion P(0,s) = G(0|x0) + 2 sigma beta G(0|0) P(0, s + alpha_decay)."""
    s = _as_s(s, allow_continuation)
    flat = s.ravel()
    p0, depth = _expdecay_vec(flat, params, spec, x0, depth_max, tail_tol)
    # independent evaluation at the shifted point keeps the closure check honest
    shifted, _ = _expdecay_vec(flat + spec.alpha_decay, params, spec, x0, depth_max, tail_tol)
    return _respond(
        s,
        params,
        spec,
        x0,
        p0.reshape(s.shape),
        (spec.beta * shifted).reshape(s.shape),
        depth=depth.reshape(s.shape),
    )


def origin_response(s, params: ModelParams, spec, x0, *, s_max=None, ode_tol=1e-10, depth_max=400,
                    tail_tol=1e-15, allow_continuation=True, method="quadrature") -> OriginResponse:
    """Dispatch to the closure for ``spec``."""
    if isinstance(spec, NoSink):
        return p0_nosink(s, params, x0, allow_continuation)
    if isinstance(spec, Constant):
        return p0_constant(s, params, spec, x0, allow_continuation)
    if isinstance(spec, Linear):
        return p0_linear(s, params, spec, x0, s_max, ode_tol, allow_continuation, method)
    if isinstance(spec, InverseTime):
        return p0_inverse(s, params, spec, x0, s_max, ode_tol, allow_continuation, method)
    if isinstance(spec, ExpDecay):
        return p0_expdecay(s, params, spec, x0, depth_max, tail_tol, allow_continuation)
    raise ValidationError(f"unsupported sink spec {spec!r}")


def closure_residual(resp: OriginResponse, params: ModelParams, x0):
    """Relative residual |P0 - G(0|x0) - 2 sigma G(0|0) L[kP]| / |P0|."""
    g1 = green_at_origin(x0, resp.s, params, allow_continuation=True)
    g0 = origin_green(resp.s, params, allow_continuation=True)
    res = resp.p0 - g1 - 2 * params.sigma * g0 * resp.sink_lap
    return np.abs(res) / np.maximum(np.abs(resp.p0), 1e-300)


def assemble_field(x, resp: OriginResponse, params: ModelParams, spec, x0):
    """P(x,s) = G(x|x0) + a(s) exp(-(p+q)|x|), a(s) = P(0,s) - G(0|x0).

    ``x`` broadcasts against ``resp.s``.  The response must come from the
    same (params, spec, x0).
    """
    if resp.key != _key(params, spec, x0):
        raise ValidationError("OriginResponse was computed for different parameters, sink or x0")
    q, p = spectral(params, resp.s)
    x = np.asarray(x, dtype=float)
    field_ = exact_v_green(x, x0, resp.s, params, allow_continuation=True) + resp.a_s * np.exp(-(p + q) * np.abs(x))
    # x = 0 returns p0 exactly
    field_ = np.where(x == 0, resp.p0 + 0 * field_, field_)
    return complex(field_) if np.ndim(field_) == 0 else field_
