"""Laplace-domain propagators of the sink-free problem.

The V potential U(x) = omega |x| gives a constant drift of speed omega*D
towards the origin.  On each half-line the transformed equation has the
characteristic exponents -(p+q) and (p-q) (mirrored for x < 0), and the
cusp at the origin imposes

    [dG/dx]_{0-}^{0+} + 2 omega G(0) = 0

(continuity of the probability flux).  ``exact_v_green`` is the resulting
piecewise solution in closed form; ``v_green_coefficients`` solves the same
matching conditions as a dense 4x4 system and is kept as an independent
check.  ``printed_green`` evaluates the single-exponential ansatz from the
original derivation, for comparison only.
"""

from __future__ import annotations

import numpy as np

from sinklab.model import ModelParams, NumericalError, ValidationError, spectral


def _prepare_s(s, allow_continuation):
    s = np.asarray(s, dtype=complex)
    if not np.all(np.isfinite(s)):
        raise ValidationError("Laplace variable s must be finite")
    if not allow_continuation and np.any(s.real <= 0):
        raise ValidationError("propagators require Re s > 0")
    return s


def _p_minus_q(p, q, s, D):
    # p - q without cancellation at small s
    return (s / D) / (p + q)


def _squeeze(value):
    return complex(value) if np.ndim(value) == 0 else value


def free_drift_green(x, x0, s, params: ModelParams, allow_continuation=False):
    """Green's function of dP/dt = D P'' + omega D P' on the whole line.

    G(x|x0; s) = exp(-q (x - x0) - p |x - x0|) / (2 D p)
    """
    s = _prepare_s(s, allow_continuation)
    q, p = spectral(params, s)
    y = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    value = np.exp(-q * y - p * np.abs(y)) / (2 * params.D * p)
    return _squeeze(value)


def origin_green(s, params: ModelParams, allow_continuation=False):
    """G(0|0; s) = 1 / (2 D (p - q)) = (p + q) / (2 s)."""
    s = _prepare_s(s, allow_continuation)
    q, p = spectral(params, s)
    return _squeeze((p + q) / (2 * s))


def green_at_origin(x0, s, params: ModelParams, allow_continuation=False):
    """G(0|x0; s) = exp(-(p - q)|x0|) / (2 D (p - q))."""
    s = _prepare_s(s, allow_continuation)
    q, p = spectral(params, s)
    pm = _p_minus_q(p, q, s, params.D)
    return _squeeze(np.exp(-pm * abs(float(x0))) * (p + q) / (2 * s))


def exact_v_green(x, x0, s, params: ModelParams, allow_continuation=False):
    """Sink-free propagator of the V potential, G(x|x0; s).

    Vectorised over ``x`` and ``s`` (broadcast against each other).  For a
    source at ``x0 >= 0``::

        x >= 0:  free(x|x0) + B exp(-(p+q) x),   B = q e^{-(p-q)x0} / (2Dp(p-q))
        x <  0:  e^{-(p-q)x0} / (2D(p-q)) * exp((p+q) x)

    and negative ``x0`` is handled by reflection.
    """
    s = _prepare_s(s, allow_continuation)
    x = np.asarray(x, dtype=float)
    x0 = float(x0)
    if x0 < 0:
        x, x0 = -x, -x0
    q, p = spectral(params, s)
    D = params.D
    pm = _p_minus_q(p, q, s, D)
    pp = p + q
    decay0 = np.exp(-pm * x0)
    ax = np.abs(x)
    # evaluate both branches with |x| so that no exponent grows
    y = x - x0
    free = np.exp(-q * y - p * np.abs(y)) / (2 * D * p)
    right = free + q * decay0 * pp / (2 * p * s) * np.exp(-pp * ax)
    left = decay0 * pp / (2 * s) * np.exp(-pp * ax)
    value = np.where(x >= 0, right, left)
    return _squeeze(value)


def v_green_coefficients(x0, s, params: ModelParams):
    """Solve the four matching conditions for a source at ``x0 > 0``.

    Unknowns (A, B, C, E) of

        x < 0:      A e^{(p+q)x}
        0 < x < x0: B e^{-(p+q)x} + C e^{(p-q)x}
        x > x0:     E e^{-(p+q)x}

    Rows: continuity at 0, flux condition at 0, continuity at x0, unit jump
    of -D dG/dx at x0.
    """
    if x0 <= 0:
        raise ValidationError("v_green_coefficients expects x0 > 0")
    q, p = spectral(params, complex(s))
    D, w = params.D, params.omega
    a, b = p + q, p - q
    ea, eb = np.exp(-a * x0), np.exp(b * x0)
    M = np.array(
        [
            [1.0, -1.0, -1.0, 0.0],
            [-a + 2 * w, -a, b, 0.0],
            [0.0, ea, eb, -ea],
            [0.0, a * ea, -b * eb, -a * ea],
        ],
        dtype=complex,
    )
    rhs = np.array([0.0, 0.0, 0.0, -1.0 / D], dtype=complex)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"matching system ill-conditioned (cond={cond:.3g}) at s={s}")
    return np.linalg.solve(M, rhs)


def printed_green(x, x0, s, params: ModelParams, allow_continuation=False):
    """Single-exponential ansatz with the printed homogeneous amplitude.

    a(s) e^{-(p+q)|x|} + e^{-(p+q)|x-x0|} / (2D(p+q)),
    a(s) = -omega e^{-(p+q)|x0|} / (2D (p+q-omega)(p+q)),

    with every exponent taken decaying.  Not a solution of the V-potential
    equation for omega > 0; kept to quantify that gap.
    """
    s = _prepare_s(s, allow_continuation)
    q, p = spectral(params, s)
    D, w = params.D, params.omega
    x = np.asarray(x, dtype=float)
    pp = p + q
    denom = pp - w
    if np.any(np.abs(denom) < 1e-14 * np.maximum(1.0, np.abs(pp))):
        raise NumericalError("printed_green: pole p + q - omega = 0")
    amp = -w * np.exp(-pp * abs(float(x0))) / (2 * D * denom * pp)
    value = amp * np.exp(-pp * np.abs(x)) + np.exp(-pp * np.abs(x - x0)) / (2 * D * pp)
    return _squeeze(value)
