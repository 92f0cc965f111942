"""Numerical inverse Laplace transforms: fixed Talbot and Gaver-Stehfest.

Both routines take ``F`` as a callable accepting a numpy array of Laplace
points and returning an array of the same shape.  Talbot samples a complex
contour that wraps the negative real axis; Stehfest only needs real points,
which makes it a useful independent check on real-axis code paths.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from sinklab.model import NumericalError, ValidationError


@dataclass(frozen=True)
class IltConfig:
    method: str = "talbot"
    talbot_nodes: int = 32
    stehfest_terms: int = 14
    agreement_tol: float = 1e-6

    def __post_init__(self):
        if self.method not in ("talbot", "stehfest", "both"):
            raise ValidationError(f"unknown ILT method {self.method!r}")
        if self.talbot_nodes < 8:
            raise ValidationError("talbot_nodes must be >= 8")
        n = self.stehfest_terms
        if n % 2 or not 4 <= n <= 20:
            raise ValidationError("stehfest_terms must be even and within [4, 20]")
        if not self.agreement_tol > 0:
            raise ValidationError("agreement_tol must be > 0")


def _check_t(t):
    t = float(t)
    if not (math.isfinite(t) and t > 0):
        raise ValidationError(f"inverse Laplace transform needs t > 0, got {t!r}")
    return t


# Contour scale r*t = 2M/5 is capped: beyond 16 nodes the factor exp(r t)
# amplifies double-precision rounding faster than extra nodes reduce the
# quadrature error.
_SCALE_CAP_NODES = 16


def talbot_scale(t, M):
    return 2.0 * min(M, _SCALE_CAP_NODES) / (5.0 * t)


@lru_cache(maxsize=None)
def talbot_contour(M: int):
    """Nodes and weights of the fixed Talbot rule on the unit scale r = 1.

    Returns ``(z, w)`` such that, with r = ``talbot_scale(t, M)``,

        f(t) ~ (r/M) * Re sum_k w_k exp(r t z_k) F(r z_k)
    """
    theta = np.arange(1, M) * np.pi / M
    cot = 1.0 / np.tan(theta)
    z = np.concatenate([[1.0 + 0j], theta * (cot + 1j)])
    sig = theta + (theta * cot - 1.0) * cot
    w = np.concatenate([[0.5 + 0j], 1.0 + 1j * sig])
    return z, w


def talbot_nodes(t, M=32):
    """Laplace points at which ``talbot`` evaluates F for time ``t``."""
    t = _check_t(t)
    z, _ = talbot_contour(M)
    return talbot_scale(t, M) * z


def talbot_combine(values, t, M=32) -> float:
    """Finish a Talbot inversion from F sampled at ``talbot_nodes(t, M)``."""
    z, w = talbot_contour(M)
    r = talbot_scale(t, M)
    values = np.asarray(values, dtype=complex)
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite transform value on the Talbot contour at t={t}")
    terms = w * np.exp(r * t * z) * values
    return float((r / M) * np.sum(terms).real)


def talbot(F, t, M=32) -> float:
    """Fixed Talbot inversion of ``F`` at a single time ``t > 0``."""
    t = _check_t(t)
    s = talbot_nodes(t, M)
    return talbot_combine(F(s), t, M)


@lru_cache(maxsize=None)
def stehfest_coefficients(N: int) -> tuple:
    """Gaver-Stehfest weights V_1..V_N computed in exact rational arithmetic."""
    if N % 2 or N < 2:
        raise ValidationError("Stehfest needs an even number of terms")
    half = N // 2
    fact = math.factorial
    out = []
    for k in range(1, N + 1):
        acc = Fraction(0)
        for j in range((k + 1) // 2, min(k, half) + 1):
            acc += Fraction(
                j**half * fact(2 * j),
                fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k),
            )
        out.append((-1) ** (k + half) * acc)
    return tuple(float(v) for v in out)


def stehfest(F, t, N=14) -> float:
    """Gaver-Stehfest inversion using real Laplace points k ln2 / t."""
    t = _check_t(t)
    V = np.array(stehfest_coefficients(N))
    a = math.log(2.0) / t
    s = a * np.arange(1, N + 1)
    vals = np.asarray(F(s.astype(complex)))
    if np.iscomplexobj(vals):
        vals = vals.real
    if not np.all(np.isfinite(vals)):
        raise NumericalError(f"non-finite transform value on the real axis at t={t}")
    terms = V * vals
    total = float(np.sum(terms))
    scale = float(np.sum(np.abs(terms)))
    if scale > 0 and abs(total) > 0:
        if np.finfo(float).eps * scale / abs(total) > 1e-4:
            warnings.warn(
                f"Stehfest cancellation at t={t}: relative rounding estimate "
                f"{np.finfo(float).eps * scale / abs(total):.2e}",
                RuntimeWarning,
                stacklevel=2,
            )
    return a * total


def invert_checked(F, t, config: IltConfig = IltConfig()):
    """Run Talbot and Stehfest; return ``(value, discrepancy, flag)``.

    ``value`` is the Talbot result (Stehfest when ``method='stehfest'``) and
    ``flag`` is set when the two disagree by more than ``agreement_tol``.
    """
    ft = talbot(F, t, config.talbot_nodes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fs = stehfest(F, t, config.stehfest_terms)
    disc = abs(ft - fs)
    value = fs if config.method == "stehfest" else ft
    return value, disc, disc > config.agreement_tol


def invert(F, times, config: IltConfig = IltConfig()):
    """Invert at each of ``times``; returns (values, discrepancies, flags).

    Discrepancies are NaN (flags False) when ``method='talbot'`` only.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    values = np.empty(times.shape)
    disc = np.full(times.shape, np.nan)
    flags = np.zeros(times.shape, dtype=bool)
    for i, t in enumerate(times):
        if config.method == "talbot":
            values[i] = talbot(F, t, config.talbot_nodes)
        elif config.method == "stehfest":
            values[i] = stehfest(F, t, config.stehfest_terms)
        else:
            values[i], disc[i], flags[i] = invert_checked(F, t, config)
    return values, disc, flags
