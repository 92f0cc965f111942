"""Printed closed forms evaluated next to the re-derived route.

Each diagnostic evaluates a formula as originally printed (with decaying
exponents, the only reading that gives a finite transform) and the
corresponding quantity of the re-derived closure at a few Laplace points.
The differences document the gap; they are not pass/fail gates.
"""

from __future__ import annotations

import math

import jsonschema
import numpy as np

from sinklab.closure import expdecay_series, p0_constant, p0_inverse, printed_p0_constant
from sinklab.green import exact_v_green, printed_green
from sinklab.model import (
    Constant,
    ExpDecay,
    InverseTime,
    Linear,
    ModelParams,
    NumericalError,
    ValidationError,
    spectral,
)

SCHEMA_ID = "sinklab.fidelity/1"

_NUM = {"type": ["number", "null"]}
_CPLX = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema", "params", "x0", "diagnostics"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "params": {
            "type": "object",
            "required": ["D", "omega", "sigma"],
            "properties": {"D": {"type": "number"}, "omega": {"type": "number"}, "sigma": {"enum": [-1, 1]}},
        },
        "x0": {"type": "number"},
        "diagnostics": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "description", "status", "points", "abs_diff_max", "rel_diff_max"],
                "properties": {
                    "name": {"type": "string", "pattern": "^[a-z_]+$"},
                    "description": {"type": "string", "minLength": 1},
                    "status": {"enum": ["ok", "pole", "error"]},
                    "message": {"type": "string"},
                    "points": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["s", "printed", "rederived"],
                            "properties": {"s": _CPLX, "x": _NUM, "n": {"type": "integer"}, "printed": _CPLX,
                                           "rederived": _CPLX},
                        },
                    },
                    "abs_diff_max": _NUM,
                    "rel_diff_max": _NUM,
                },
            },
        },
    },
}

DEFAULT_S = (0.5, 1.0, 2.0, 5.0)


def _c(z):
    z = complex(z)
    return [z.real if math.isfinite(z.real) else None, z.imag if math.isfinite(z.imag) else None]


def _block(name, description, rows):
    """rows: list of dicts with complex 'printed'/'rederived' and extra keys."""
    diffs = [abs(r["printed"] - r["rederived"]) for r in rows]
    rels = [d / abs(r["rederived"]) if abs(r["rederived"]) > 0 else math.inf for d, r in zip(diffs, rows)]
    points = []
    for r in rows:
        pt = {k: v for k, v in r.items() if k not in ("printed", "rederived", "s")}
        pt.update(s=_c(r["s"]), printed=_c(r["printed"]), rederived=_c(r["rederived"]))
        points.append(pt)
    finite = [d for d in diffs if math.isfinite(d)]
    finite_rel = [d for d in rels if math.isfinite(d)]
    return {
        "name": name,
        "description": description,
        "status": "ok",
        "points": points,
        "abs_diff_max": max(finite) if finite else None,
        "rel_diff_max": max(finite_rel) if finite_rel else None,
    }


def _failed(name, description, status, message):
    return {
        "name": name,
        "description": description,
        "status": status,
        "message": message,
        "points": [],
        "abs_diff_max": None,
        "rel_diff_max": None,
    }


def homogeneous_amplitude(params: ModelParams, x0, s_values=DEFAULT_S, x_values=(-0.5, 0.0, 0.3, 1.0, 2.0)):
    desc = (
        "single-exponential field with the printed homogeneous amplitude "
        "-omega e^{-(p+q)|x0|}/(2D(p+q-omega)(p+q)) against the matched V-potential propagator"
    )
    rows = []
    try:
        for s in s_values:
            for x in x_values:
                rows.append(
                    {
                        "s": s,
                        "x": float(x),
                        "printed": printed_green(x, x0, s, params),
                        "rederived": exact_v_green(x, x0, s, params),
                    }
                )
    except NumericalError as exc:
        return _failed("homogeneous_amplitude", desc, "pole", str(exc))
    return _block("homogeneous_amplitude", desc, rows)


def constant_origin_value(params: ModelParams, x0, alpha0=0.5, s_values=DEFAULT_S):
    desc = (
        "printed constant-sink origin value e^{-(p+q)|x0|}(p+q-2omega)/(2(p+q)(p+q-omega-alpha0)) "
        "against G(0|x0)/(1 - 2 sigma alpha0 G(0|0))"
    )
    spec = Constant(alpha0)
    rows = []
    try:
        for s in s_values:
            rows.append(
                {
                    "s": s,
                    "printed": complex(printed_p0_constant(s, params, spec, x0)),
                    "rederived": complex(p0_constant(s, params, spec, x0).p0),
                }
            )
    except NumericalError as exc:
        return _failed("constant_origin_value", desc, "pole", str(exc))
    return _block("constant_origin_value", desc, rows)


def printed_linear_phase(s, params: ModelParams, alpha):
    """-2 / (2 alpha (q^2 + s/D)^{3/2}) - D q s / alpha."""
    q = params.q
    return -2.0 / (2 * alpha * (q * q + s / params.D) ** 1.5) - params.D * q * s / alpha


def linear_phase(s, params: ModelParams, alpha):
    """Antiderivative of (D/alpha)(p - q): (2D^2/(3 alpha)) p^3 - (D q/alpha) s."""
    q, p = spectral(params, s)
    return (2 * params.D**2 / (3 * alpha)) * p**3 - params.D * q * s / alpha


def linear_phase_derivative_check(params: ModelParams, alpha=0.5, s_values=DEFAULT_S, h=1e-5):
    desc = (
        "derivative of the printed linear-sink phase f(s) against the stated f'(s) = (D/alpha)(p-q); "
        "'rederived' is (D/alpha)(p-q), 'printed' is the central difference of the printed f"
    )
    rows = []
    for s in s_values:
        _, p = spectral(params, s)
        target = params.D / alpha * (p - params.q)
        fd = (printed_linear_phase(s + h, params, alpha) - printed_linear_phase(s - h, params, alpha)) / (2 * h)
        rows.append({"s": s, "printed": complex(fd), "rederived": complex(target)})
    return _block("linear_phase", desc, rows)


def inverse_origin_relation(params: ModelParams, x0, alpha=0.3, s_values=DEFAULT_S):
    desc = (
        "printed inverse-time origin relation with the [D+2] bracket, "
        "(alpha/(Dp)) u - (omega/(2Dp))[D+2] P(0) + e^{-(p+q)|x0|}/(2Dp), evaluated on the "
        "re-derived P(0,s) and u(s); 'rederived' is P(0,s) itself"
    )
    try:
        spec = InverseTime(alpha)
        resp = p0_inverse(np.asarray(s_values, dtype=complex), params, spec, x0, method="ode")
    except (NumericalError, ValidationError) as exc:
        return _failed("inverse_origin_relation", desc, "error", str(exc))
    q, p = spectral(params, resp.s)
    D, w = params.D, params.omega
    u = resp.info["u"]
    printed = (alpha / (D * p)) * u - (w / (2 * D * p)) * (D + 2) * resp.p0 + np.exp(-(p + q) * abs(x0)) / (2 * D * p)
    rows = [{"s": s, "printed": complex(a), "rederived": complex(b)} for s, a, b in zip(s_values, printed, resp.p0)]
    return _block("inverse_origin_relation", desc, rows)


def printed_tau(n, s, params: ModelParams, beta, alpha_decay, x0):
    """Printed series terms with the undefined gamma read as beta (gamma^n tau_n)."""
    q = params.q
    D, w = params.D, params.omega
    decay = np.exp(-(np.sqrt(q * q + s / D) + q) * abs(x0))
    if n == 0:
        return decay / (2 * D * np.sqrt(q * q + s / D) - 2 * w)
    out = 1.0 + 0j
    for j in range(n):
        out *= (2.0**n) * decay / (2 * D * np.sqrt(q * q + (s + j * alpha_decay) / D) - 2 * w)
    return beta**n * out


def expdecay_terms(params: ModelParams, x0, beta=0.5, alpha_decay=1.0, s=1.0, n_terms=6):
    desc = (
        "printed exponential-sink series terms gamma^n tau_n(s) (gamma read as beta) against the "
        "terms of the re-derived shift recursion"
    )
    spec = ExpDecay(beta, alpha_decay)
    try:
        _, state = expdecay_series(s, params, spec, x0, min_depth=n_terms)
        rows = [
            {"s": s, "n": n, "printed": complex(printed_tau(n, s, params, beta, alpha_decay, x0)),
             "rederived": complex(state.terms[n])}
            for n in range(n_terms)
        ]
    except (NumericalError, ZeroDivisionError) as exc:
        return _failed("expdecay_terms", desc, "pole", str(exc))
    return _block("expdecay_terms", desc, rows)


def fidelity_report(params: ModelParams, x0, spec=None) -> dict:
    """Run every diagnostic; law parameters are taken from ``spec`` when it matches."""
    alpha0 = spec.alpha0 if isinstance(spec, Constant) and spec.alpha0 > 0 else 0.5
    alpha_lin = abs(spec.alpha1) if isinstance(spec, Linear) and spec.alpha1 != 0 else 0.5
    alpha_inv = spec.alpha if isinstance(spec, InverseTime) and spec.alpha > 0 else 0.3
    beta, decay = (spec.beta, spec.alpha_decay) if isinstance(spec, ExpDecay) and spec.beta > 0 else (0.5, 1.0)
    x0_inv = x0 if x0 != 0 else 0.5
    diags = [
        homogeneous_amplitude(params, x0),
        constant_origin_value(params, x0, alpha0),
        linear_phase_derivative_check(params, alpha_lin),
        inverse_origin_relation(params, x0_inv, alpha_inv),
        expdecay_terms(params, x0, beta, decay),
    ]
    return {
        "schema": SCHEMA_ID,
        "params": {"D": params.D, "omega": params.omega, "sigma": params.sigma},
        "x0": float(x0),
        "diagnostics": diags,
    }


def validate_report(report: dict):
    """Raise jsonschema.ValidationError if ``report`` does not follow REPORT_SCHEMA."""
    jsonschema.validate(report, REPORT_SCHEMA)
