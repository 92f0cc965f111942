"""Domain types shared by every solver: parameters, sink laws, spectral map."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Union

import numpy as np


class ValidationError(ValueError):
    """Invalid model, sink or grid parameters."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (pole, non-convergence, non-finite value)."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the V-potential problem.

    ``sigma = -1`` makes the point sink absorbing; ``sigma = +1`` keeps the
    literal ``+2 k(t) delta(x) P`` coupling (probability is injected).
    """

    D: float = 1.0
    omega: float = 1.0
    sigma: int = -1

    def __post_init__(self):
        if not (math.isfinite(self.D) and self.D > 0):
            raise ValidationError(f"D must be finite and > 0, got {self.D!r}")
        if not (math.isfinite(self.omega) and self.omega >= 0):
            raise ValidationError(f"omega must be finite and >= 0, got {self.omega!r}")
        if self.sigma not in (1, -1):
            raise ValidationError(f"sigma must be +1 or -1, got {self.sigma!r}")

    @property
    def q(self) -> float:
        return self.omega / 2

    @property
    def relaxation_time(self) -> float:
        """1/(D q^2), or inf for free diffusion."""
        return math.inf if self.omega == 0 else 1.0 / (self.D * self.q**2)


@dataclass(frozen=True)
class InitialCondition:
    x0: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.x0):
            raise ValidationError(f"x0 must be finite, got {self.x0!r}")


def _check_nonneg(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class NoSink:
    law = "none"

    def rate(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Constant:
    alpha0: float

    law = "constant"

    def __post_init__(self):
        _check_nonneg("alpha0", self.alpha0)

    def rate(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.alpha0)


@dataclass(frozen=True)
class Linear:
    """k(t) = alpha1 * t; alpha1 may carry either sign."""

    alpha1: float

    law = "linear"

    def __post_init__(self):
        if not math.isfinite(self.alpha1):
            raise ValidationError(f"alpha1 must be finite, got {self.alpha1!r}")

    def rate(self, t):
        return self.alpha1 * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class InverseTime:
    """k(t) = alpha / t for t >= t_on, zero before the activation time."""

    alpha: float
    t_on: float = 1e-2

    law = "inverse"

    def __post_init__(self):
        _check_nonneg("alpha", self.alpha)
        if not (math.isfinite(self.t_on) and self.t_on > 0):
            raise ValidationError(f"t_on must be finite and > 0, got {self.t_on!r}")

    @classmethod
    def for_params(cls, alpha: float, params: ModelParams) -> "InverseTime":
        """Default activation time 1e-2 in units of 1/(D omega^2)."""
        if params.omega == 0:
            return cls(alpha, 1e-2)
        return cls(alpha, 1e-2 / (params.D * params.omega**2))

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        safe = np.where(t >= self.t_on, t, 1.0)
        return np.where(t >= self.t_on, self.alpha / safe, 0.0)


@dataclass(frozen=True)
class ExpDecay:
    """k(t) = beta * exp(-alpha_decay * t), alpha_decay > 0."""

    beta: float
    alpha_decay: float

    law = "expdecay"

    def __post_init__(self):
        _check_nonneg("beta", self.beta)
        if not math.isfinite(self.alpha_decay):
            raise ValidationError(f"alpha_decay must be finite, got {self.alpha_decay!r}")
        if self.alpha_decay == 0:
            raise ValidationError("alpha_decay = 0 is a constant sink; use Constant(alpha0=beta)")
        if self.alpha_decay < 0:
            raise ValidationError(f"alpha_decay must be > 0, got {self.alpha_decay!r}")

    def rate(self, t):
        return self.beta * np.exp(-self.alpha_decay * np.asarray(t, dtype=float))


SinkSpec = Union[NoSink, Constant, Linear, InverseTime, ExpDecay]

SINK_LAWS = {cls.law: cls for cls in (NoSink, Constant, Linear, InverseTime, ExpDecay)}


def sink_to_dict(spec: SinkSpec) -> dict:
    return {"law": spec.law, **asdict(spec)}


def sink_from_dict(d: dict) -> SinkSpec:
    d = dict(d)
    law = d.pop("law")
    try:
        cls = SINK_LAWS[law]
    except KeyError:
        raise ValidationError(f"unknown sink law {law!r}; expected one of {sorted(SINK_LAWS)}")
    try:
        return cls(**{k: float(v) for k, v in d.items()})
    except TypeError as exc:
        raise ValidationError(f"bad parameters for sink law {law!r}: {exc}") from None


def is_trivial(spec: SinkSpec) -> bool:
    """True when the law has zero strength everywhere."""
    if isinstance(spec, NoSink):
        return True
    strength = {
        Constant: lambda s: s.alpha0,
        Linear: lambda s: s.alpha1,
        InverseTime: lambda s: s.alpha,
        ExpDecay: lambda s: s.beta,
    }[type(spec)](spec)
    return strength == 0


def sink_strength(spec: SinkSpec, t):
    """k(t) for the selected law; scalar in, float out."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValidationError("sink_strength requires t >= 0")
    k = spec.rate(t_arr)
    return float(k) if np.ndim(k) == 0 else k


def spectral(params: ModelParams, s):
    """Return ``(q, p)`` with ``p = sqrt(q^2 + s/D)`` on the principal branch.

    Works elementwise on arrays of complex ``s``.
    """
    s = np.asarray(s, dtype=complex)
    if not np.all(np.isfinite(s)):
        raise ValidationError("Laplace variable s must be finite")
    q = params.q
    p = np.sqrt(q * q + s / params.D)
    if p.ndim == 0:
        p = complex(p)
    return q, p
