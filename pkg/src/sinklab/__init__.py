"""Diffusion in a V-shaped potential with a time-dependent point sink.

Laplace-domain solutions for four sink laws, numerical inversion, and two
independent time-domain oracles (Crank-Nicolson and a Volterra solver).
"""

from sinklab.model import (
    Constant,
    ExpDecay,
    InverseTime,
    Linear,
    ModelParams,
    NoSink,
    sink_strength,
    spectral,
)

__version__ = "0.1.0"

__all__ = [
    "Constant",
    "ExpDecay",
    "InverseTime",
    "Linear",
    "ModelParams",
    "NoSink",
    "sink_strength",
    "spectral",
]
