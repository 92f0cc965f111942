import math

import numpy as np
import pytest
from conftest import REF_LAWS, REF_PARAMS, REF_X0, VOLTERRA_ORIGIN

from sinklab.analytic import origin_series
from sinklab.green import origin_green
from sinklab.ilt import talbot
from sinklab.model import Constant, ModelParams, NoSink, ValidationError
from sinklab.volterra import origin_forcing, origin_kernel, volterra_p0

FREE = ModelParams(1.0, 0.0, -1)


def test_nosink_heat_kernel():
    t = np.linspace(0.0, 1.0, 11)
    P = volterra_p0(FREE, NoSink(), 1.0, t)
    assert P[-1] == pytest.approx(math.exp(-0.25) / math.sqrt(4 * math.pi), abs=1e-10)
    assert P[-1] == pytest.approx(0.219696, abs=1e-6)


def test_source_on_origin_free_diffusion():
    t = np.array([0.0, 0.5 / (4 * math.pi), 1 / (4 * math.pi)])
    P = volterra_p0(FREE, NoSink(), 0.0, t)
    assert P[-1] == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("omega", [0.0, 1.0, 3.0])
def test_kernel_closed_form_matches_inversion(omega):
    p = ModelParams(1.0, omega, -1)
    for tau in (0.05, 0.7, 4.0):
        ref = talbot(lambda s: origin_green(s, p, allow_continuation=True), tau)
        assert origin_kernel(tau, p) == pytest.approx(ref, abs=1e-10)


def test_forcing_zero_at_start():
    g = origin_forcing(REF_PARAMS, REF_X0, [0.0, 0.1])
    assert g[0] == 0.0 and g[1] > 0


@pytest.mark.parametrize("law", sorted(REF_LAWS))
def test_reproduces_frozen_origin_values(law):
    # same grid as the frozen reference; forward substitution is causal
    t = np.linspace(0.0, 2.0, 1001)
    P = volterra_p0(REF_PARAMS, REF_LAWS[law], REF_X0, t)
    got = P[[250, 500, 1000]]
    assert np.max(np.abs(got - VOLTERRA_ORIGIN[law][0])) < 1e-12


def test_constant_matches_laplace_route():
    t = np.linspace(0.0, 5.0, 2501)
    spec = REF_LAWS["constant"]
    P = volterra_p0(REF_PARAMS, spec, REF_X0, t)
    window = t >= 0.1
    ilt = origin_series(REF_PARAMS, spec, REF_X0, t[window]).values
    assert np.max(np.abs(ilt - P[window])) < 1e-3


def test_second_order_in_step():
    spec = Constant(0.5)
    vals = []
    for n in (201, 401, 801):
        t = np.linspace(0.0, 2.0, n)
        vals.append(volterra_p0(REF_PARAMS, spec, REF_X0, t)[-1])
    e1, e2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    assert math.log2(e1 / e2) > 1.7


def test_rate_override_equals_law():
    t = np.linspace(0.0, 1.0, 201)
    a = volterra_p0(REF_PARAMS, Constant(0.5), REF_X0, t)
    b = volterra_p0(REF_PARAMS, NoSink(), REF_X0, t, rate=lambda tt: 0.5 * np.ones_like(tt))
    assert np.array_equal(a, b)


def test_rejects_bad_grid():
    with pytest.raises(ValidationError):
        volterra_p0(REF_PARAMS, NoSink(), REF_X0, [0.1, 0.2])
    with pytest.raises(ValidationError):
        volterra_p0(REF_PARAMS, NoSink(), REF_X0, [0.0, 0.2, 0.1])


def test_source_on_sink_needs_zero_initial_rate():
    with pytest.raises(ValidationError):
        volterra_p0(REF_PARAMS, Constant(0.5), 0.0, np.linspace(0, 1, 11))
