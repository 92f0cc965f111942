import math

import numpy as np
import pytest
from conftest import REF_LAWS, REF_PARAMS, REF_X0

from sinklab.green import exact_v_green
from sinklab.model import Constant, ModelParams, NoSink, ValidationError
from sinklab.observables import equilibrium_profile, flux_identity_residual
from sinklab.oracle import (
    GridSpec,
    bernoulli,
    cn_solve,
    hat_weights,
    mc_solve,
    numeric_laplace,
)

FREE = ModelParams(1.0, 0.0, -1)


# --- grid ---------------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValidationError):
        GridSpec(nx=100)
    with pytest.raises(ValidationError):
        GridSpec(dt=0.0)
    with pytest.raises(ValidationError):
        GridSpec(delta_width=0.5)
    g = GridSpec(L=1.0, nx=11)
    assert g.dx == pytest.approx(0.2)
    assert g.x[5] == 0.0


def test_domain_check():
    with pytest.raises(ValidationError, match="domain"):
        cn_solve(REF_PARAMS, NoSink(), 0.5, GridSpec(L=5.0, nx=501, t_max=1.0))
    with pytest.raises(ValidationError, match="domain"):
        cn_solve(FREE, NoSink(), 0.5, GridSpec(L=5.0, nx=501, t_max=1.0))


def test_source_outside_domain():
    g = GridSpec.auto(REF_PARAMS, 1.0, dx=0.02, dt=1e-2)
    with pytest.raises(ValidationError):
        cn_solve(REF_PARAMS, NoSink(), g.L, g)


def test_bernoulli_and_hat():
    assert bernoulli(0.0) == 1.0
    assert bernoulli(1e-3) == pytest.approx(1e-3 / math.expm1(1e-3), rel=1e-12)
    x = np.linspace(-1, 1, 201)
    w = hat_weights(x, 0.05)
    assert np.sum(w) * 0.01 == pytest.approx(1.0, abs=1e-14)


# --- cn_solve -----------------------------------------------------------------


def test_nosink_conservation():
    g = GridSpec.auto(REF_PARAMS, 5.0, dx=0.02, dt=5e-3)
    r = cn_solve(REF_PARAMS, NoSink(), REF_X0, g)
    assert np.max(np.abs(r.survival - 1.0)) < 1e-4


def test_equilibrium_reached():
    p = ModelParams(1.0, 2.0, -1)
    g = GridSpec.auto(p, 20.0, dx=0.02, dt=1e-2)
    r = cn_solve(p, NoSink(), 0.5, g)
    err = np.max(np.abs(r.field[-1] - equilibrium_profile(p, r.x)))
    assert err < 1e-3


def test_heat_kernel_at_origin():
    g = GridSpec.auto(FREE, 1.0, dx=0.01, dt=1e-3)
    r = cn_solve(FREE, NoSink(), 0.0, g)
    assert r.origin[-1] == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-3)


def test_laplace_bridge_to_green():
    g = GridSpec.auto(REF_PARAMS, 25.0, dx=0.01, dt=2e-3)
    r = cn_solve(REF_PARAMS, NoSink(), REF_X0, g)
    v, _ = numeric_laplace(r.t, r.origin, 1.0)
    assert abs(v - exact_v_green(0.0, REF_X0, 1.0, REF_PARAMS).real) < 1e-3


@pytest.mark.parametrize("law", sorted(REF_LAWS))
def test_flux_identity(law):
    g = GridSpec.auto(REF_PARAMS, 5.0, dx=0.02, dt=2e-3)
    r = cn_solve(REF_PARAMS, REF_LAWS[law], REF_X0, g)
    res, scale = flux_identity_residual(r.t, r.survival, r.flux)
    assert res < 1e-3 * scale


@pytest.mark.parametrize("law", sorted(REF_LAWS))
def test_positivity_and_monotone_survival(law):
    g = GridSpec.auto(REF_PARAMS, 3.0, dx=0.02, dt=2e-3)
    r = cn_solve(REF_PARAMS, REF_LAWS[law], REF_X0, g, t_out=[0.5, 1.0])
    assert r.info["min_value"] >= -1e-12
    assert np.all(np.diff(r.survival) <= 1e-15)


def test_mirror_symmetry():
    spec = REF_LAWS["linear"]
    g = GridSpec.auto(REF_PARAMS, 1.0, dx=0.02, dt=2e-3)
    a = cn_solve(REF_PARAMS, spec, 0.5, g, t_out=[0.3, 1.0])
    b = cn_solve(REF_PARAMS, spec, -0.5, g, t_out=[0.3, 1.0])
    assert np.max(np.abs(a.field - b.field[:, ::-1])) < 1e-12
    assert np.max(np.abs(a.origin - b.origin)) < 1e-12


def test_second_order_convergence():
    ts = np.array([0.5, 1.0, 2.0])
    vals = []
    for dx, dt in [(0.05, 5e-3), (0.025, 2.5e-3), (0.0125, 1.25e-3)]:
        g = GridSpec.auto(REF_PARAMS, 2.0, dx=dx, dt=dt)
        r = cn_solve(REF_PARAMS, Constant(0.5), REF_X0, g, t_out=ts)
        vals.append(r.origin[np.searchsorted(r.t, ts - 1e-12)])
    order = np.log2(np.abs(vals[0] - vals[1]) / np.abs(vals[1] - vals[2]))
    assert np.all(order >= 1.7)


def test_output_times_hit_exactly_and_snapping_recorded():
    g = GridSpec.auto(REF_PARAMS, 1.0, dx=0.04, dt=3e-3)
    r = cn_solve(REF_PARAMS, NoSink(), 0.5, g, t_out=[0.1234, 0.5])
    assert np.allclose(r.t_field, [0.1234, 0.5, 1.0], atol=1e-15)
    assert r.info["x0_requested"] == 0.5
    assert abs(r.info["x0_used"] - 0.5) <= g.dx / 2 + 1e-12
    with pytest.raises(ValidationError):
        r.at_times(0.3)


def test_graded_start_keeps_final_state():
    g = GridSpec.auto(REF_PARAMS, 1.0, dx=0.02, dt=2e-3)
    a = cn_solve(REF_PARAMS, Constant(0.5), REF_X0, g)
    b = cn_solve(REF_PARAMS, Constant(0.5), REF_X0, g, dt_start=1e-6)
    assert b.t[1] == pytest.approx(1e-6)
    assert abs(a.origin[-1] - b.origin[-1]) < 1e-5


def test_rate_override():
    g = GridSpec.auto(REF_PARAMS, 0.5, dx=0.02, dt=5e-3)
    a = cn_solve(REF_PARAMS, Constant(0.5), REF_X0, g)
    b = cn_solve(REF_PARAMS, NoSink(), REF_X0, g, rate=lambda t: 0.5 * np.ones_like(t))
    assert np.array_equal(a.origin, b.origin)


# --- Monte Carlo --------------------------------------------------------------


def test_mc_nosink_survival_exact():
    r = mc_solve(REF_PARAMS, NoSink(), REF_X0, n_paths=2000, dt=1e-2, t_max=0.5)
    assert np.all(r.survival == 1.0)


def test_mc_matches_cn_with_same_hat():
    spec = Constant(1.0)
    width = 0.05
    mc = mc_solve(FREE, spec, 0.0, n_paths=100_000, dt=2e-4, t_max=1.0, seed=3, delta_width=width)
    g = GridSpec.auto(FREE, 1.0, dx=0.01, dt=1e-3, delta_width=width / 0.01)
    cn = cn_solve(FREE, spec, 0.0, g, t_out=[0.25, 0.5, 1.0])
    for t in (0.25, 0.5, 1.0):
        i = int(round(t / 2e-4))
        j = int(np.argmin(np.abs(cn.t - t)))
        assert abs(mc.survival[i] - cn.survival[j]) < 3 * mc.survival_err[i]


def test_mc_equilibrium_moment():
    p = ModelParams(1.0, 2.0, -1)
    r = mc_solve(p, NoSink(), 0.5, n_paths=20_000, dt=2e-3, t_max=4.0, seed=1)
    X = np.abs(r.info["alive_positions"])
    assert abs(X.mean() - 0.5) < 3 * X.std() / math.sqrt(len(X)) + 5e-3


def test_mc_deterministic_and_absorbing_only():
    a = mc_solve(REF_PARAMS, Constant(0.5), REF_X0, n_paths=1000, dt=1e-3, t_max=0.2, seed=7)
    b = mc_solve(REF_PARAMS, Constant(0.5), REF_X0, n_paths=1000, dt=1e-3, t_max=0.2, seed=7)
    assert np.array_equal(a.survival, b.survival)
    with pytest.raises(ValidationError):
        mc_solve(ModelParams(1.0, 1.0, 1), Constant(0.5), REF_X0, n_paths=10)


# --- numeric_laplace ----------------------------------------------------------


def test_numeric_laplace_constant_series():
    t = np.linspace(0.0, 25.0, 25001)
    v, _ = numeric_laplace(t, np.ones_like(t), 1.0, tail="none", rule="simpson")
    assert v == pytest.approx(1 - math.exp(-25), abs=1e-8)


def test_numeric_laplace_exponential():
    t = np.linspace(0.0, 30.0, 30001)
    v, rem = numeric_laplace(t, np.exp(-2 * t), 1.0)
    assert v == pytest.approx(1 / 3, abs=1e-6)
    v, _ = numeric_laplace(t, np.exp(-2 * t), 1.0, rule="simpson")
    assert v == pytest.approx(1 / 3, abs=1e-12)
    assert rem < 1e-30


def test_numeric_laplace_flags_short_window():
    t = np.linspace(0.0, 5.0, 101)
    with pytest.raises(ValidationError, match="t_max"):
        numeric_laplace(t, np.ones_like(t), 1.0, tail="none")
    v, rem = numeric_laplace(t, np.ones_like(t), 1.0)
    assert v == pytest.approx(1.0, abs=1e-3)
    assert rem == pytest.approx(math.exp(-5))
