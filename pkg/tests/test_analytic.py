import numpy as np
import pytest
from conftest import REF_LAWS, REF_PARAMS, REF_X0, VOLTERRA_ORIGIN

from sinklab.analytic import (
    contributing_nodes,
    field_series,
    origin_series,
    survival_series,
    talbot_plan,
)
from sinklab.green import exact_v_green
from sinklab.ilt import IltConfig, talbot
from sinklab.model import NoSink, ValidationError

T_REF = np.array([0.5, 1.0, 2.0])


def test_talbot_plan_matches_scalar_talbot():
    F = lambda s: 1 / (s + 1) ** 2  # noqa: E731
    nodes, weights = talbot_plan(T_REF, 32)
    vals = np.sum(weights * F(nodes), axis=1).real
    assert np.allclose(vals, [talbot(F, t) for t in T_REF], atol=1e-15)


def test_contributing_nodes_drop_negligible_terms():
    w = np.array([[1.0, 1e-20, 0.5]])
    v = np.ones((1, 3))
    assert contributing_nodes(w, v).tolist() == [[True, False, True]]


@pytest.mark.parametrize("law", sorted(REF_LAWS))
def test_origin_matches_frozen_volterra(law):
    s = origin_series(REF_PARAMS, REF_LAWS[law], REF_X0, T_REF)
    assert np.max(np.abs(s.values - VOLTERRA_ORIGIN[law][0])) < 1e-4


@pytest.mark.parametrize("law", sorted(REF_LAWS))
def test_positivity_and_residual(law):
    t = np.linspace(0.05, 8.0, 40)
    s = origin_series(REF_PARAMS, REF_LAWS[law], REF_X0, t)
    assert np.all(s.values >= -1e-6)
    assert s.residual_max < 1e-8
    assert s.residual_max_all >= s.residual_max


def test_field_at_origin_equals_origin_series():
    spec = REF_LAWS["expdecay"]
    f = field_series(REF_PARAMS, spec, REF_X0, [-0.4, 0.0, 0.7], T_REF)
    o = origin_series(REF_PARAMS, spec, REF_X0, T_REF)
    assert f.values.shape == (3, 3)
    assert np.allclose(f.values[:, 1], o.values, atol=1e-14)


def test_nosink_field_inverts_green():
    x = np.array([-0.5, 0.0, 1.0])
    f = field_series(REF_PARAMS, NoSink(), REF_X0, x, [1.0])
    ref = [talbot(lambda s, xi=xi: exact_v_green(xi, REF_X0, s, REF_PARAMS, allow_continuation=True), 1.0) for xi in x]
    assert np.allclose(f.values[0], ref, atol=1e-13)


def test_survival_decreases_with_sink():
    t = np.linspace(0.1, 5.0, 20)
    s = survival_series(REF_PARAMS, REF_LAWS["constant"], REF_X0, t)
    assert np.all(np.diff(s.values) < 0)
    assert np.all((s.values > 0) & (s.values <= 1 + 1e-6))


def test_both_methods_report_discrepancy():
    s = origin_series(REF_PARAMS, REF_LAWS["constant"], REF_X0, T_REF, IltConfig(method="both"))
    assert np.all(np.isfinite(s.discrepancy))
    assert np.all(s.discrepancy < 1e-3)
    assert np.array_equal(s.flags, s.discrepancy > 1e-6)
    single = origin_series(REF_PARAMS, REF_LAWS["constant"], REF_X0, T_REF)
    assert np.all(np.isnan(single.discrepancy)) and not single.flags.any()


def test_rejects_nonpositive_times():
    with pytest.raises(ValidationError):
        origin_series(REF_PARAMS, NoSink(), REF_X0, [0.0, 1.0])
