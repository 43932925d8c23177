import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_minnorm.errors import DegenerateProbe, InconsistentMetadata, InvalidArgument, NotApplicable
from robust_minnorm.utility import (GridSpec, UtilityFn, ae_report, check_admissibility,
                                    estimate_ae, eval_derivative, eval_utility,
                                    fit_growth_constants, growth_envelope)

FAMILIES = [UtilityFn.log_linear(), UtilityFn.linear_power(2.0), UtilityFn.linear_power(1.5),
            UtilityFn.bounded_exp_power(2.0), UtilityFn.bounded_exp_power(1.0)]


def test_log_linear_values():
    u = UtilityFn.log_linear()
    assert eval_utility(u, 1.0) == 0.0
    assert eval_utility(u, math.e) == pytest.approx(1.0, abs=1e-15)
    assert eval_derivative(u, 0.3) == 1.0
    assert eval_derivative(u, 1.0) == 1.0
    assert eval_derivative(u, 2.0) == 0.5


def test_linear_power_at_minus_one():
    assert eval_utility(UtilityFn.linear_power(2.0), -1.0) == pytest.approx(-1.5, abs=1e-15)


def test_bounded_exp_power_slope():
    u = UtilityFn.bounded_exp_power(2.0)
    assert eval_derivative(u, -1.0) == pytest.approx(2.0, abs=1e-15)
    h = 1e-6
    fd = (u(-1 + h) - u(-1 - h)) / (2 * h)
    assert fd == pytest.approx(2.0, rel=1e-8)


def test_bounded_exp_power_is_bounded_above():
    u = UtilityFn.bounded_exp_power(2.0)
    assert u(1e300) == pytest.approx(1.0)
    assert ae_report(u).case_tag == "bounded_above"


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_input_rejected(bad):
    u = UtilityFn.log_linear()
    with pytest.raises(InvalidArgument):
        eval_utility(u, bad)
    with pytest.raises(InvalidArgument):
        eval_derivative(u, np.array([0.0, bad]))


def test_vectorised_evaluation_matches_scalar():
    u = UtilityFn.log_linear()
    xs = np.array([-3.0, 0.0, 1.0, 2.5])
    assert np.array_equal(u(xs), np.array([u(float(x)) for x in xs]))


def test_half_line_pieces_rejected():
    with pytest.raises(InvalidArgument):
        UtilityFn.custom([(math.inf, "log", (0.0, 1.0, 0.0))], 1, 1, 1)


def test_discontinuity_rejected():
    with pytest.raises(InvalidArgument):
        UtilityFn.custom([(0.0, "affine", (0.0, 1.0)), (math.inf, "affine", (1.0, 1.0))], 1, 1, 1)


def test_breakpoint_uses_left_derivative():
    u = UtilityFn.custom([(0.0, "affine", (0.0, 3.0)), (math.inf, "affine", (0.0, 1.0))], 1, 3, 1)
    assert u.derivative(0.0) == 3.0
    assert u.derivative(1e-12) == 1.0


@pytest.mark.parametrize("u", FAMILIES, ids=lambda u: f"{u.kind}{u.params}")
def test_builtins_pass_admissibility(u):
    rep = check_admissibility(u)
    assert rep.passed, rep.first_violation


def test_exponential_loss_fails_growth_bound():
    u = UtilityFn.custom([(math.inf, "exp", (0.0, -1.0, -1.0))], p_growth=1, c1=1, x_lower=1)
    rep = check_admissibility(u)
    assert not rep.passed
    name, x = rep.first_violation
    assert name == "growth" and x < -1


def test_probe_grid_must_reach_ten_x_lower():
    with pytest.raises(InvalidArgument):
        check_admissibility(UtilityFn.log_linear(x_lower=1.0), GridSpec(x_max=5.0))


def test_fit_growth_constants_give_passing_metadata():
    u = UtilityFn.linear_power(2.0)
    c1, xl = fit_growth_constants(u, 2.0)
    refit = UtilityFn.linear_power(2.0, c1=c1, x_lower=xl)
    assert check_admissibility(refit).passed


def test_fit_rejects_positive_utility():
    u = UtilityFn.custom([(math.inf, "affine", (1e9, 1e-9))], 1, 1, 1)
    with pytest.raises(InconsistentMetadata):
        fit_growth_constants(u, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(range(len(FAMILIES))),
       st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(0, 1))
def test_concave_and_monotone(i, x1, x2, t):
    u = FAMILIES[i]
    lo, hi = min(x1, x2), max(x1, x2)
    assert u(lo) <= u(hi) + 1e-10 * (1 + abs(u(hi)))
    mid = t * x1 + (1 - t) * x2
    chord = t * u(x1) + (1 - t) * u(x2)
    assert u(mid) >= chord - 1e-10 * (1 + abs(chord))


def test_concavity_on_ten_thousand_pairs(rng):
    x1 = rng.uniform(-1e3, 1e3, 10_000)
    x2 = rng.uniform(-1e3, 1e3, 10_000)
    t = rng.uniform(0, 1, 10_000)
    for u in FAMILIES:
        chord = t * u(x1) + (1 - t) * u(x2)
        assert np.all(u(t * x1 + (1 - t) * x2) >= chord - 1e-10 * (1 + np.abs(chord)))


@pytest.mark.parametrize("u", FAMILIES[:4], ids=lambda u: f"{u.kind}{u.params}")
def test_derivative_matches_finite_differences(u, rng):
    x = rng.uniform(-50, 50, 400)
    x = x[np.abs(x) > 1e-3]
    x = x[np.abs(x - 1) > 1e-3]
    h = 1e-6 * (1 + np.abs(x))
    fd = (u(x + h) - u(x - h)) / (2 * h)
    assert np.allclose(u.derivative(x), fd, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0])
def test_linear_power_scaling_below_x_lower(q, rng):
    # the elasticity is a supremum, so the scaling holds with any exponent below q
    u = UtilityFn.linear_power(q)
    g = (1 + q) / 2
    x = -rng.uniform(10, 1e3, 500)
    lam = rng.uniform(1, 50, 500)
    assert np.all(u(lam * x) <= lam ** g * u(x))


def test_estimate_ae_examples():
    assert estimate_ae(UtilityFn.log_linear(), "+").value == pytest.approx(0.0, abs=0.01)
    for q in (1.5, 2.0, 3.0):
        est = estimate_ae(UtilityFn.linear_power(q), "-")
        assert est.value == pytest.approx(q, rel=1e-6)
        assert est.stable
    lin = UtilityFn.custom([(math.inf, "affine", (0.0, 1.0))], 1, 1, 1)
    assert estimate_ae(lin, "+").value == 1.0


def test_estimate_ae_degenerate_probe():
    u = UtilityFn.log_linear()
    with pytest.raises(DegenerateProbe):
        estimate_ae(u, "+", [0.5, 1.0, 2.0])


def test_estimate_ae_validates_probes():
    with pytest.raises(InvalidArgument):
        estimate_ae(UtilityFn.log_linear(), "+", [3.0, 2.0, 1.0])


@pytest.mark.parametrize("u,tag", [(UtilityFn.log_linear(), "rae_plus"),
                                   (UtilityFn.linear_power(2.0), "rae_minus"),
                                   (UtilityFn.linear_power(1.5), "rae_minus")])
def test_ae_report_and_scaling_envelope(u, tag, rng):
    rep = ae_report(u)
    assert rep.case_tag == tag and rep.certified
    assert rep.gamma_lower <= 1 <= rep.gamma_upper and rep.gamma_lower < rep.gamma_upper
    if tag == "rae_minus":
        assert 1 < rep.ae_minus <= u.p_growth * (1 + 1e-9)
    x = rng.uniform(-1e3, 1e3, 2000)
    lam = rng.uniform(1, 100, 2000)
    for g in (rep.gamma_lower, rep.gamma_upper):
        rhs = lam ** g * (u(x) + rep.envelope_c)
        assert np.all(u(lam * x) <= rhs + 1e-9 * (1 + np.abs(rhs)))


def test_growth_envelope_examples():
    u = UtilityFn.linear_power(2.0)
    rep = ae_report(u)
    c_hat = growth_envelope(u, rep, gamma_hat=2.0)
    assert c_hat > 0
    ll = UtilityFn.log_linear()
    rl = ae_report(ll)
    c1 = growth_envelope(ll, rl)
    assert growth_envelope(ll, rl) == c1


def test_growth_envelope_needs_rae():
    u = UtilityFn.bounded_exp_power(2.0)
    with pytest.raises(NotApplicable):
        growth_envelope(u, ae_report(u))


def test_growth_envelope_detects_bad_metadata():
    u = UtilityFn.log_linear()
    rep = ae_report(u)
    # envelope built for a much smaller exponent cannot dominate the linear branch
    with pytest.raises(InconsistentMetadata):
        growth_envelope(UtilityFn.linear_power(2.0), rep, gamma_hat=0.01)
