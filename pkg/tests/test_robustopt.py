import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from robust_minnorm.errors import InvalidArgument, NotApplicable
from robust_minnorm.market import AmbiguitySpec, DiscreteMeasure
from robust_minnorm.robustopt import (ConstraintSet, formula_bound, maximize, min_norm_points,
                                      project, weight_bound_K)
from robust_minnorm.utility import UtilityFn, ae_report
from robust_minnorm.worstcase import inner_value


def test_constraint_validation():
    with pytest.raises(InvalidArgument):
        ConstraintSet.polyhedron([[1.0, 0.0], [-1.0, 0.0]], [1.0, 0.0])  # x >= 1 and -x >= 0
    with pytest.raises(InvalidArgument):
        ConstraintSet("box", 2)
    with pytest.raises(InvalidArgument):
        ConstraintSet.halfspace(np.nan, 2)


def test_min_norm_points_examples():
    assert np.allclose(min_norm_points(ConstraintSet.halfspace(1.0, 2)), [[0.5, 0.5]])
    assert np.allclose(min_norm_points(ConstraintSet.two_sided(1.0, 2)), [[-0.5, -0.5], [0.5, 0.5]])
    assert np.allclose(min_norm_points(ConstraintSet.halfspace(-1.0, 3)), [[0, 0, 0]])
    fl = ConstraintSet.finite_list([[3.0, 0.0], [0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(min_norm_points(fl), [[0.0, -1.0], [1.0, 0.0]])


def test_projection_examples():
    assert np.allclose(project(ConstraintSet.halfspace_nonneg(1.0, 2), [2.0, -1.0]), [2.0, 0.0])
    assert np.allclose(project(ConstraintSet.halfspace(1.0, 2), [0.0, 0.0]), [0.5, 0.5])
    assert np.allclose(project(ConstraintSet.two_sided(1.0, 2), [-3.0, 0.0]), [-3.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-2, 2))
def test_polyhedron_projection_is_optimal(v, a):
    N = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, -1.0, 2.0]])
    off = np.array([a, -1.0, 0.5])
    D = ConstraintSet.polyhedron(N, off)
    v = np.array(v)
    p = project(D, v)
    assert D.contains(p, 1e-8)
    ref = minimize(lambda x: np.sum((x - v) ** 2), p, jac=lambda x: 2 * (x - v), method="SLSQP",
                   constraints=[{"type": "ineq", "fun": lambda x: N @ x - off, "jac": lambda x: N}],
                   options={"ftol": 1e-14, "maxiter": 500})
    assert np.linalg.norm(p - v) <= np.linalg.norm(ref.x - v) + 1e-7


def market_1d():
    P = DiscreteMeasure.uniform([[0.3], [-0.1], [0.05], [-0.2], [0.25]])
    return P


def test_maximize_matches_grid_in_one_dimension():
    U = UtilityFn.log_linear()
    spec = AmbiguitySpec(market_1d(), 2, 0.02)
    D = ConstraintSet.halfspace(-10.0, 1)
    sol = maximize(U, spec, 1.0, D, k_bound=10.0)
    v = lambda g: inner_value(U, spec, 1.0, [g]).value
    coarse = np.linspace(-3, 3, 121)
    c = coarse[int(np.argmax([v(g) for g in coarse]))]
    fine = np.linspace(c - 0.05, c + 0.05, 201)
    vals = np.array([v(g) for g in fine])
    assert sol.value >= vals.max() - 1e-9
    assert abs(sol.w_k[0] - fine[vals.argmax()]) <= 2 * (fine[1] - fine[0])
    assert sol.certified


def test_maximize_matches_slsqp_in_two_dimensions():
    U = UtilityFn.log_linear()
    P = DiscreteMeasure.uniform([[0.3, 0.1], [-0.1, 0.2], [0.05, -0.3], [-0.2, 0.05]])
    spec = AmbiguitySpec(P, 2, 0.05)
    D = ConstraintSet.halfspace(1.0, 2)
    sol = maximize(U, spec, 1.0, D, k_bound=20.0)
    f = lambda w: -inner_value(U, spec, 1.0, w).value
    best = max((minimize(f, x0, method="SLSQP",
                         constraints=[{"type": "ineq", "fun": lambda w: w.sum() - 1.0}])
                for x0 in ([0.5, 0.5], [2.0, -1.0], [-1.0, 2.0])), key=lambda r: -r.fun)
    assert sol.value >= -best.fun - 1e-7
    assert D.contains(sol.w_k)


def test_large_radius_pushes_to_min_norm_point():
    U = UtilityFn.log_linear()
    P = DiscreteMeasure.uniform([[0.3, 0.1], [-0.1, 0.2], [0.05, -0.3], [-0.2, 0.05]])
    D = ConstraintSet.halfspace(1.0, 2)
    sol = maximize(U, AmbiguitySpec(P, 2, 32.0), 1.0, D)
    assert np.linalg.norm(sol.w_k - [0.5, 0.5]) < 1e-3


def test_singleton_and_finite_list():
    U = UtilityFn.log_linear()
    P = market_1d()
    spec = AmbiguitySpec(DiscreteMeasure(np.hstack([P.atoms, -P.atoms]), P.weights), 2, 0.1)
    sol = maximize(U, spec, 1.0, ConstraintSet.singleton([0.3, 0.7]))
    assert np.array_equal(sol.w_k, [0.3, 0.7])
    cands = np.array([[0.3, 0.7], [0.0, 0.0], [2.0, 2.0]])
    sol = maximize(U, spec, 1.0, ConstraintSet.finite_list(cands))
    vals = [inner_value(U, spec, 1.0, c).value for c in cands]
    assert np.array_equal(sol.w_k, cands[int(np.argmax(vals))])


def test_two_sided_tie_break_is_deterministic():
    U = UtilityFn.log_linear()
    P = DiscreteMeasure.uniform([[0.2, 0.2], [-0.2, -0.2], [0.1, -0.1], [-0.1, 0.1]])
    D = ConstraintSet.two_sided(1.0, 2)
    a = maximize(U, AmbiguitySpec(P, 2, 8.0), 1.0, D)
    b = maximize(U, AmbiguitySpec(P, 2, 8.0), 1.0, D)
    assert np.array_equal(a.w_k, b.w_k)


def test_weight_bound_requires_rae():
    U = UtilityFn.bounded_exp_power(2.0)
    with pytest.raises(NotApplicable):
        weight_bound_K(ae_report(U), 1.0, [0.5, 0.5], 0.25, 1.0, 1.0, U)


def test_weight_bound_dominates_optimum():
    U = UtilityFn.log_linear()
    P = DiscreteMeasure.uniform([[0.3, 0.1], [-0.1, 0.2], [0.05, -0.3], [-0.2, 0.05]])
    D = ConstraintSet.halfspace(1.0, 2)
    for k in (0.05, 0.5, 2.0):
        spec = AmbiguitySpec(P, 2, k)
        kb = formula_bound(U, ae_report(U), spec, 1.0, D)
        assert kb.K >= max(kb.K0, kb.K1) and 0 < kb.eta < 1
        sol = maximize(U, spec, 1.0, D, k_bound=kb.K)
        assert np.linalg.norm(sol.w_k) <= kb.K
