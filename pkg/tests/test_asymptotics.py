import math

import numpy as np
import pytest

from robust_minnorm.asymptotics import convergence_report, geometric_schedule, sweep_k
from robust_minnorm.errors import InvalidArgument
from robust_minnorm.market import AmbiguitySpec, DiscreteMeasure
from robust_minnorm.robustopt import ConstraintSet
from robust_minnorm.utility import UtilityFn, ae_report

ATOMS = [[0.3, 0.1], [-0.1, 0.2], [0.05, -0.3], [-0.2, 0.05], [0.25, 0.25]]


@pytest.fixture(scope="module")
def sweep():
    U = UtilityFn.log_linear()
    spec = AmbiguitySpec(DiscreteMeasure.uniform(ATOMS), 2, 0.1)
    D = ConstraintSet.halfspace(1.0, 2)
    return sweep_k(U, spec, 1.0, D, geometric_schedule(0.05, 12.8, 4.0), meta=ae_report(U))


def test_geometric_schedule():
    assert geometric_schedule(0.5, 32, 2) == [0.5, 1, 2, 4, 8, 16, 32]


@pytest.mark.parametrize("bad", [[], [1.0, 1.0], [2.0, 1.0], [0.0, 1.0]])
def test_bad_schedule_rejected(bad):
    U = UtilityFn.log_linear()
    spec = AmbiguitySpec(DiscreteMeasure.uniform(ATOMS), 2, 0.1)
    with pytest.raises(InvalidArgument):
        sweep_k(U, spec, 1.0, ConstraintSet.halfspace(1.0, 2), bad)


def test_sweep_converges_to_min_norm_point(sweep):
    assert all(r.ok for r in sweep.records)
    assert np.allclose(sweep.min_norm, [[0.5, 0.5]])
    assert sweep.records[-1].dist < 1e-3
    assert sweep.records[0].dist > sweep.records[-1].dist


def test_values_decrease_and_are_sandwiched(sweep):
    assert sweep.value_monotone()
    for r in sweep.records:
        assert r.lower_bound <= r.value + 1e-9 <= r.upper_bound + 2e-9


def test_warm_and_cold_agree(sweep):
    cold = sweep_k(sweep.U, sweep.spec, 1.0, ConstraintSet.halfspace(1.0, 2), sweep.ks(),
                   warm_start=False, threads=2, meta=ae_report(sweep.U))
    assert np.allclose(cold.column("value"), sweep.column("value"), atol=1e-7)


def test_convergence_report(sweep):
    rep = convergence_report(sweep, target=-10.0)
    assert rep.final_dist == sweep.records[-1].dist
    assert rep.value_monotone and not rep.failures
    ks = sweep.ks()
    for d, k0 in rep.k0.items():
        assert k0 is None or k0 in ks
    hit = [rep.k0[d] for d in sorted(rep.k0, reverse=True) if rep.k0[d] is not None]
    assert hit and hit == sorted(hit)
    # shift bound at (1/2, 1/2) falls linearly in k, so it crosses -10 only for large k
    if rep.bound_crossing_k is not None:
        assert rep.value_below_target_after_crossing
    js = rep.to_json()
    assert set(js) >= {"k0", "excursions", "final_dist", "failures"}


def test_failures_are_recorded_not_raised():
    # exponential losses under p = 1 make every inner problem ill-posed
    U = UtilityFn.custom([(0.0, "exp", (1.0, -1.0, -1.0)), (math.inf, "affine", (0.0, 1.0))],
                         p_growth=2, c1=1, x_lower=1)
    spec = AmbiguitySpec(DiscreteMeasure.uniform(ATOMS), 1, 0.1)
    res = sweep_k(U, spec, 1.0, ConstraintSet.halfspace(1.0, 2), [0.1, 0.2])
    assert len(res.records) == 2
    assert all(not r.ok and r.error.startswith("IllPosed") for r in res.records)
    assert convergence_report(res).failures[0][0] == 0.1
