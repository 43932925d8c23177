import sys

import numpy as np
import pytest

from robust_minnorm.market import AmbiguitySpec, DiscreteMeasure
from robust_minnorm.utility import UtilityFn

BUILTINS = ("log_linear", "linear_power", "bounded_exp_power")


def builtin_utility(kind, p):
    """Built-in family whose lower growth stays within transport order ``p``."""
    if kind == "log_linear":
        return UtilityFn.log_linear()
    if kind == "linear_power":
        return UtilityFn.linear_power(q=(1 + p) / 2 if p > 1 else 1.0)
    if kind == "bounded_exp_power":
        return UtilityFn.bounded_exp_power(p=p)
    raise ValueError(kind)


def random_instance(seed, n=3, d=2, p=2.0, kind="log_linear", scale=0.3, k=None):
    rng = np.random.default_rng(seed)
    atoms = rng.normal(size=(n, d)) * scale
    weights = rng.dirichlet(np.ones(n))
    P = DiscreteMeasure(atoms, weights)
    k = float(rng.uniform(0.1, 1.5)) if k is None else k
    x0 = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
    w = rng.normal(size=d)
    return builtin_utility(kind, p), AmbiguitySpec(P, p, k), x0, w


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[i])
