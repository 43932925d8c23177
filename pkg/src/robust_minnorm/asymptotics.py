"""Radius sweeps: optimal weights as the ambiguity radius grows."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, RobustMinNormError
from .market import AmbiguitySpec
from .robustopt import ConstraintSet, dist_to_set, maximize, min_norm_points
from .utility import AEReport, UtilityFn
from .worstcase import growth_lower_bound, shift_upper_bound


@dataclass
class SweepRecord:
    k: float
    w_k: np.ndarray | None
    norm: float
    value: float
    dist: float
    iterations: int
    wall_time: float
    lower_bound: float = math.nan
    upper_bound: float = math.nan
    certified: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepResult:
    records: list
    min_norm: np.ndarray
    x0: float
    U: UtilityFn | None = field(default=None, repr=False)
    spec: AmbiguitySpec | None = field(default=None, repr=False)

    def ks(self) -> np.ndarray:
        return np.array([r.k for r in self.records])

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def value_monotone(self, tol: float = 1e-7) -> bool:
        v = [r.value for r in self.records if r.ok]
        return all(b <= a + tol for a, b in zip(v, v[1:]))


def geometric_schedule(k_min: float, k_max: float, ratio: float = 2.0) -> list:
    out, k = [], float(k_min)
    while k <= k_max * (1 + 1e-12):
        out.append(k)
        k *= ratio
    return out


def _solve_one(U, spec, x0, D, k, w_start, meta, mn, solver_kw):
    s = spec.with_radius(k)
    t0 = time.perf_counter()
    try:
        sol = maximize(U, s, x0, D, meta=meta, w_start=w_start, **solver_kw)
    except RobustMinNormError as exc:
        return SweepRecord(k, None, math.nan, math.nan, math.nan, 0,
                           time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")
    wt = time.perf_counter() - t0
    w = sol.w_k
    lb = growth_lower_bound(U, s.baseline, x0, w, k, s.order_p)
    ub = shift_upper_bound(U, s.baseline, x0, w, k) if np.linalg.norm(w) > 0 else float(U(x0))
    return SweepRecord(k, w, float(np.linalg.norm(w)), sol.value, dist_to_set(w, mn),
                       sol.iterations, wt, lb, ub, sol.certified)


def sweep_k(U: UtilityFn, spec_base: AmbiguitySpec, x0: float, D: ConstraintSet, k_schedule,
            *, warm_start: bool = True, threads: int = 1, meta: AEReport | None = None,
            **solver_kw) -> SweepResult:
    """Solve the outer problem at each radius of ``k_schedule``.

    With ``warm_start`` the radii are processed in order, each ascent starting
    from the previous optimiser.  Without it the solves are independent and
    run on ``threads`` workers.  A failed radius is recorded and skipped.
    """
    ks = [float(k) for k in k_schedule]
    if not ks or any(k <= 0 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidArgument("k schedule must be positive and strictly increasing")
    mn = min_norm_points(D)
    if warm_start:
        records, w_prev = [], None
        for k in ks:
            rec = _solve_one(U, spec_base, x0, D, k, w_prev, meta, mn, solver_kw)
            records.append(rec)
            if rec.ok:
                w_prev = rec.w_k
    else:
        job = lambda k: _solve_one(U, spec_base, x0, D, k, None, meta, mn, solver_kw)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                records = list(pool.map(job, ks))
        else:
            records = [job(k) for k in ks]
    return SweepResult(records, mn, x0, U, spec_base)


@dataclass
class ConvergenceReport:
    k0: dict
    excursions: list
    final_dist: float
    value_monotone: bool
    failures: list
    divergence_target: float
    bound_crossing_k: float | None
    value_below_target_after_crossing: bool | None
    bound_at_wbar: list

    def to_json(self) -> dict:
        return {
            "k0": {repr(float(d)): k for d, k in self.k0.items()},
            "excursions": self.excursions,
            "final_dist": self.final_dist,
            "value_monotone": self.value_monotone,
            "failures": self.failures,
            "divergence_target": self.divergence_target,
            "bound_crossing_k": self.bound_crossing_k,
            "value_below_target_after_crossing": self.value_below_target_after_crossing,
            "bound_at_wbar": self.bound_at_wbar,
        }


def convergence_report(sweep: SweepResult, delta_grid=(0.5, 0.2, 0.1, 0.05, 0.01),
                       target: float = -10.0) -> ConvergenceReport:
    """Empirical ``k0(delta)``, non-monotone distance excursions and a divergence check.

    ``k0(delta)`` is the first scheduled radius with ``|w_k| - min|w| < delta``.
    The divergence check compares the optimal values with the shift bound at
    the minimal-norm point ``w_bar``.
    """
    recs = [r for r in sweep.records if r.ok]
    if not sweep.records:
        raise InvalidArgument("empty sweep")
    mnorm = float(np.linalg.norm(sweep.min_norm[0]))
    k0 = {}
    for d in delta_grid:
        k0[d] = next((r.k for r in recs if r.norm - mnorm < d), None)
    excursions = [b.k for a, b in zip(recs, recs[1:]) if b.dist > a.dist + 1e-9]
    failures = [(r.k, r.error) for r in sweep.records if not r.ok]

    crossing, after_ok, bounds = None, None, []
    wbar = sweep.min_norm[0]
    if sweep.U is not None and sweep.spec is not None and np.linalg.norm(wbar) > 0:
        P = sweep.spec.baseline
        for r in recs:
            b = shift_upper_bound(sweep.U, P, sweep.x0, wbar, r.k)
            bounds.append([r.k, b])
            if crossing is None and b < target:
                crossing = r.k
        if crossing is not None:
            after = [r.value for r in recs if r.k >= crossing]
            after_ok = bool(all(v < target for v in after))
    return ConvergenceReport(k0, excursions, recs[-1].dist if recs else math.nan,
                             sweep.value_monotone(), failures, target, crossing, after_ok, bounds)
