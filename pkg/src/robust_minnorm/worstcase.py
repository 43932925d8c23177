"""Worst-case expected utility over a Wasserstein ball around a discrete baseline.

Moving mass against the portfolio direction is optimal, so the inner problem
reduces to choosing a transport distance per scenario.  Mass of one scenario
may be split between two distances (the ball contains such measures), which
makes the per-scenario cost convex in the budget and the problem exactly
solvable through a scalar Lagrange multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DualityGapError, IllPosed, InvalidArgument, NumericalFailure
from .market import AmbiguitySpec, DiscreteMeasure, moment_cp, sphere_grid
from .utility import UtilityFn

GAP_TOL = 1e-8
RESID_TOL = 1e-9  # log-budget residual accepted before rescaling onto the sphere
_GOLDEN = (math.sqrt(5) - 1) / 2


def scenario_wealth(x0: float, w, P: DiscreteMeasure) -> np.ndarray:
    """Terminal wealth ``x0 + x0 <w, x_i>`` per atom."""
    if x0 == 0:
        raise InvalidArgument("initial wealth x0 must be non-zero")
    w = np.asarray(w, dtype=float).ravel()
    if w.size != P.dim:
        raise InvalidArgument(f"w has dimension {w.size}, measure has {P.dim}")
    return x0 + x0 * (P.atoms @ w)


@dataclass(frozen=True)
class RadialBudget:
    """Per-atom transport distance ``z_i`` and the budget norm ``(sum mu_i z_i^p)^(1/p)``.

    When an atom is split, ``z_i`` is the p-mean of its pieces so the norm is exact.
    """

    z: np.ndarray
    budget_norm: float


@dataclass(frozen=True, eq=False)
class InnerSolution:
    value: float
    budget: RadialBudget
    dual_lambda: float
    saturated: bool
    worst_measure: DiscreteMeasure
    dual_value: float = math.nan
    gap: float = 0.0
    attained: bool = True
    # per piece of the worst measure: source atom, probability mass, distance
    piece_source: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    piece_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    piece_z: np.ndarray = field(default_factory=lambda: np.zeros(0))


# ---------------------------------------------------------------------------
# per-atom penalised minimisation  h_i(lam) = min_z U(a_i - c z) + lam z^p

def _phi(U, a, c, lam, p, z):
    return U(a - c * z) + lam * z ** p


def _atom_argmin(U, a, c, lam, p, zscale, n_uniform=160, n_geom=48):
    """Global minimiser of ``U(a_i - c z) + lam z^p`` over ``z >= 0`` for every atom.

    Returns ``(z, h)``; atoms whose objective is still decreasing at the far end
    of the search range get ``z = inf`` and ``h = -inf``.  Ties go to the
    smaller ``z``.
    """
    n = a.size
    # sparse far points catch a slow descent that only starts far out, which
    # happens when lam is just below the tail coefficient of U
    t = np.concatenate([np.linspace(0.0, 1.0, n_uniform), np.geomspace(1.0, 1e4, n_geom + 1)[1:],
                        np.geomspace(1e4, 1e40, 37)[1:]])
    Z = zscale[:, None] * t[None, :]
    A = a[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        vals = _phi(U, A, c, lam, p, Z)
    vals = np.where(np.isnan(vals), np.inf, vals)
    j = np.argmin(vals, axis=1)
    z = Z[np.arange(n), j].copy()
    h = vals[np.arange(n), j].copy()

    # far end: keep extending geometrically until the objective turns up
    last = t.size - 1
    for i in np.flatnonzero(j == last):
        zi, hi = z[i], h[i]
        found = False
        for _ in range(40):
            zn = zi * 10.0
            hn = float(_phi(U, a[i], c, lam, p, zn))
            if not np.isfinite(zn) or not hn < hi:
                found = np.isfinite(hn) or hn == math.inf
                break
            zi, hi = zn, hn
        if not found:
            z[i], h[i] = math.inf, -math.inf
        else:
            z[i], h[i] = zi, hi

    # refine every interior local minimum of the grid, and every cell where the
    # derivative turns from negative to positive (a minimum the values miss):
    # bisection on the derivative where it changes sign, golden-section at kinks
    interior = (vals[:, 1:-1] <= vals[:, :-2]) & (vals[:, 1:-1] <= vals[:, 2:])
    interior &= np.isfinite(z)[:, None]
    rows, cols = np.nonzero(interior)
    with np.errstate(invalid="ignore", over="ignore"):
        grad = -c * U.derivative(A - c * Z) + lam * p * Z ** (p - 1)
    turn = (grad[:, :-1] < 0) & (grad[:, 1:] > 0) & np.isfinite(z)[:, None]
    trows, tcols = np.nonzero(turn)
    lo = np.concatenate([Z[rows, cols], Z[trows, tcols]])
    hi_ = np.concatenate([Z[rows, cols + 2], Z[trows, tcols + 1]])
    rows = np.concatenate([rows, trows])
    if rows.size:
        ai = a[rows]
        scale = zscale[rows]
        dphi = lambda zz: -c * U.derivative(ai - c * zz) + lam * p * zz ** (p - 1)
        sign = (dphi(lo) < 0) & (dphi(hi_) > 0)
        if not sign.all():
            x1 = hi_ - _GOLDEN * (hi_ - lo)
            x2 = lo + _GOLDEN * (hi_ - lo)
            f1 = _phi(U, ai, c, lam, p, x1)
            f2 = _phi(U, ai, c, lam, p, x2)
            for _ in range(200):
                if np.all(sign | (hi_ - lo <= 1e-10 * (1.0 + scale))):
                    break
                left = f1 <= f2
                hi_ = np.where(sign | ~left, hi_, x2)
                lo = np.where(sign | left, lo, x1)
                xn = np.where(left, hi_ - _GOLDEN * (hi_ - lo), lo + _GOLDEN * (hi_ - lo))
                fn = _phi(U, ai, c, lam, p, xn)
                x1, x2, f1, f2 = (np.where(left, xn, x2), np.where(left, x1, xn),
                                  np.where(left, fn, f2), np.where(left, f1, fn))
        for _ in range(80):
            mid = 0.5 * (lo + hi_)
            if not np.any(sign & (mid > lo) & (mid < hi_)):
                break
            neg = dphi(mid) < 0
            lo = np.where(sign & neg, mid, lo)
            hi_ = np.where(sign & ~neg, mid, hi_)
        zr = 0.5 * (lo + hi_)
        fr = _phi(U, ai, c, lam, p, zr)
        # visit candidates in increasing z so strict improvement keeps ties small
        for q in np.lexsort((zr, rows)):
            r_, zc, fc = rows[q], zr[q], fr[q]
            if fc < h[r_] or (fc == h[r_] and zc < z[r_]):
                z[r_], h[r_] = zc, fc
    return z, h


class _Evaluator:
    """Caches per-atom minimisers for each multiplier visited."""

    def __init__(self, U, a, mu, c, p, k):
        self.U, self.a, self.mu, self.c, self.p, self.k = U, a, mu, c, p, k
        self.kp = k ** p
        self.zscale = k / mu ** (1.0 / p) * (1 + 1e-3)
        self.cache = {}

    def __call__(self, lam):
        if lam not in self.cache:
            z, h = _atom_argmin(self.U, self.a, self.c, lam, self.p, self.zscale)
            with np.errstate(invalid="ignore"):
                b = float(np.dot(self.mu, z ** self.p)) if np.all(np.isfinite(z)) else math.inf
            dual = -lam * self.kp + float(np.dot(self.mu, h)) if np.all(np.isfinite(h)) else -math.inf
            self.cache[lam] = (z, b, dual)
        return self.cache[lam]


def _worst_measure(P, w, x0, src, mass, zs):
    direction = -math.copysign(1.0, x0) * w / np.linalg.norm(w)
    atoms = P.atoms[src] + zs[:, None] * direction[None, :]
    return DiscreteMeasure(atoms, mass / mass.sum())


def _pieces_value(U, a, c, src, mass, zs):
    return float(np.dot(mass, U(a[src] - c * zs)))


def _finish(U, P, x0, w, a, c, p, k, src, mass, zs, lam, dual, saturated, attained):
    mu = P.weights
    value = _pieces_value(U, a, c, src, mass, zs)
    zeff = np.zeros(P.n)
    np.add.at(zeff, src, mass * zs ** p)
    with np.errstate(invalid="ignore", divide="ignore"):
        zeff = np.where(mu > 0, (zeff / np.where(mu > 0, mu, 1)) ** (1.0 / p), 0.0)
    norm = float(np.dot(mass, zs ** p)) ** (1.0 / p)
    gap = value - dual if np.isfinite(dual) else math.inf
    return InnerSolution(
        value=value,
        budget=RadialBudget(zeff, norm),
        dual_lambda=float(lam),
        saturated=bool(saturated),
        worst_measure=_worst_measure(P, w, x0, src, mass, zs),
        dual_value=float(dual),
        gap=float(gap),
        attained=attained,
        piece_source=src,
        piece_mass=mass,
        piece_z=zs,
    )


def _solve_p1(U, P, x0, w, a, c, k, horizon):
    """Order one: the multiplier sits at the steepest slope of U."""
    mu = P.weights
    s_far = U.tail_slope(horizon)
    s_near = U.tail_slope(horizon / 1e3)
    if not np.isfinite(s_far) or s_far > 1.01 * s_near:
        raise IllPosed("utility slope keeps growing at -inf; the order-1 ball drives the value to -inf")
    lam = c * s_far
    base = float(np.dot(mu, U(a)))
    dual = base - c * k * s_far
    pos = np.flatnonzero(mu > 0)
    i = pos[np.argmin(a[pos])]
    idx = np.arange(P.n)
    if U.derivative(a[i]) >= s_far * (1 - 1e-15):
        # the worst atom already sits on the linear tail: move all its mass
        zs = np.zeros(P.n)
        zs[i] = k / mu[i]
        return _finish(U, P, x0, w, a, c, 1.0, k, idx, mu.copy(), zs, lam, dual, True, True)
    # infimum not attained: send a vanishing fraction of the worst atom far away
    z_far = k / mu[i]
    tol = GAP_TOL * (1 + abs(dual))
    for _ in range(200):
        t = k / (mu[i] * z_far)
        val = base + t * mu[i] * (float(U(a[i] - c * z_far)) - float(U(a[i])))
        if val - dual <= 0.1 * tol:
            break
        z_far *= 4.0
    src = np.concatenate([idx, [i]])
    mass = np.concatenate([mu, [t * mu[i]]])
    mass[i] *= 1 - t
    zs = np.zeros(P.n + 1)
    zs[-1] = z_far
    return _finish(U, P, x0, w, a, c, 1.0, k, src, mass, zs, lam, dual, True, False)


def _far_split(U, P, x0, w, a, c, p, k, pos_idx, mu_pos, z, b, lam, dual):
    """Spend the budget left over by the minimisers ``z`` on a vanishing
    fraction of one atom sent ever further away, until the value meets the dual."""
    kp = k ** p
    rest = kp - b
    a_pos = a[pos_idx]
    base = float(np.dot(mu_pos, U(a_pos - c * z)))
    tol = GAP_TOL * (1 + abs(dual))
    z_far = 2.0 * (float(np.max(z)) + kp ** (1.0 / p) / float(np.min(mu_pos)) ** (1.0 / p))
    for _ in range(400):
        with np.errstate(over="ignore", invalid="ignore"):
            t = rest / (z_far ** p - z ** p)  # mass moved from z to z_far per atom
            gain = t * (U(a_pos - c * z_far) - U(a_pos - c * z))
        gain = np.where((t <= mu_pos) & np.isfinite(gain), gain, np.inf)
        i = int(np.argmin(gain))
        if base + gain[i] - dual <= 0.1 * tol or not np.isfinite(z_far * 4.0 ** p):
            break
        z_far *= 4.0
    src = np.concatenate([pos_idx, [pos_idx[i]]])
    mass = np.concatenate([mu_pos, [t[i]]])
    mass[i] -= t[i]
    zs = np.concatenate([z, [z_far]])
    return _finish(U, P, x0, w, a, c, p, k, src, mass, zs, lam, dual, True, False)


def inner_value(U: UtilityFn, spec: AmbiguitySpec, x0: float, w, *,
                lam_start: float | None = None, check_gap: bool = True,
                max_bisect: int = 200, horizon: float = 1e6) -> InnerSolution:
    """Worst-case expected utility ``inf_{Q in B_k(P)} E_Q[U(x0 + x0 <w, X>)]``.

    ``lam_start`` warm-starts the multiplier search (e.g. from a nearby ``w``).
    """
    P, p, k = spec.baseline, spec.order_p, spec.radius_k
    w = np.asarray(w, dtype=float).ravel()
    a = scenario_wealth(x0, w, P)
    wn = float(np.linalg.norm(w))
    if wn == 0:
        v = float(U(x0))
        return InnerSolution(v, RadialBudget(np.zeros(P.n), 0.0), 0.0, False, P, v, 0.0, True,
                             np.arange(P.n), P.weights.copy(), np.zeros(P.n))
    c = abs(x0) * wn
    if p == 1:
        return _solve_p1(U, P, x0, w, a, c, k, horizon)

    keep = P.weights > 0
    a_pos, mu_pos = a[keep], P.weights[keep]
    pos_idx = np.flatnonzero(keep)
    ev = _Evaluator(U, a_pos, mu_pos, c, p, k)
    kp = ev.kp

    lam0 = lam_start if lam_start and lam_start > 0 else U.c1 * c ** p * 2.0 ** p + 1.0
    expo = (p - 1.0) / p  # budget ~ lam^(-1/expo) when the utility is close to linear

    def lres(lmb):
        b = ev(lmb)[1]
        if b == 0:
            return -math.inf
        return math.log(b / kp) if np.isfinite(b) else math.inf

    def jump(lmb, r, grow):
        # predicted multiplier from the power-law shape, pushed past the root
        if np.isfinite(r):
            step = math.exp(expo * abs(r)) * 1.05
            return lmb * step if grow else lmb / step
        return lmb * 16.0 if grow else lmb / 16.0

    # bracket: residual(lo) > 0 >= residual(hi)
    lam_lo = lam_hi = None
    lam = lam0
    r = lres(lam)
    for _ in range(400):
        if r > 0:
            lam_lo, r_lo = lam, r
            if lam_hi is not None:
                break
            lam = jump(lam, r, True)
            if lam > 1e250:
                raise IllPosed("worst-case value is -inf: the penalised scenario problem stays "
                               "unbounded below for every multiplier tried")
        else:
            lam_hi, r_hi = lam, r
            if lam_lo is not None:
                break
            lam = jump(lam, r, False)
            if lam < 1e-250:
                break
        r = lres(lam)
    if lam_hi is None:
        raise IllPosed("worst-case value is -inf: no multiplier keeps the budget finite")

    if lam_lo is None:
        # budget never binds: U is flat where the mass would go
        z, b, dual = ev(lam_hi)
        zs = np.zeros(P.n)
        zs[pos_idx] = z
        return _finish(U, P, x0, w, a, c, p, k, np.arange(P.n), P.weights.copy(), zs,
                       lam_hi, dual, False, True)

    # Illinois iteration on (log multiplier, log budget); bisection when a side is infinite
    side = 0
    for it in range(max_bisect + 1):
        if lam_hi - lam_lo <= 1e-14 * lam_hi or min(abs(r_hi), abs(r_lo)) <= RESID_TOL:
            break
        if it == max_bisect:
            raise NumericalFailure(f"multiplier search did not converge in {max_bisect} steps")
        llo, lhi = math.log(lam_lo), math.log(lam_hi)
        if np.isfinite(r_lo) and np.isfinite(r_hi):
            m = lhi - r_hi * (lhi - llo) / (r_hi - r_lo)
            if not llo < m < lhi:
                m = 0.5 * (llo + lhi)
        else:
            m = 0.5 * (llo + lhi)
        lm = math.exp(m)
        if not lam_lo < lm < lam_hi:
            lm = 0.5 * (lam_lo + lam_hi)
            if not lam_lo < lm < lam_hi:
                break
        rm = lres(lm)
        if rm > 0:
            lam_lo, r_lo = lm, rm
            if side == -1 and np.isfinite(r_hi):
                r_hi *= 0.5
            side = -1
        else:
            lam_hi, r_hi = lm, rm
            if side == 1 and np.isfinite(r_lo):
                r_lo *= 0.5
            side = 1
    z_hi, b_hi, dual_hi = ev(lam_hi)
    z_lo, b_lo, dual_lo = ev(lam_lo)
    dual = max(dual_hi, dual_lo)

    n = P.n
    if abs(r_lo) < abs(r_hi) and abs(r_lo) <= RESID_TOL:
        z_hi, b_hi, lam_hi = z_lo, b_lo, lam_lo
    if abs(math.log(b_hi / kp)) > RESID_TOL and not np.all(np.isfinite(z_lo)):
        # the budget jumps to +inf at the multiplier: not attained
        sol = _far_split(U, P, x0, w, a, c, p, k, pos_idx, mu_pos, z_hi, b_hi, lam_hi, dual)
    elif abs(math.log(b_hi / kp)) <= RESID_TOL:
        zz = z_hi * (kp / b_hi) ** (1.0 / p) if b_hi > 0 else z_hi
        zs = np.zeros(n)
        zs[pos_idx] = zz
        sol = _finish(U, P, x0, w, a, c, p, k, np.arange(n), P.weights.copy(), zs,
                      lam_hi, dual, True, True)
    else:
        # move atoms from the small to the large minimiser, splitting the last one
        zs = z_hi.copy()
        budget = b_hi
        split = None
        for i in range(zs.size):
            extra = mu_pos[i] * (z_lo[i] ** p - z_hi[i] ** p)
            if extra <= 0:
                continue
            if budget + extra <= kp:
                zs[i] = z_lo[i]
                budget += extra
            else:
                split = (i, (kp - budget) / extra)
                break
        src = list(pos_idx)
        mass = list(mu_pos)
        zl = list(zs)
        if split is not None:
            i, t = split
            src.append(pos_idx[i])
            mass.append(t * mu_pos[i])
            zl.append(z_lo[i])
            mass[i] = (1 - t) * mu_pos[i]
        sol = _finish(U, P, x0, w, a, c, p, k, np.array(src), np.array(mass), np.array(zl),
                      lam_hi, dual, True, True)
    if check_gap and not abs(sol.gap) <= GAP_TOL * (1 + abs(sol.value)):
        raise DualityGapError(f"primal {sol.value!r} vs dual {sol.dual_value!r}")
    return sol


# ---------------------------------------------------------------------------
# independent validator

def inner_oracle(U: UtilityFn, spec: AmbiguitySpec, x0: float, w, grid: int = 400,
                 max_atoms: int = 6) -> float:
    """Brute-force worst-case value by dynamic programming over budget shares.

    Each atom's cost as a function of the transport budget it receives is
    convexified (splitting mass between two distances realises every chord),
    then the budget ``k^p`` is allocated on a uniform grid of ``grid`` cells by
    exhaustive min-plus convolution.
    """
    P, p, k = spec.baseline, spec.order_p, spec.radius_k
    if P.n > max_atoms:
        raise InvalidArgument(f"oracle refuses {P.n} atoms (limit {max_atoms})")
    w = np.asarray(w, dtype=float).ravel()
    a = scenario_wealth(x0, w, P)
    c = abs(x0) * float(np.linalg.norm(w))
    keep = P.weights > 0
    a, mu = a[keep], P.weights[keep]
    if c == 0:
        return float(np.dot(mu, U(a)))
    kp = k ** p
    budget = np.linspace(0.0, kp, grid + 1)
    tail = np.geomspace(kp, kp * 1e8, 4000)[1:]
    sample = np.concatenate([np.linspace(0.0, kp, 8 * grid + 1), tail])
    curves = []
    for ai, mi in zip(a, mu):
        f = mi * U(ai - c * (sample / mi) ** (1.0 / p))
        hx, hy = _lower_hull(sample, f)
        curves.append(np.interp(budget, hx, hy))
    best = curves[0]
    for cur in curves[1:]:
        # V(b) = min_{j<=b} best[b-j] + cur[j]
        m = best.size
        tab = np.full((m, m), np.inf)
        for j in range(m):
            tab[j, j:] = cur[j] + best[: m - j]
        best = tab.min(axis=0)
    return float(best.min())


def _lower_hull(x, y):
    """Lower convex hull (monotone chain) of points sorted by ``x``."""
    hx, hy = [], []
    for xi, yi in zip(x, y):
        while len(hx) >= 2:
            x1, y1, x2, y2 = hx[-2], hy[-2], hx[-1], hy[-1]
            if (y2 - y1) * (xi - x1) >= (yi - y1) * (x2 - x1):
                hx.pop()
                hy.pop()
            else:
                break
        hx.append(xi)
        hy.append(yi)
    return np.array(hx), np.array(hy)


def radial_check(U: UtilityFn, spec: AmbiguitySpec, x0: float, w, directions: int = 256,
                 sol: InnerSolution | None = None, tol: float = 1e-9) -> bool:
    """True if no per-atom choice of grid direction beats the radial worst case.

    The magnitudes are the solver's distances; since the objective separates
    across pieces, enumerating directions per piece covers all joint assignments.
    """
    P = spec.baseline
    if P.n > 4 or P.dim > 3:
        raise InvalidArgument("radial_check is limited to n <= 4 atoms and d <= 3")
    w = np.asarray(w, dtype=float).ravel()
    if sol is None:
        sol = inner_value(U, spec, x0, w)
    if np.linalg.norm(w) == 0:
        return True
    dirs = sphere_grid(P.dim, directions)
    a = scenario_wealth(x0, w, P)[sol.piece_source]
    moves = x0 * sol.piece_z[:, None] * (dirs @ w)[None, :]
    best_dir = np.min(U(a[:, None] + moves), axis=1)
    value_dirs = float(np.dot(sol.piece_mass, best_dir))
    return bool(value_dirs >= sol.value - tol * (1 + abs(sol.value)))


def reduce_1d(P: DiscreteMeasure, w) -> DiscreteMeasure:
    """Law of ``<w/|w|, X>`` under ``P``, with coincident projections merged."""
    w = np.asarray(w, dtype=float).ravel()
    wn = float(np.linalg.norm(w))
    if wn == 0:
        raise InvalidArgument("w must be non-zero")
    if w.size != P.dim:
        raise InvalidArgument("dimension mismatch")
    return DiscreteMeasure((P.atoms @ w / wn)[:, None], P.weights).merged()


def shift_upper_bound(U: UtilityFn, P: DiscreteMeasure, x0: float, w, k: float) -> float:
    """``U(x0 + |x0||w| E|X| - k |x0||w|)``, from shifting every atom by ``k`` against ``w``."""
    w = np.asarray(w, dtype=float).ravel()
    wn = float(np.linalg.norm(w))
    if wn == 0:
        raise InvalidArgument("w must be non-zero")
    mean_abs = P.expect(lambda x: np.linalg.norm(x, axis=1))
    return float(U(x0 + abs(x0) * wn * mean_abs - k * abs(x0) * wn))


def growth_lower_bound(U: UtilityFn, P: DiscreteMeasure, x0: float, w, k: float, p: float) -> float:
    """Lower bound on the worst case from the declared growth constants of ``U``.

    Returns ``-inf`` when the declared growth exponent exceeds ``p``.
    """
    w = np.asarray(w, dtype=float).ravel()
    if U.p_growth > p:
        return -math.inf
    # |x|^q <= 1 + |x|^p for q < p doubles the constant
    c1 = U.c1 if U.p_growth == p else 2 * U.c1
    c1p = c1 - float(U(-U.x_lower))
    cp = moment_cp(P, p)
    wn = float(np.linalg.norm(w))
    return -c1p - c1p * abs(x0) ** p * 2.0 ** (p - 1) * (1 + wn ** p * (cp + k) ** p)


@dataclass(frozen=True, eq=False)
class Witness:
    measure: DiscreteMeasure
    radius: float
    expectation: float
    reached: bool
    alpha: float
    point: np.ndarray


def divergence_witness(U: UtilityFn, spec: AmbiguitySpec, x0: float, w, target: float,
                       mode: str = "radius", max_iter: int = 200) -> Witness:
    """Dirac-mixture member of a ball whose expected utility drops below ``target``.

    ``mode="radius"`` grows the radius from ``spec.radius_k`` by doubling and
    places the extra atom at ``-k sign(x0) w/|w|^2``.  ``mode="tail"`` keeps the
    radius fixed and pushes the extra atom's wealth to ``-2^n``; it succeeds only
    when U falls faster than ``-|x|^p``.  When the target is never crossed the
    best witness found is returned with ``reached=False``.
    """
    P, p = spec.baseline, spec.order_p
    w = np.asarray(w, dtype=float).ravel()
    wn = float(np.linalg.norm(w))
    if wn == 0:
        raise InvalidArgument("w must be non-zero")
    base = float(np.dot(P.weights, U(scenario_wealth(x0, w, P))))
    if not np.isfinite(base):
        raise InvalidArgument("baseline expected utility is not finite")
    cp = moment_cp(P, p)
    best = None
    for n in range(max_iter):
        if mode == "radius":
            kk = spec.radius_k * 2.0 ** n
            x = -kk * math.copysign(1.0, x0) * w / wn ** 2
            alpha = kk ** p / (2 ** (p - 1) * ((kk / wn) ** p + cp ** p))
        elif mode == "tail":
            kk = spec.radius_k
            y = -(2.0 ** n)
            x = y * w / (wn ** 2 * x0) - w / wn ** 2
            alpha = kk ** p / (2 ** (p - 1) * (float(np.linalg.norm(x)) ** p + cp ** p))
        else:
            raise InvalidArgument(f"unknown witness mode {mode!r}")
        bound = (kk / (cp + float(np.linalg.norm(x)))) ** p
        alpha = min(alpha, 1.0, (1 - 1e-12) * bound)
        val = (1 - alpha) * base + alpha * float(U(x0 + x0 * float(x @ w)))
        if best is None or val < best[0]:
            best = (val, kk, alpha, x)
        if val < target:
            break
    val, kk, alpha, x = best
    atoms = np.vstack([P.atoms, x])
    weights = np.concatenate([(1 - alpha) * P.weights, [alpha]])
    Q = DiscreteMeasure(atoms, weights / weights.sum()).merged()
    return Witness(Q, kk, val, val < target, alpha, x)


def envelope_gradient(U: UtilityFn, spec: AmbiguitySpec, x0: float, w, sol: InnerSolution) -> np.ndarray:
    """Supergradient of ``w -> u(k, w)`` read off the worst-case pieces.

    At ``w = 0`` the minimum-norm supergradient is returned.
    """
    P = spec.baseline
    w = np.asarray(w, dtype=float).ravel()
    wn = float(np.linalg.norm(w))
    if wn == 0:
        m = P.weights @ P.atoms
        mn = float(np.linalg.norm(m))
        shrink = max(0.0, 1 - spec.radius_k / mn) if mn > 0 else 0.0
        return float(U.derivative(x0)) * x0 * m * shrink
    a = scenario_wealth(x0, w, P)[sol.piece_source]
    c = abs(x0) * wn
    slope = U.derivative(a - c * sol.piece_z) * sol.piece_mass
    xs = P.atoms[sol.piece_source]
    return x0 * (slope @ xs) - abs(x0) * float(np.dot(slope, sol.piece_z)) * w / wn
