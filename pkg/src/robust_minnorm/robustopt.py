"""Constraint sets and the outer maximisation ``w -> u(k, w)``."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import IllPosed, InvalidArgument, NotApplicable
from .market import AmbiguitySpec, beta_star, construct_pstar, moment_cp
from .utility import AEReport, UtilityFn
from .worstcase import InnerSolution, envelope_gradient, growth_lower_bound, inner_value

log = logging.getLogger(__name__)

MEMBER_TOL = 1e-9


# ---------------------------------------------------------------------------
# convex pieces: polyhedra {w : N w >= off} or single points

@dataclass(frozen=True, eq=False)
class _Poly:
    normals: np.ndarray
    offsets: np.ndarray

    def contains(self, w, tol=MEMBER_TOL) -> bool:
        return bool(np.all(self.normals @ w >= self.offsets - tol))

    def project(self, w) -> np.ndarray:
        N, off = self.normals, self.offsets
        h = off - N @ w
        if np.all(h <= 0):
            return w.copy()
        if N.shape[0] == 1:
            n = N[0]
            return w + h[0] / float(n @ n) * n
        # least-distance program  min |u|  s.t.  N u >= h  (Lawson-Hanson via NNLS)
        E = np.vstack([N.T, h[None, :]])
        f = np.zeros(E.shape[0])
        f[-1] = 1.0
        y, _ = nnls(E, f, maxiter=50 * E.shape[1])
        r = E @ y - f
        if abs(r[-1]) < 1e-14:
            raise InvalidArgument("polyhedron is empty")
        u = -r[:-1] / r[-1]
        v = w + u
        # clean up round-off on active constraints
        for _ in range(3):
            viol = off - N @ v
            j = int(np.argmax(viol))
            if viol[j] <= 0:
                break
            v = v + viol[j] / float(N[j] @ N[j]) * N[j]
        return v


@dataclass(frozen=True, eq=False)
class _Point:
    point: np.ndarray

    def contains(self, w, tol=MEMBER_TOL) -> bool:
        return bool(np.max(np.abs(w - self.point)) <= tol)

    def project(self, w) -> np.ndarray:
        return self.point.copy()


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Admissible portfolio weights, a finite union of closed convex pieces.

    kinds: ``halfspace`` {<w,1> >= a}; ``halfspace_nonneg`` the same intersected
    with w >= 0; ``two_sided`` {<w,1> >= a} u {<w,1> <= -a}; ``polyhedron``
    {<n_j, w> >= offset_j for all j}; ``singleton``; ``finite_list``.
    """

    kind: str
    dim: int
    a: float | None = None
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None
    points: np.ndarray | None = None
    pieces: tuple = field(default=(), repr=False)

    def __post_init__(self):
        d = int(self.dim)
        if d < 1:
            raise InvalidArgument("dimension must be positive")
        one = np.ones((1, d))
        k = self.kind
        if k in ("halfspace", "halfspace_nonneg", "two_sided"):
            if self.a is None or not np.isfinite(self.a):
                raise InvalidArgument(f"{k} needs a finite level a")
            a = float(self.a)
            if k == "halfspace":
                pieces = (_Poly(one, np.array([a])),)
            elif k == "halfspace_nonneg":
                pieces = (_Poly(np.vstack([one, np.eye(d)]), np.concatenate([[a], np.zeros(d)])),)
            else:
                pieces = (_Poly(one, np.array([a])), _Poly(-one, np.array([a])))
        elif k == "polyhedron":
            N = np.atleast_2d(np.asarray(self.normals, dtype=float))
            off = np.asarray(self.offsets, dtype=float).ravel()
            if N.shape != (off.size, d):
                raise InvalidArgument("normals must be (m, d) with one offset per row")
            pieces = (_Poly(N, off),)
        elif k in ("singleton", "finite_list"):
            pts = np.atleast_2d(np.asarray(self.points, dtype=float))
            if pts.shape[1] != d or pts.shape[0] == 0:
                raise InvalidArgument("points must be a non-empty (m, d) array")
            if k == "singleton" and pts.shape[0] != 1:
                raise InvalidArgument("singleton takes exactly one point")
            pieces = tuple(_Point(p.copy()) for p in pts)
        else:
            raise InvalidArgument(f"unknown constraint kind {k!r}")
        for pc in pieces:
            if isinstance(pc, _Poly):
                _certify_nonempty(pc)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def halfspace(cls, a, dim):
        return cls("halfspace", dim, a=a)

    @classmethod
    def halfspace_nonneg(cls, a, dim):
        return cls("halfspace_nonneg", dim, a=a)

    @classmethod
    def two_sided(cls, a, dim):
        return cls("two_sided", dim, a=a)

    @classmethod
    def polyhedron(cls, normals, offsets):
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        return cls("polyhedron", normals.shape[1], normals=normals, offsets=offsets)

    @classmethod
    def singleton(cls, w0):
        w0 = np.asarray(w0, dtype=float).ravel()
        return cls("singleton", w0.size, points=w0[None, :])

    @classmethod
    def finite_list(cls, candidates):
        pts = np.atleast_2d(np.asarray(candidates, dtype=float))
        return cls("finite_list", pts.shape[1], points=pts)

    def contains(self, w, tol: float = MEMBER_TOL) -> bool:
        w = self._vec(w)
        return any(pc.contains(w, tol) for pc in self.pieces)

    def _vec(self, w):
        w = np.asarray(w, dtype=float).ravel()
        if w.size != self.dim:
            raise InvalidArgument(f"expected a vector of dimension {self.dim}")
        return w

    def project_pieces(self, w) -> list:
        """Projection of ``w`` onto every convex piece."""
        w = self._vec(w)
        return [pc.project(w) for pc in self.pieces]

    def to_json(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.a is not None:
            out["a"] = float(self.a)
        if self.kind == "polyhedron":
            out["normals"] = np.asarray(self.normals).tolist()
            out["offsets"] = np.asarray(self.offsets).tolist()
        if self.points is not None:
            out["points"] = np.asarray(self.points).tolist()
        return out


def _certify_nonempty(pc: _Poly):
    d = pc.normals.shape[1]
    res = linprog(np.zeros(d), A_ub=-pc.normals, b_ub=-pc.offsets,
                  bounds=[(None, None)] * d, method="highs")
    if res.status != 0:
        raise InvalidArgument("constraint piece is empty")


def _lex_key(w):
    return tuple(np.round(w, 12))


def project(D: ConstraintSet, w) -> np.ndarray:
    """Euclidean projection onto ``D``; for unions the nearest piece wins (ties: lexicographic)."""
    w = D._vec(w)
    cands = D.project_pieces(w)
    return min(cands, key=lambda v: (round(float(np.linalg.norm(v - w)), 12), _lex_key(v)))


def min_norm_points(D: ConstraintSet) -> np.ndarray:
    """All points of ``D`` of smallest Euclidean norm, as rows sorted lexicographically."""
    zero = np.zeros(D.dim)
    if D.contains(zero):
        return zero[None, :]
    cands = D.project_pieces(zero)
    norms = np.array([np.linalg.norm(v) for v in cands])
    best = norms.min()
    out = []
    for v, nv in zip(cands, norms):
        if nv <= best * (1 + 1e-12) and not any(np.allclose(v, u, atol=1e-12) for u in out):
            out.append(v)
    out.sort(key=_lex_key)
    return np.array(out)


def dist_to_set(w, points) -> float:
    w = np.asarray(w, dtype=float).ravel()
    return float(np.min(np.linalg.norm(np.atleast_2d(points) - w, axis=1)))


# ---------------------------------------------------------------------------
# a-priori bound on optimal weights

@dataclass(frozen=True)
class KBound:
    K: float
    K0: float
    K1: float
    eta: float
    x_star: float
    L_star: float
    sup_minus: float
    beta: float


def l_star(U: UtilityFn, spec: AmbiguitySpec) -> float:
    """Positive-part utility of ``1 + |X|`` under the full-support mixture."""
    P, p, k = spec.baseline, spec.order_p, spec.radius_k
    alpha = min((k / (2 * (moment_cp(P, p) + 1))) ** p, 1.0)
    up = lambda x: np.maximum(U(x), 0.0)
    return float((1 - alpha) * P.expect(lambda x: up(1 + np.linalg.norm(x, axis=1)))
                 + alpha * up(2.0))


def sup_minus_bound(U: UtilityFn, spec: AmbiguitySpec, x0: float, w) -> float:
    """Upper bound on the worst-case expected negative part of utility at ``w``."""
    return -growth_lower_bound(U, spec.baseline, x0, w, spec.radius_k, spec.order_p)


def _x_star(U: UtilityFn, x_lower: float, C: float) -> float:
    """Smallest ``x = lam * x_lower`` (lam >= 1, to bisection precision) with ``U(-x) <= -(1 + C)``."""
    target = -(1.0 + C)
    lo, hi = 0.0, 1.0
    while U(-hi * x_lower) > target:
        lo, hi = hi, hi * 2
        if hi > 1e300:
            raise NotApplicable("utility never falls below -(1 + C)")
    if lo == 0.0:
        return x_lower
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if U(-mid * x_lower) <= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi * x_lower


def weight_bound_K(U_meta: AEReport, x0: float, w_star, beta: float, L_star: float,
                   sup_minus: float, U: UtilityFn) -> KBound:
    """Radius beyond which no weight can beat ``w_star``.

    ``U_meta`` carries the certified scaling exponents and constant; ``U`` is
    needed to locate the level ``x*`` where the utility drops below ``-(1 + C)``.
    """
    if U_meta.case_tag not in ("rae_minus", "rae_plus"):
        raise NotApplicable(f"weight bound formula needs an RAE utility, got {U_meta.case_tag}")
    if not (0 < beta <= 1):
        raise InvalidArgument("beta must lie in (0, 1]")
    if x0 == 0:
        raise InvalidArgument("x0 must be non-zero")
    g_lo, g_hi, C = U_meta.gamma_lower, U_meta.gamma_upper, U_meta.envelope_c
    if not (np.isfinite(C) and g_lo < g_hi):
        raise NotApplicable("scaling envelope is not certified")
    eta = (g_lo / g_hi + 1) / 2
    xs = _x_star(U, U_meta.x_lower, C)
    ax = abs(x0)
    K0 = max(1.0, 1 / ax ** (1 / eta), (1 / beta) * (1 + xs / ax), ((1 + xs) / beta) ** (1 / (1 - eta)))
    K1 = max((2 * (L_star + C) / (beta * ax ** (g_hi - g_lo))) ** (1 / (eta * g_hi - g_lo)),
             (2 * max(sup_minus, 0.0) / (beta * ax ** g_hi)) ** (1 / (eta * g_hi)))
    K = max(K0, K1, float(np.linalg.norm(w_star)))
    log.debug("weight bound: eta=%g x*=%g K0=%g K1=%g |w*|=%g -> K=%g",
              eta, xs, K0, K1, np.linalg.norm(w_star), K)
    return KBound(K, K0, K1, eta, xs, L_star, sup_minus, beta)


def formula_bound(U: UtilityFn, meta: AEReport, spec: AmbiguitySpec, x0: float, D: ConstraintSet) -> KBound:
    """Weight bound with ``w*`` the first minimal-norm point of ``D``."""
    w_star = min_norm_points(D)[0]
    beta = beta_star(construct_pstar(spec))
    if beta <= 0:
        raise NotApplicable("no positive no-arbitrage constant on the grid")
    return weight_bound_K(meta, x0, w_star, beta, l_star(U, spec),
                          sup_minus_bound(U, spec, x0, w_star), U)


# ---------------------------------------------------------------------------
# outer maximisation

@dataclass(frozen=True, eq=False)
class OuterSolution:
    w_k: np.ndarray
    value: float
    iterations: int
    piece_tag: str
    k_bound_used: float
    certified: bool = True
    certificate_gap: float = 0.0
    grad_norm: float = 0.0
    inner: InnerSolution | None = None


def _ball_clip(v, K):
    nv = float(np.linalg.norm(v))
    return v if nv <= K else v * (K / nv)


def _project_box(pc, v, K):
    """Projection onto piece intersected with the ball ``|w| <= K`` (Dykstra)."""
    x = pc.project(v)
    if np.linalg.norm(x) <= K:
        return x
    p_ = np.zeros_like(v)
    q_ = np.zeros_like(v)
    y = v.copy()
    for _ in range(200):
        x = pc.project(y + p_)
        p_ = y + p_ - x
        y_new = _ball_clip(x + q_, K)
        q_ = x + q_ - y_new
        if np.linalg.norm(y_new - y) < 1e-13 * (1 + K):
            y = y_new
            break
        y = y_new
    return pc.project(y) if pc.contains(y) is False else y


class _Objective:
    def __init__(self, U, spec, x0):
        self.U, self.spec, self.x0 = U, spec, x0
        self.lam = None
        self.calls = 0

    def __call__(self, w):
        self.calls += 1
        sol = inner_value(self.U, self.spec, self.x0, w, lam_start=self.lam)
        if sol.dual_lambda > 0:
            self.lam = sol.dual_lambda
        return sol

    def grad(self, w, sol):
        return envelope_gradient(self.U, self.spec, self.x0, w, sol)


def _ascend(obj, pc, w0, K, eta0, max_iter, gtol):
    """Projected supergradient ascent with an adaptive step on one convex piece."""
    w = _project_box(pc, w0, K)
    sol = obj(w)
    g = obj.grad(w, sol)
    step = eta0
    it = 0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(_project_box(pc, w + eta0 * g, K) - w)) / eta0
        if gnorm < gtol:
            break
        cand = _project_box(pc, w + step * g, K)
        if np.allclose(cand, w, rtol=0, atol=1e-15):
            break
        csol = obj(cand)
        if csol.value > sol.value:
            w, sol = cand, csol
            g = obj.grad(w, sol)
            step *= 1.5
        else:
            step *= 0.5
            if step * float(np.linalg.norm(g)) < 1e-14 * (1 + float(np.linalg.norm(w))):
                break
    return w, sol, it, gnorm


def _local_certificate(obj, pc, w, value, K, radii=(1e-3, 1e-4)):
    """Largest improvement found on a small projected grid around ``w``."""
    d = w.size
    best = -math.inf
    for h in radii:
        for i in range(d):
            for s in (-1.0, 1.0):
                v = w.copy()
                v[i] += s * h
                v = _project_box(pc, v, K)
                best = max(best, obj(v).value)
    return best - value


def maximize(U: UtilityFn, spec: AmbiguitySpec, x0: float, D: ConstraintSet, *,
             k_bound: float | None = None, meta: AEReport | None = None,
             w_start=None, eta0: float | None = None, max_iter: int = 5000,
             gtol: float = 1e-6, certify: bool = True, cert_tol: float = 1e-5) -> OuterSolution:
    """``argmax_{w in D} u(k, w)``, piece by piece.

    The search box ``|w| <= K`` comes from ``k_bound`` if given, else from the
    weight bound formula when ``meta`` certifies it, else from a doubling search
    that stops once the maximiser is strictly inside the box.
    """
    if D.dim != spec.baseline.dim:
        raise InvalidArgument("constraint and market dimensions differ")
    if x0 == 0:
        raise InvalidArgument("x0 must be non-zero")
    if eta0 is None:
        eta0 = 1.0 / (1.0 + abs(x0) * moment_cp(spec.baseline, spec.order_p))
    obj = _Objective(U, spec, x0)

    doubling = False
    if k_bound is None and meta is not None:
        try:
            k_bound = formula_bound(U, meta, spec, x0, D).K
        except NotApplicable:
            k_bound = None
    if k_bound is None:
        doubling = True
        k_bound = float(np.linalg.norm(min_norm_points(D)[0])) + 1.0
        if w_start is not None:
            k_bound = max(k_bound, float(np.linalg.norm(w_start)) + 1.0)

    results = []
    for idx, pc in enumerate(D.pieces):
        tag = f"{D.kind}[{idx}]"
        if isinstance(pc, _Point):
            sol = obj(pc.point)
            results.append((sol.value, pc.point.copy(), sol, 0, 0.0, tag, pc))
            continue
        start = pc.project(np.zeros(D.dim) if w_start is None else np.asarray(w_start, float))
        K = k_bound
        total = 0
        while True:
            w, sol, its, gnorm = _ascend(obj, pc, start, K, eta0, max_iter, gtol)
            total += its
            if not doubling or np.linalg.norm(w) < K * (1 - 1e-9) - 1e-6:
                break
            if K > 1e12:
                raise IllPosed("optimal weights escape every search box")
            start, K = w, 2 * K
        results.append((sol.value, w, sol, total, gnorm, tag, pc, K))

    tol = 1e-9
    best_val = max(r[0] for r in results)
    tied = [r for r in results if r[0] >= best_val - tol * (1 + abs(best_val))]
    best = min(tied, key=lambda r: _lex_key(r[1]))
    value, w, sol, its, gnorm, tag, pc = best[:7]
    K_used = best[7] if len(best) > 7 else k_bound
    K_used = max(K_used, float(np.linalg.norm(w)))
    gap = 0.0
    certified = True
    if certify and isinstance(pc, _Poly):
        gap = _local_certificate(obj, pc, w, value, K_used)
        certified = gap <= cert_tol
    return OuterSolution(w, value, its, tag, K_used, certified, max(gap, 0.0), gnorm, sol)
