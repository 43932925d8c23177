"""Discrete return measures, Wasserstein distances and ball constructions."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .errors import BallViolation, DegenerateSupport, InvalidArgument
from .transport import quantile_cost, transport_plan

MERGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in R^d.  ``atoms`` has shape ``(n, d)``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.array(self.weights, dtype=float).ravel()
        if atoms.ndim != 2 or atoms.shape[0] == 0 or atoms.shape[1] == 0:
            raise InvalidArgument("atoms must be a non-empty (n, d) array")
        if weights.size != atoms.shape[0]:
            raise InvalidArgument("one weight per atom is required")
        if not np.all(np.isfinite(atoms)):
            raise InvalidArgument("atoms must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidArgument("weights must be non-negative and sum to 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        atoms = np.asarray(atoms, dtype=float)
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    @classmethod
    def dirac(cls, x) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(x, dtype=float)), [1.0])

    def expect(self, f) -> float:
        """``E[f(X)]`` for a vectorised ``f`` acting on the ``(n, d)`` atom array."""
        return float(np.dot(self.weights, f(self.atoms)))

    def support(self) -> np.ndarray:
        return self.atoms[self.weights > 0]

    def merged(self, tol: float = MERGE_TOL) -> "DiscreteMeasure":
        """Merge atoms closer than ``tol`` (sup-norm), keeping first-seen order."""
        keep, wts = [], []
        for x, w in zip(self.atoms, self.weights):
            for k, y in enumerate(keep):
                if np.max(np.abs(x - y)) <= tol:
                    wts[k] += w
                    break
            else:
                keep.append(x)
                wts.append(w)
        wts = np.array(wts)
        return DiscreteMeasure(np.array(keep), wts / wts.sum())

    def to_json(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, obj) -> "DiscreteMeasure":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        return cls(obj["atoms"], obj["weights"])


@dataclass(frozen=True)
class AmbiguitySpec:
    baseline: DiscreteMeasure
    order_p: float
    radius_k: float

    def __post_init__(self):
        if not self.order_p >= 1:
            raise InvalidArgument("transport order p must be >= 1")
        if not self.radius_k > 0:
            raise InvalidArgument("radius k must be positive")

    def with_radius(self, k: float) -> "AmbiguitySpec":
        return AmbiguitySpec(self.baseline, self.order_p, k)


def read_returns_csv(path, weights=None) -> DiscreteMeasure:
    """One return vector per row; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            row = [c.strip() for c in row if c.strip()]
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if k == 0 and not rows:
                    continue
                raise InvalidArgument(f"{path}: non-numeric entry in row {k + 1}")
    if not rows:
        raise InvalidArgument(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise InvalidArgument(f"{path}: ragged rows")
    atoms = np.array(rows)
    if weights is None:
        return DiscreteMeasure.uniform(atoms)
    return DiscreteMeasure(atoms, weights)


def write_measure_json(measure: DiscreteMeasure, path) -> None:
    Path(path).write_text(json.dumps(measure.to_json()))


def moment_cp(P: DiscreteMeasure, p: float) -> float:
    """``(E_P |X|^p)^(1/p)``."""
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    return P.expect(lambda x: np.linalg.norm(x, axis=1) ** p) ** (1.0 / p)


def wasserstein_discrete(P: DiscreteMeasure, Q: DiscreteMeasure, p: float, method: str = "auto") -> float:
    """Exact ``W_p`` between two discrete measures.

    ``method``: ``"lp"`` (transport simplex), ``"quantile"`` (d = 1 only) or
    ``"auto"`` (quantile when d = 1).
    """
    if P.dim != Q.dim:
        raise InvalidArgument(f"dimension mismatch: {P.dim} vs {Q.dim}")
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    if method == "quantile" or (method == "auto" and P.dim == 1):
        if P.dim != 1:
            raise InvalidArgument("quantile coupling needs d = 1")
        cost = quantile_cost(P.atoms[:, 0], P.weights, Q.atoms[:, 0], Q.weights, p)
    else:
        diff = P.atoms[:, None, :] - Q.atoms[None, :, :]
        _, cost = transport_plan(P.weights, Q.weights, np.linalg.norm(diff, axis=2) ** p)
    return max(cost, 0.0) ** (1.0 / p)


def in_ball(Q: DiscreteMeasure, spec: AmbiguitySpec, tol: float = 1e-9) -> bool:
    return wasserstein_discrete(Q, spec.baseline, spec.order_p) <= spec.radius_k + tol


def mixture_alpha_bound(P: DiscreteMeasure, x_tilde, spec: AmbiguitySpec) -> float:
    """Open upper end of the admissible Dirac-mixture weight range."""
    c_p = moment_cp(P, spec.order_p)
    denom = c_p + float(np.linalg.norm(x_tilde))
    return math.inf if denom == 0 else (spec.radius_k / denom) ** spec.order_p


def dirac_mixture(P: DiscreteMeasure, x_tilde, alpha: float, spec: AmbiguitySpec) -> DiscreteMeasure:
    """``(1 - alpha) P + alpha * delta_{x_tilde}``, guaranteed inside ``B_k(P)``."""
    x_tilde = np.asarray(x_tilde, dtype=float).ravel()
    if x_tilde.size != P.dim:
        raise InvalidArgument("x_tilde has the wrong dimension")
    bound = mixture_alpha_bound(P, x_tilde, spec)
    if not (0 <= alpha < bound and alpha <= 1):
        raise BallViolation(f"alpha={alpha} outside [0, {min(bound, 1.0)})")
    if alpha == 0:
        return P
    atoms = np.vstack([P.atoms, x_tilde])
    weights = np.concatenate([(1 - alpha) * P.weights, [alpha]])
    return DiscreteMeasure(atoms, weights / weights.sum()).merged()


def construct_pstar(spec: AmbiguitySpec) -> DiscreteMeasure:
    """Average of the Dirac mixtures at ``+-e_i`` with weight ``(k / (2 (C_P + 1)))^p``.

    The weight is capped at 1; a full move onto ``+-e_i`` is still inside the
    ball whenever the formula exceeds 1.  Zero-weight atoms are retained.
    """
    P, p, k = spec.baseline, spec.order_p, spec.radius_k
    d = P.dim
    alpha = min((k / (2 * (moment_cp(P, p) + 1))) ** p, 1.0)
    atoms = [P.atoms]
    weights = [(1 - alpha) * P.weights]
    eye = np.eye(d)
    for i in range(d):
        for s in (-1.0, 1.0):
            atoms.append(s * eye[i][None, :])
            weights.append(np.array([alpha / (2 * d)]))
    w = np.concatenate(weights)
    return DiscreteMeasure(np.vstack(atoms), w / w.sum()).merged()


def shift_measure(P: DiscreteMeasure, v) -> DiscreteMeasure:
    v = np.asarray(v, dtype=float).ravel()
    if v.size != P.dim:
        raise InvalidArgument("shift vector has the wrong dimension")
    return DiscreteMeasure(P.atoms + v, P.weights)


def sphere_grid(d: int, size: int = 1024) -> np.ndarray:
    """Deterministic unit directions: exact for d = 1, equispaced circle for d = 2,
    Fibonacci lattice for d = 3 and seeded Gaussian directions above; the
    coordinate directions ``+-e_i`` are always included."""
    if d == 1:
        return np.array([[-1.0], [1.0]])
    if d == 2:
        t = 2 * np.pi * np.arange(size) / size
        dirs = np.column_stack([np.cos(t), np.sin(t)])
    elif d == 3:
        i = np.arange(size) + 0.5
        z = 1 - 2 * i / size
        r = np.sqrt(1 - z ** 2)
        phi = np.pi * (3 - math.sqrt(5)) * i
        dirs = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        g = np.random.default_rng(0).standard_normal((size, d))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    eye = np.eye(d)
    return np.vstack([dirs, eye, -eye])


def _check_full_rank(P: DiscreteMeasure):
    supp = P.support()
    centered = supp - supp.mean(axis=0)
    if supp.shape[0] < 2 or np.linalg.matrix_rank(centered, tol=1e-10) < P.dim:
        raise DegenerateSupport("support does not span an affine space of full dimension")


def beta_star(Pstar: DiscreteMeasure, sphere_size: int = 1024, n_max: int = 4096) -> float:
    """Grid lower bound for the quantitative no-arbitrage constant.

    Returns the largest ``1/n`` (``n <= n_max``) such that every grid direction
    ``w`` puts mass at least ``1/n`` on ``{<w, X> < -1/n}``.  Returns 0 with a
    warning when no grid value qualifies.
    """
    _check_full_rank(Pstar)
    dirs = sphere_grid(Pstar.dim, sphere_size)
    proj = Pstar.atoms @ dirs.T  # (n_atoms, n_dirs)
    wts = Pstar.weights
    for n in range(1, n_max + 1):
        beta = 1.0 / n
        mass = wts @ (proj < -beta)
        if mass.min() >= beta:
            return beta
    warnings.warn("no quantitative no-arbitrage constant found on the grid; reporting 0",
                  RuntimeWarning, stacklevel=2)
    return 0.0


def arbitrage_direction(P: DiscreteMeasure, tol: float = 1e-9):
    """A direction ``w`` with ``<w, x_i> >= 0`` on the support and ``> 0`` somewhere, or None."""
    X = P.support()
    n, d = X.shape
    # variables (w, s); maximise sum s  s.t.  s_i <= <w, x_i>,  0 <= s_i <= 1,  |w|_inf <= 1
    c = np.concatenate([np.zeros(d), -np.ones(n)])
    A = np.hstack([-X, np.eye(n)])
    bounds = [(-1, 1)] * d + [(0, 1)] * n
    res = linprog(c, A_ub=A, b_ub=np.zeros(n), bounds=bounds, method="highs")
    if res.status != 0 or -res.fun <= tol:
        return None
    w = res.x[:d]
    if np.any(X @ w < -tol):
        return None
    return w


def na_check(P: DiscreteMeasure) -> bool:
    """True iff no arbitrage holds under ``P``."""
    return arbitrage_direction(P) is None
