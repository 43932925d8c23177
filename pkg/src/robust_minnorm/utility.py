"""Concave non-decreasing utilities on the whole real line.

Every utility is stored as a list of closed-form pieces.  Piece ``i`` covers
``(breaks[i-1], breaks[i]]`` so that a point sitting on a breakpoint is
evaluated by the piece to its left (left derivative convention).

Atom formulas (coefficients in order):

* ``affine``  ``(c0, c1)``          ``c0 + c1 * x``
* ``log``     ``(c0, c1, s)``       ``c0 + c1 * log(x + s)``
* ``power``   ``(c0, c1, s, e)``    ``c0 + c1 * (s - x) ** e``
* ``exp``     ``(c0, c1, r)``       ``c0 + c1 * exp(r * x)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateProbe, InconsistentMetadata, InvalidArgument, NotApplicable

ATOM_ARITY = {"affine": 2, "log": 3, "power": 4, "exp": 3}


@dataclass(frozen=True)
class Piece:
    upper: float  # right end of the piece, +inf for the last one
    atom: str
    coef: tuple

    def value(self, x):
        if self.atom == "affine":
            c0, c1 = self.coef
            return c0 + c1 * x
        if self.atom == "log":
            c0, c1, s = self.coef
            return c0 + c1 * np.log(x + s)
        if self.atom == "power":
            c0, c1, s, e = self.coef
            return c0 + c1 * (s - x) ** e
        c0, c1, r = self.coef
        return c0 + c1 * np.exp(r * x)

    def slope(self, x):
        if self.atom == "affine":
            return np.full_like(x, self.coef[1], dtype=float)
        if self.atom == "log":
            _, c1, s = self.coef
            return c1 / (x + s)
        if self.atom == "power":
            _, c1, s, e = self.coef
            return -c1 * e * (s - x) ** (e - 1.0)
        _, c1, r = self.coef
        return c1 * r * np.exp(r * x)


@dataclass(frozen=True)
class UtilityFn:
    """A piecewise closed-form utility plus its growth metadata.

    ``p_growth``, ``c1`` and ``x_lower`` are the constants of the lower growth
    bound ``U(x) >= -c1 (1 + |x|^p_growth)`` for ``x <= -x_lower``; they are
    user-declared and only certified on grids by :func:`check_admissibility`.
    """

    kind: str
    pieces: tuple
    p_growth: float
    c1: float
    x_lower: float
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.pieces:
            raise InvalidArgument("utility needs at least one piece")
        if not math.isinf(self.pieces[-1].upper):
            raise InvalidArgument("last piece must extend to +inf")
        if self.p_growth < 1:
            raise InvalidArgument("p_growth must be >= 1")
        if self.c1 <= 0 or self.x_lower <= 0:
            raise InvalidArgument("c1 and x_lower must be positive")
        lower = -math.inf
        for pc in self.pieces:
            if pc.atom not in ATOM_ARITY or len(pc.coef) != ATOM_ARITY[pc.atom]:
                raise InvalidArgument(f"bad atom {pc.atom!r} with coefficients {pc.coef}")
            if pc.upper <= lower:
                raise InvalidArgument("breakpoints must be strictly increasing")
            # domain must be all of R: reject half-line atoms
            if pc.atom == "log" and not lower > -pc.coef[2]:
                raise InvalidArgument("log piece is undefined on part of its interval")
            if pc.atom == "power" and not pc.upper <= pc.coef[2]:
                raise InvalidArgument("power piece is undefined on part of its interval")
            lower = pc.upper
        for left, right in zip(self.pieces[:-1], self.pieces[1:]):
            b = left.upper
            vl, vr = float(left.value(np.float64(b))), float(right.value(np.float64(b)))
            if not abs(vl - vr) <= 1e-9 * (1 + abs(vl)):
                raise InvalidArgument(f"utility is discontinuous at {b}: {vl} vs {vr}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def bounded_exp_power(cls, p: float = 2.0, p_growth: float | None = None,
                          c1: float | None = None, x_lower: float = 1.0) -> "UtilityFn":
        if p < 1:
            raise InvalidArgument("p must be >= 1")
        pieces = (Piece(0.0, "power", (1.0 / p, -1.0 / p, 1.0, float(p))),
                  Piece(math.inf, "exp", (1.0, -1.0, -1.0)))
        return cls("bounded_exp_power", pieces, float(p if p_growth is None else p_growth),
                   2.0 ** (p - 1) / p if c1 is None else c1, x_lower, {"p": p})

    @classmethod
    def log_linear(cls, p_growth: float = 1.0, c1: float = 1.0, x_lower: float = 1.0) -> "UtilityFn":
        pieces = (Piece(1.0, "affine", (-1.0, 1.0)), Piece(math.inf, "log", (0.0, 1.0, 0.0)))
        return cls("log_linear", pieces, float(p_growth), c1, x_lower, {})

    @classmethod
    def linear_power(cls, q: float = 2.0, p_growth: float | None = None,
                     c1: float | None = None, x_lower: float = 1.0) -> "UtilityFn":
        if q < 1:
            raise InvalidArgument("q must be >= 1")
        pieces = (Piece(0.0, "power", (1.0 / q, -1.0 / q, 1.0, float(q))),
                  Piece(math.inf, "affine", (0.0, 1.0)))
        return cls("linear_power", pieces, float(q if p_growth is None else p_growth),
                   2.0 ** (q - 1) / q if c1 is None else c1, x_lower, {"q": q})

    @classmethod
    def custom(cls, pieces: Sequence, p_growth: float, c1: float, x_lower: float) -> "UtilityFn":
        """``pieces``: sequence of ``(upper_breakpoint, atom_name, coefficients)``."""
        built = tuple(Piece(float(b), str(a), tuple(float(c) for c in coef)) for b, a, coef in pieces)
        return cls("custom_piecewise", built, float(p_growth), float(c1), float(x_lower), {})

    # -- evaluation -------------------------------------------------------
    def _dispatch(self, x, method):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xa = np.atleast_1d(x)
        out = np.empty_like(xa)
        if len(self.pieces) == 1:
            with np.errstate(over="ignore", invalid="ignore"):
                out[:] = getattr(self.pieces[0], method)(xa)
        else:
            breaks = np.array([pc.upper for pc in self.pieces[:-1]])
            idx = np.searchsorted(breaks, xa, side="left")
            with np.errstate(over="ignore", invalid="ignore"):
                for i, pc in enumerate(self.pieces):
                    m = idx == i
                    if m.any():
                        out[m] = getattr(pc, method)(xa[m])
        return float(out[0]) if scalar else out

    def __call__(self, x):
        return self._dispatch(x, "value")

    def derivative(self, x):
        return self._dispatch(x, "slope")

    def tail_slope(self, horizon: float = 1e6) -> float:
        """Left-tail slope estimate ``U'(-horizon)`` (sup of U' for concave U)."""
        return float(self.derivative(-horizon))

    def is_strictly_increasing(self) -> bool:
        g = GridSpec().points()
        d = self.derivative(g)
        return bool(np.all(d[np.isfinite(d)] > 0))


def _check_finite(x):
    if not np.all(np.isfinite(np.asarray(x, dtype=float))):
        raise InvalidArgument("utility argument must be finite")


def eval_utility(u: UtilityFn, x):
    _check_finite(x)
    return u(x)


def eval_derivative(u: UtilityFn, x):
    _check_finite(x)
    return u.derivative(x)


# ---------------------------------------------------------------------------
# grid diagnostics

@dataclass(frozen=True)
class GridSpec:
    """Symmetric log-spaced probe grid on ``[-x_max, x_max]``."""

    x_max: float = 1e6
    n: int = 2048
    x_min: float = 1e-3

    def points(self) -> np.ndarray:
        half = np.logspace(math.log10(self.x_min), math.log10(self.x_max), self.n // 2)
        return np.concatenate([-half[::-1], [0.0], half])


@dataclass
class AdmissibilityReport:
    passed: bool
    checks: dict
    first_violation: tuple | None  # (check_name, x)
    violations: list


def check_admissibility(u: UtilityFn, probe: GridSpec = GridSpec(), tol: float = 1e-10) -> AdmissibilityReport:
    """Grid certification of monotonicity, concavity and the lower growth bound.

    Violations are listed in order of increasing ``|x|``.
    """
    if probe.x_max < 10 * u.x_lower:
        raise InvalidArgument("probe grid must reach at least 10 * x_lower")
    x = probe.points()
    v = u(x)
    violations = []

    finite = np.isfinite(v)
    for xi in x[~finite]:
        violations.append(("finite", float(xi)))

    with np.errstate(invalid="ignore"):
        dv = np.diff(v)
        bad = ~(dv >= -tol * (1 + np.abs(v[:-1])))
    for j in np.flatnonzero(bad):
        violations.append(("monotone", float(x[j + 1])))

    with np.errstate(invalid="ignore", over="ignore"):
        slopes = dv / np.diff(x)
        ds = np.diff(slopes)
        bad = ~(ds <= tol * (1 + np.abs(slopes[:-1])))
    for j in np.flatnonzero(bad):
        violations.append(("concave", float(x[j + 1])))

    neg_ok = u(-u.x_lower) < 0
    if not neg_ok:
        violations.append(("negative_at_x_lower", -u.x_lower))

    tail = x <= -u.x_lower
    bound = -u.c1 * (1 + np.abs(x[tail]) ** u.p_growth)
    with np.errstate(invalid="ignore"):
        bad = ~(v[tail] >= bound - tol * (1 + np.abs(bound)))
    for xi in x[tail][bad]:
        violations.append(("growth", float(xi)))

    violations.sort(key=lambda t: abs(t[1]))
    names = ("finite", "monotone", "concave", "negative_at_x_lower", "growth")
    checks = {n: not any(t[0] == n for t in violations) for n in names}
    return AdmissibilityReport(not violations, checks, violations[0] if violations else None, violations)


def fit_growth_constants(u: UtilityFn, p: float, probe: GridSpec = GridSpec()) -> tuple[float, float]:
    """Suggest ``(c1, x_lower)`` for a growth exponent ``p`` from a probe grid.

    Only a suggestion: user-declared metadata is never replaced.
    """
    x = probe.points()
    v = u(x)
    neg = x[(x < 0) & (v < 0)]
    if neg.size == 0:
        raise InconsistentMetadata("utility is never negative on the probe grid")
    x_lower = float(-neg.max())
    tail = x <= -x_lower
    ratio = -v[tail] / (1 + np.abs(x[tail]) ** p)
    if not np.all(np.isfinite(ratio)):
        raise InconsistentMetadata("utility is not finite on the probe grid")
    return float(max(ratio.max(), 0.0) * 1.01 + 1e-12), x_lower


# ---------------------------------------------------------------------------
# asymptotic elasticity

DEFAULT_AE_PROBES = np.logspace(1, 100, 100)


@dataclass
class AEEstimate:
    value: float
    stable: bool
    ratios: np.ndarray


def estimate_ae(u: UtilityFn, side: str, probes=DEFAULT_AE_PROBES) -> AEEstimate:
    """Last-probe value of ``x U'(x) / U(x)`` towards ``side`` (``'+'`` or ``'-'``).

    ``stable`` is True when the final three ratios oscillate by less than 1e-3.
    """
    probes = np.asarray(probes, dtype=float)
    if probes.ndim != 1 or probes.size < 3 or np.any(np.diff(probes) <= 0) or probes[0] <= 0:
        raise InvalidArgument("probes must be an increasing sequence of at least 3 positive values")
    if side in ("+", "+inf", "plus"):
        x = probes
    elif side in ("-", "-inf", "minus"):
        x = -probes
    else:
        raise InvalidArgument(f"unknown side {side!r}")
    v = u(x)
    if np.any(v == 0):
        raise DegenerateProbe(f"utility vanishes at probe {float(x[np.argmax(v == 0)])}")
    with np.errstate(over="ignore", invalid="ignore"):
        r = x * u.derivative(x) / v
    tail = r[-3:]
    stable = bool(np.all(np.isfinite(tail)) and tail.max() - tail.min() < 1e-3)
    return AEEstimate(float(r[-1]), stable, r)


@dataclass
class AEReport:
    ae_plus: float
    ae_minus: float
    case_tag: str  # bounded_above | rae_minus | rae_plus | inadmissible
    gamma_lower: float
    gamma_upper: float
    envelope_c: float
    x_upper: float
    x_lower: float
    certified: bool


def _is_bounded_above(u: UtilityFn) -> bool:
    hi, mid = u(1e100), u(1e50)
    return bool(np.isfinite(hi) and hi - mid <= 1e-9 * (1 + abs(hi)))


def _conc_holds(u, gamma, c, xs, lams) -> bool:
    X, L = np.meshgrid(xs, lams)
    lhs = u((L * X).ravel()).reshape(X.shape)
    rhs = L ** gamma * (u(X.ravel()).reshape(X.shape) + c)
    with np.errstate(invalid="ignore"):
        ok = lhs <= rhs + 1e-9 * (1 + np.abs(rhs))
    return bool(np.all(ok))


def _conc_grid():
    half = np.logspace(-3, 4, 120)
    return np.concatenate([-half[::-1], [0.0], half]), np.logspace(0, 4, 40)


def ae_report(u: UtilityFn, probes=DEFAULT_AE_PROBES) -> AEReport:
    """Classify ``u`` and certify the two-sided scaling envelope on a grid.

    The exponents are chosen strictly inside the asymptotic elasticity
    bounds (midpoints), then ``(x_lower, x_upper)`` are searched on dyadic
    ladders until both scaling inequalities hold on the certification grid.
    """
    def safe(side):
        try:
            return estimate_ae(u, side, probes).value
        except DegenerateProbe:
            return math.nan

    ae_p, ae_m = safe("+"), safe("-")
    bounded = _is_bounded_above(u)
    if bounded:
        tag = "bounded_above"
    elif ae_m > 1 + 1e-6 and ae_m <= u.p_growth + 1e-3:
        tag = "rae_minus"
    elif ae_p < 1 - 1e-6:
        tag = "rae_plus"
    else:
        tag = "inadmissible"

    if tag == "rae_minus":
        g_lo, g_hi = 1.0, (1.0 + ae_m) / 2
    elif ae_p < 1 - 1e-6:
        g_lo, g_hi = (1.0 + max(ae_p, 0.0)) / 2, 1.0
    else:
        return AEReport(ae_p, ae_m, tag, math.nan, math.nan, math.nan, math.nan, u.x_lower, False)

    xs, lams = _conc_grid()
    for s in range(0, 41):
        for jl in range(0, s + 1):
            x_lo = u.x_lower * 2.0 ** jl
            x_up = 2.0 ** (s - jl)
            if not (u(-x_lo) < 0 and u(x_up) > 0):
                continue
            c = max(-u(-x_lo), 0.0) + max(u(x_up), 0.0)
            if _conc_holds(u, g_lo, c, xs, lams) and _conc_holds(u, g_hi, c, xs, lams):
                return AEReport(ae_p, ae_m, tag, g_lo, g_hi, c, x_up, x_lo, True)
    return AEReport(ae_p, ae_m, tag, g_lo, g_hi, math.nan, math.nan, u.x_lower, False)


def growth_envelope(u: UtilityFn, report: AEReport, probe: GridSpec = GridSpec(),
                    which: str = "lower", gamma_hat: float | None = None) -> float:
    """Constant ``C_hat`` with ``U(x) <= C_hat (|x|^gamma_hat + 1)``, checked on ``probe``."""
    if report.case_tag not in ("rae_minus", "rae_plus"):
        raise NotApplicable(f"growth envelope needs an RAE utility, got {report.case_tag}")
    if gamma_hat is None:
        gamma_hat = report.gamma_lower if which == "lower" else report.gamma_upper
    xu, xl = report.x_upper, report.x_lower
    u_up = u(xu)
    c_hat = (2 * u_up + max(-u(-xl), 0.0)) / xu ** gamma_hat + u_up
    x = probe.points()
    with np.errstate(over="ignore"):
        env = c_hat * (np.abs(x) ** gamma_hat + 1)
    bad = u(x) > env + 1e-9 * (1 + np.abs(env))
    if np.any(bad):
        raise InconsistentMetadata(f"growth envelope violated at x={float(x[np.argmax(bad)])}")
    return float(c_hat)
