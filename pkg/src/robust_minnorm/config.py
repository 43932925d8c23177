"""Experiment configuration: a sectioned key-value (INI) file.

Sections and keys::

    [data]        source = synthetic | csv
                  path (csv), weights (optional, comma list)
                  n, d, seed, scales, drift, center (synthetic)
    [utility]     kind = log_linear | linear_power | bounded_exp_power | custom
                  q (linear_power), p (bounded_exp_power)
                  pieces = "upper:atom:c,c,...; ..." (custom; upper may be inf)
                  p_growth, c1, x_lower (optional overrides), x0 (initial wealth)
    [ambiguity]   p, and one of: k | k_schedule (comma list) | k_min, k_max, ratio
    [constraints] kind, a | normals ("1,1; 1,0") + offsets | points
    [solver]      max_iter, gtol, eta0, cert_tol, warm_start
    [output]      dir, name, threshold

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, RobustMinNormError
from .market import DiscreteMeasure, read_returns_csv
from .rng import gaussian_returns
from .robustopt import ConstraintSet
from .utility import UtilityFn


def _floats(text: str) -> list:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _matrix(text: str) -> list:
    return [_floats(row) for row in text.split(";") if row.strip()]


@dataclass
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    weights: list | None = None
    n: int = 100
    d: int = 2
    seed: int | None = None
    scales: list | None = None
    drift: list | None = None
    center: bool = True


@dataclass
class UtilityConfig:
    kind: str = "log_linear"
    q: float | None = None
    p: float | None = None
    pieces: str | None = None
    p_growth: float | None = None
    c1: float | None = None
    x_lower: float | None = None
    x0: float = 1.0


@dataclass
class AmbiguityConfig:
    p: float = 2.0
    k: float | None = None
    k_schedule: list | None = None


@dataclass
class ConstraintConfig:
    kind: str = "halfspace"
    a: float | None = None
    normals: list | None = None
    offsets: list | None = None
    points: list | None = None


@dataclass
class SolverConfig:
    max_iter: int = 5000
    gtol: float = 1e-6
    eta0: float | None = None
    cert_tol: float = 1e-5
    warm_start: bool = True


@dataclass
class OutputConfig:
    dir: str = "out"
    name: str = "experiment"
    threshold: float = 0.05


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    ambiguity: AmbiguityConfig = field(default_factory=AmbiguityConfig)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = field(default=".", compare=False)

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["output"].pop("dir")
        return d

    # -- builders ----------------------------------------------------------
    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def build_measure(self) -> DiscreteMeasure:
        dc = self.data
        if dc.source == "csv":
            return read_returns_csv(self.resolve(dc.path), dc.weights)
        x = gaussian_returns(dc.n, dc.d, dc.seed, dc.scales, dc.drift, dc.center)
        return DiscreteMeasure.uniform(x)

    def build_utility(self) -> UtilityFn:
        uc = self.utility
        over = {k: v for k, v in (("p_growth", uc.p_growth), ("c1", uc.c1), ("x_lower", uc.x_lower))
                if v is not None}
        try:
            if uc.kind == "log_linear":
                return UtilityFn.log_linear(**over)
            if uc.kind == "linear_power":
                return UtilityFn.linear_power(q=uc.q if uc.q is not None else 2.0, **over)
            if uc.kind == "bounded_exp_power":
                return UtilityFn.bounded_exp_power(p=uc.p if uc.p is not None else 2.0, **over)
            if uc.kind == "custom":
                pieces = []
                for chunk in (uc.pieces or "").split(";"):
                    if not chunk.strip():
                        continue
                    upper, atom, coef = (s.strip() for s in chunk.split(":"))
                    pieces.append((math.inf if upper in ("inf", "+inf") else float(upper), atom,
                                   _floats(coef)))
                return UtilityFn.custom(pieces, over.get("p_growth", 1.0), over.get("c1", 1.0),
                                        over.get("x_lower", 1.0))
        except RobustMinNormError as exc:
            raise ConfigError(f"[utility] {exc}") from exc
        raise ConfigError(f"[utility] unknown kind {uc.kind!r}")

    def build_constraints(self, dim: int) -> ConstraintSet:
        cc = self.constraints
        try:
            if cc.kind in ("halfspace", "halfspace_nonneg", "two_sided"):
                return ConstraintSet(cc.kind, dim, a=cc.a)
            if cc.kind == "polyhedron":
                return ConstraintSet.polyhedron(cc.normals, cc.offsets)
            if cc.kind == "singleton":
                return ConstraintSet.singleton(cc.points[0])
            if cc.kind == "finite_list":
                return ConstraintSet.finite_list(cc.points)
        except (RobustMinNormError, TypeError, IndexError) as exc:
            raise ConfigError(f"[constraints] {exc}") from exc
        raise ConfigError(f"[constraints] unknown kind {cc.kind!r}")


def _get(sec, key, conv, default=None):
    if sec is None or key not in sec:
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r}: {exc}") from exc


def _bool(s: str) -> bool:
    s = s.lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    s = {name: (cp[name] if cp.has_section(name) else None)
         for name in ("data", "utility", "ambiguity", "constraints", "solver", "output")}
    unknown = set(cp.sections()) - set(s)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")

    data = DataConfig(
        source=_get(s["data"], "source", str, "synthetic"),
        path=_get(s["data"], "path", str),
        weights=_get(s["data"], "weights", _floats),
        n=_get(s["data"], "n", int, 100),
        d=_get(s["data"], "d", int, 2),
        seed=_get(s["data"], "seed", int),
        scales=_get(s["data"], "scales", _floats),
        drift=_get(s["data"], "drift", _floats),
        center=_get(s["data"], "center", _bool, True),
    )
    if seed_override is not None:
        data.seed = int(seed_override)
    util = UtilityConfig(
        kind=_get(s["utility"], "kind", str, "log_linear"),
        q=_get(s["utility"], "q", float),
        p=_get(s["utility"], "p", float),
        pieces=_get(s["utility"], "pieces", str),
        p_growth=_get(s["utility"], "p_growth", float),
        c1=_get(s["utility"], "c1", float),
        x_lower=_get(s["utility"], "x_lower", float),
        x0=_get(s["utility"], "x0", float, 1.0),
    )
    amb_sec = s["ambiguity"]
    sched = _get(amb_sec, "k_schedule", _floats)
    if sched is None and amb_sec is not None and "k_min" in amb_sec:
        k_min = _get(amb_sec, "k_min", float)
        k_max = _get(amb_sec, "k_max", float)
        ratio = _get(amb_sec, "ratio", float, 2.0)
        if not (k_min and k_max and ratio and k_min > 0 and ratio > 1):
            raise ConfigError("[ambiguity] k_min, k_max must be positive and ratio > 1")
        sched, k = [], k_min
        while k <= k_max * (1 + 1e-12):
            sched.append(k)
            k *= ratio
    amb = AmbiguityConfig(p=_get(amb_sec, "p", float, 2.0), k=_get(amb_sec, "k", float),
                          k_schedule=sched)
    cons = ConstraintConfig(
        kind=_get(s["constraints"], "kind", str, "halfspace"),
        a=_get(s["constraints"], "a", float),
        normals=_get(s["constraints"], "normals", _matrix),
        offsets=_get(s["constraints"], "offsets", _floats),
        points=_get(s["constraints"], "points", _matrix),
    )
    solver = SolverConfig(
        max_iter=_get(s["solver"], "max_iter", int, 5000),
        gtol=_get(s["solver"], "gtol", float, 1e-6),
        eta0=_get(s["solver"], "eta0", float),
        cert_tol=_get(s["solver"], "cert_tol", float, 1e-5),
        warm_start=_get(s["solver"], "warm_start", _bool, True),
    )
    out = OutputConfig(
        dir=_get(s["output"], "dir", str, "out"),
        name=_get(s["output"], "name", str, path.stem),
        threshold=_get(s["output"], "threshold", float, 0.05),
    )
    cfg = ExperimentConfig(data, util, amb, cons, solver, out, str(path.parent))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    d = cfg.data
    if d.source not in ("synthetic", "csv"):
        raise ConfigError(f"[data] unknown source {d.source!r}")
    if d.source == "csv":
        if not d.path:
            raise ConfigError("[data] csv source needs a path")
        if not cfg.resolve(d.path).is_file():
            raise ConfigError(f"[data] file not found: {d.path}")
    else:
        if d.seed is None:
            raise ConfigError("[data] synthetic source needs a seed")
        if d.n < 1 or d.d < 1:
            raise ConfigError("[data] n and d must be positive")
    a = cfg.ambiguity
    if a.p < 1:
        raise ConfigError("[ambiguity] p must be >= 1")
    if a.k is not None and not a.k > 0:
        raise ConfigError("[ambiguity] k must be positive")
    if a.k_schedule is not None:
        ks = a.k_schedule
        if not ks:
            raise ConfigError("[ambiguity] k schedule is empty")
        if any(k <= 0 for k in ks) or any(b <= b0 for b0, b in zip(ks, ks[1:])):
            raise ConfigError("[ambiguity] k schedule must be positive and strictly increasing")
    sv = cfg.solver
    if not (sv.gtol > 0 and sv.cert_tol > 0 and sv.max_iter > 0):
        raise ConfigError("[solver] tolerances and max_iter must be positive")
    if sv.eta0 is not None and not sv.eta0 > 0:
        raise ConfigError("[solver] eta0 must be positive")
    if cfg.utility.x0 == 0:
        raise ConfigError("[utility] x0 must be non-zero")


def format_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits,
    non-finite floats as the strings "nan", "inf", "-inf"."""
    def enc(o):
        if isinstance(o, dict):
            items = sorted((str(k), v) for k, v in o.items())
            return "{" + ", ".join(json.dumps(k) + ": " + enc(v) for k, v in items) + "}"
        if isinstance(o, (list, tuple)):
            return "[" + ", ".join(enc(v) for v in o) + "]"
        if isinstance(o, np.ndarray):
            return enc(o.tolist())
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            f = float(o)
            if math.isnan(f):
                return '"nan"'
            if math.isinf(f):
                return '"inf"' if f > 0 else '"-inf"'
            return format(f, ".17g")
        if o is None:
            return "null"
        return json.dumps(str(o))
    return enc(obj) + "\n"
