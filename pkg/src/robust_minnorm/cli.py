"""Command line entry point: ``solve``, ``sweep`` and ``diagnose`` subcommands.

Exit codes: 0 success, 1 configuration or I/O error, 2 ill-posed problem
(the worst-case utility is -inf), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import convergence_report, sweep_k
from .config import ExperimentConfig, format_json, load_config
from .errors import ConfigError, IllPosed, NotApplicable, NumericalFailure, RobustMinNormError
from .market import (AmbiguitySpec, arbitrage_direction, beta_star, construct_pstar,
                     moment_cp, wasserstein_discrete)
from .robustopt import formula_bound, maximize, min_norm_points
from .utility import ae_report, check_admissibility
from .worstcase import divergence_witness

log = logging.getLogger("robust_minnorm")

EXIT_OK, EXIT_CONFIG, EXIT_ILLPOSED, EXIT_NUMERIC = 0, 1, 2, 3
WITNESS_TARGET = -1e3


class _Problem:
    """Everything built from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        try:
            self.P = cfg.build_measure()
        except (OSError, RobustMinNormError, ValueError) as exc:
            raise ConfigError(f"[data] {exc}") from exc
        self.U = cfg.build_utility()
        self.D = cfg.build_constraints(self.P.dim)
        if self.D.dim != self.P.dim:
            raise ConfigError("constraint dimension does not match the returns")
        self.x0 = cfg.utility.x0
        self.p = cfg.ambiguity.p

    def spec(self, k: float) -> AmbiguitySpec:
        return AmbiguitySpec(self.P, self.p, k)

    def header(self) -> dict:
        return {"config_hash": self.cfg.config_hash(), "version": __version__,
                "name": self.cfg.output.name}

    def solver_kw(self) -> dict:
        sv = self.cfg.solver
        return {"max_iter": sv.max_iter, "gtol": sv.gtol, "eta0": sv.eta0, "cert_tol": sv.cert_tol}

    def growth_ok(self) -> tuple[bool, str]:
        rep = check_admissibility(self.U)
        if not rep.passed:
            return False, f"admissibility check failed: {rep.first_violation}"
        if self.U.p_growth > self.p:
            return False, f"declared growth exponent {self.U.p_growth} exceeds p = {self.p}"
        return True, ""

    def probe_direction(self) -> np.ndarray:
        w = min_norm_points(self.D)[0]
        if np.linalg.norm(w) == 0:
            w = np.zeros(self.P.dim)
            w[0] = 1.0
        return w


def _out_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    d = Path(override) if override else cfg.resolve(cfg.output.dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def _illposed_report(prob: _Problem, k: float, reason: str, out: Path) -> int:
    spec = prob.spec(k)
    w = prob.probe_direction()
    wit = divergence_witness(prob.U, spec, prob.x0, w, WITNESS_TARGET, mode="tail")
    dist = wasserstein_discrete(wit.measure, prob.P, prob.p)
    doc = prob.header() | {
        "status": "ill_posed",
        "reason": reason,
        "k": k,
        "w": w,
        "witness": {
            "expectation": wit.expectation,
            "target": WITNESS_TARGET,
            "reached": wit.reached,
            "alpha": wit.alpha,
            "extra_atom": wit.point,
            "wasserstein_distance": dist,
            "in_ball": bool(dist <= k + 1e-9),
            "measure": wit.measure.to_json(),
        },
    }
    _write(out / f"{prob.cfg.output.name}_illposed.json", format_json(doc))
    print(f"ill-posed: {reason}", file=sys.stderr)
    print(f"witness expectation {wit.expectation:.6g} at W_p distance {dist:.6g} <= k = {k:g}",
          file=sys.stderr)
    return EXIT_ILLPOSED


def cmd_solve(cfg: ExperimentConfig, out_override=None, threads=None) -> int:
    prob = _Problem(cfg)
    k = cfg.ambiguity.k
    if k is None:
        raise ConfigError("[ambiguity] solve needs a scalar k")
    out = _out_dir(cfg, out_override)
    ok, reason = prob.growth_ok()
    if not ok:
        return _illposed_report(prob, k, reason, out)
    spec = prob.spec(k)
    meta = ae_report(prob.U)
    beta = None
    try:
        beta = beta_star(construct_pstar(spec))
    except RobustMinNormError:
        pass
    try:
        sol = maximize(prob.U, spec, prob.x0, prob.D, meta=meta if meta.certified else None,
                       **prob.solver_kw())
    except IllPosed as exc:
        return _illposed_report(prob, k, str(exc), out)
    inner = sol.inner
    doc = prob.header() | {
        "status": "ok",
        "k": k,
        "p": prob.p,
        "x0": prob.x0,
        "w_k": sol.w_k,
        "value": sol.value,
        "piece": sol.piece_tag,
        "iterations": sol.iterations,
        "diagnostics": {
            "saturated": inner.saturated if inner else None,
            "attained": inner.attained if inner else None,
            "budget_norm": inner.budget.budget_norm if inner else None,
            "duality_gap": inner.gap if inner else None,
            "dual_lambda": inner.dual_lambda if inner else None,
            "k_bound": sol.k_bound_used,
            "norm_over_k_bound": float(np.linalg.norm(sol.w_k)) / sol.k_bound_used,
            "beta_star": beta,
            "certified": sol.certified,
            "certificate_gap": sol.certificate_gap,
            "projected_gradient_norm": sol.grad_norm,
        },
        "min_norm_points": min_norm_points(prob.D),
    }
    _write(out / f"{cfg.output.name}_solve.json", format_json(doc))
    print(f"w_k = {np.array2string(sol.w_k, precision=6)}  value = {sol.value:.10g}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out_override=None, threads=None) -> int:
    prob = _Problem(cfg)
    ks = cfg.ambiguity.k_schedule
    if not ks:
        raise ConfigError("[ambiguity] sweep needs a non-empty k schedule")
    out = _out_dir(cfg, out_override)
    ok, reason = prob.growth_ok()
    if not ok:
        return _illposed_report(prob, ks[0], reason, out)
    meta = ae_report(prob.U)
    res = sweep_k(prob.U, prob.spec(ks[0]), prob.x0, prob.D, ks,
                  warm_start=cfg.solver.warm_start, threads=threads or 1,
                  meta=meta if meta.certified else None, **prob.solver_kw())
    rep = convergence_report(res)
    name = cfg.output.name
    d = prob.P.dim

    with open(out / f"{name}_sweep.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k"] + [f"w{i + 1}" for i in range(d)] + ["norm", "value", "dist", "iters", "ms"])
        for r in res.records:
            w = r.w_k if r.ok else [math.nan] * d
            wr.writerow([repr(r.k)] + [repr(float(x)) for x in w]
                        + [repr(r.norm), repr(r.value), repr(r.dist), r.iterations,
                           f"{1e3 * r.wall_time:.1f}"])
    with open(out / f"{name}_plot.dat", "w") as fh:
        fh.write("# k dist\n")
        for r in res.records:
            if r.ok:
                fh.write(f"{r.k!r} {r.dist!r}\n")

    recs = [r for r in res.records if r.ok]
    final = recs[-1] if recs else None
    tail = [r.dist for r in recs]
    eventually_decreasing = len(tail) >= 2 and all(b <= a + 1e-12 for a, b in zip(tail[-3:], tail[-2:]))
    passed = final is not None and final.dist < cfg.output.threshold
    doc = prob.header() | {
        "status": "ok",
        "p": prob.p,
        "x0": prob.x0,
        "min_norm_points": res.min_norm,
        "records": [{"k": r.k, "w_k": r.w_k, "norm": r.norm, "value": r.value, "dist": r.dist,
                     "iterations": r.iterations, "certified": r.certified,
                     "lower_bound": r.lower_bound, "upper_bound": r.upper_bound,
                     "error": r.error} for r in res.records],
        "report": rep.to_json(),
        "verdict": {"threshold": cfg.output.threshold,
                    "final_dist": final.dist if final else None,
                    "final_below_threshold": bool(passed),
                    "eventually_decreasing": bool(eventually_decreasing)},
    }
    _write(out / f"{name}_summary.json", format_json(doc))
    for r in res.records:
        if r.ok:
            print(f"k={r.k:<8g} |w|={r.norm:.6f} dist={r.dist:.3e} value={r.value:.6g}")
        else:
            print(f"k={r.k:<8g} FAILED {r.error}")
    print(f"final dist {final.dist if final else float('nan'):.3e} "
          f"({'below' if passed else 'above'} threshold {cfg.output.threshold:g})")
    return EXIT_OK


def cmd_diagnose(cfg: ExperimentConfig, out_override=None, threads=None) -> int:
    prob = _Problem(cfg)
    out = _out_dir(cfg, out_override)
    U, P = prob.U, prob.P
    adm = check_admissibility(U)
    meta = ae_report(U)
    arb = arbitrage_direction(P)
    ks = cfg.ambiguity.k_schedule or []
    k = cfg.ambiguity.k if cfg.ambiguity.k is not None else (ks[0] if ks else 1.0)
    spec = prob.spec(k)
    beta, beta_note = None, None
    try:
        beta = beta_star(construct_pstar(spec))
    except RobustMinNormError as exc:
        beta_note = str(exc)
    kb = None
    try:
        kb = formula_bound(U, meta, spec, prob.x0, prob.D) if meta.certified else None
    except (NotApplicable, RobustMinNormError) as exc:
        beta_note = beta_note or str(exc)
    doc = prob.header() | {
        "admissibility": {"passed": adm.passed, "checks": adm.checks,
                          "first_violation": list(adm.first_violation) if adm.first_violation else None},
        "asymptotic_elasticity": {"plus": meta.ae_plus, "minus": meta.ae_minus, "case": meta.case_tag,
                                  "gamma_lower": meta.gamma_lower, "gamma_upper": meta.gamma_upper,
                                  "envelope_c": meta.envelope_c, "certified": meta.certified},
        "no_arbitrage": arb is None,
        "arbitrage_direction": arb,
        "k": k,
        "moment_cp": moment_cp(P, prob.p),
        "beta_star": beta,
        "k_bound": None if kb is None else {"K": kb.K, "K0": kb.K0, "K1": kb.K1, "eta": kb.eta,
                                             "x_star": kb.x_star, "L_star": kb.L_star,
                                             "sup_minus": kb.sup_minus},
        "note": beta_note,
    }
    _write(out / f"{cfg.output.name}_diagnose.json", format_json(doc))
    print(f"admissible: {adm.passed}" + ("" if adm.passed else f"  first violation: {adm.first_violation}"))
    print(f"AE(+inf) = {meta.ae_plus:.6g}  AE(-inf) = {meta.ae_minus:.6g}  case: {meta.case_tag}")
    if arb is None:
        print("no arbitrage: true")
    else:
        print(f"no arbitrage: false  arbitrage direction w = {np.array2string(arb, precision=6)}")
    print(f"C_P = {moment_cp(P, prob.p):.6g}")
    print(f"beta* (grid) = {beta}" if beta is not None else f"beta*: {beta_note}")
    if kb is not None:
        print(f"K bound = {kb.K:.6g} (K0 = {kb.K0:.6g}, K1 = {kb.K1:.6g})")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "diagnose": cmd_diagnose}


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors; argparse's own code 2 means ill-posed here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="robust-minnorm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment config (INI)")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    ap.add_argument("--seed", type=int, help="override [data] seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        return COMMANDS[args.command](cfg, args.out, args.threads)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IllPosed as exc:
        print(f"ill-posed: {exc}", file=sys.stderr)
        return EXIT_ILLPOSED
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
