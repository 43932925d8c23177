"""Run every preset through the command line tool and tabulate the outcome.

    python3 scripts/run_presets.py [--out DIR]
"""
import argparse
import json
import time
from pathlib import Path

from robust_minnorm.cli import main

ROOT = Path(__file__).resolve().parents[1]
RUNS = [("sweep", "halfspace_gauss2d"), ("sweep", "two_sided"), ("sweep", "singleton"),
        ("solve", "illposed"), ("diagnose", "na_pair"), ("diagnose", "arbitrage")]


def summarize(cmd, name, out):
    if cmd == "sweep":
        doc = json.loads((out / f"{name}_summary.json").read_text())
        v = doc["verdict"]
        return f"final dist {v['final_dist']:.2e}, below threshold: {v['final_below_threshold']}"
    if cmd == "solve":
        f = out / f"{name}_illposed.json"
        if f.exists():
            wit = json.loads(f.read_text())["witness"]
            return f"ill-posed, witness E = {wit['expectation']:.4g}"
        doc = json.loads((out / f"{name}_solve.json").read_text())
        return f"w_k = {doc['w_k']}, value {doc['value']:.6g}"
    doc = json.loads((out / f"{name}_diagnose.json").read_text())
    return f"no arbitrage: {doc['no_arbitrage']}, beta* = {doc['beta_star']}"


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "out"))
    args = ap.parse_args()
    out = Path(args.out)
    for cmd, name in RUNS:
        t0 = time.perf_counter()
        code = main([cmd, "--config", str(ROOT / "presets" / f"{name}.ini"), "--out", str(out)])
        dt = time.perf_counter() - t0
        print(f"{cmd:8s} {name:18s} exit {code}  {dt:5.1f} s  {summarize(cmd, name, out)}")
