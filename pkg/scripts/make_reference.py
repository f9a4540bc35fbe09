"""Regenerate tests/data/reference.json.

Runs the 50-run Monte Carlo of both scenarios at the default step and at half
that step, and stores the median terminal value of every error channel. The
acceptance tests compare fresh runs against the default-step medians; the
half-step medians document that the reference is converged in ``dt``.

Usage: python scripts/make_reference.py [--runs 50] [--out tests/data/reference.json]
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from relnav import __version__
from relnav.harness.config import default_config
from relnav.harness.engine import CHANNELS
from relnav.harness.montecarlo import run_montecarlo

ROOT = Path(__file__).resolve().parents[1]


def medians(scenario: str, runs: int, dt: float) -> dict:
    cfg = default_config(scenario).replace(dt=dt)
    t0 = time.time()
    s = run_montecarlo(cfg, runs)
    ok = np.array([st != "faulted" for st in s.statuses])
    term = s.terminal[ok]
    out = {c: float(np.median(term[:, i])) for i, c in enumerate(CHANNELS)}
    out["abs_theta_tilde"] = float(np.median(np.abs(term[:, CHANNELS.index("theta_tilde")])))
    out["n_faulted"] = int((~ok).sum())
    out["config_hash"] = cfg.config_hash()
    print(f"{scenario} dt={dt:g}: {time.time() - t0:.1f}s")
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--out", default=str(ROOT / "tests" / "data" / "reference.json"))
    args = ap.parse_args()

    ref = {"version": __version__, "runs": args.runs, "horizon_s": 30.0, "scenarios": {}}
    for scenario in ("cascade", "coupled"):
        dt = default_config(scenario).dt
        ref["scenarios"][scenario] = {
            "dt": dt,
            "median_terminal": medians(scenario, args.runs, dt),
            "median_terminal_half_step": medians(scenario, args.runs, dt / 2),
        }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(ref, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
