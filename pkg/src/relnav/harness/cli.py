"""Command-line entry point: ``relnav <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from relnav.harness.config import (
    ConfigError,
    RunConfig,
    default_config,
    dump_config,
    load_config,
)
from relnav.harness.engine import build_world, simulate_signals
from relnav.harness.export import (
    ExportError,
    read_trajectory_csv,
    version_string,
    write_summary,
    write_trace_csv,
    write_trace_json,
    write_trajectory_csv,
)
from relnav.harness.montecarlo import run_montecarlo, run_single
from relnav.harness.selftest import run_error_system_check
from relnav.observability import (
    check_assumption1,
    check_pe_bearing,
    check_pe_normal,
    scan_gramian,
)
from relnav.truthsim import SCENARIOS, simulate_truth

log = logging.getLogger("relnav")


def _config(args) -> RunConfig:
    if args.config:
        return load_config(args.config)
    return default_config(args.scenario)


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    seed = cfg.seed if args.seed is None else args.seed
    signals = simulate_signals(cfg)
    trace = run_single(cfg, seed, signals=signals)
    meta = {"config_hash": cfg.config_hash(), "seed": seed, "scenario": cfg.scenario}
    if args.out.endswith(".json"):
        write_trace_json(trace, args.out, meta)
    else:
        write_trace_csv(trace, args.out)
    if args.trajectory_out:
        # keep the full-step samples of the half-step truth grid
        write_trajectory_csv(_full_steps(signals.traj), args.trajectory_out)
    log.info("run seed=%d status=%s -> %s", seed, trace.status, args.out)
    return 0 if trace.ok else 2


def _full_steps(traj):
    return replace(traj, **{f.name: getattr(traj, f.name)[::2] for f in fields(traj) if f.name != "meta"})


def cmd_montecarlo(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    summary = run_montecarlo(cfg, args.runs)
    write_summary(summary, args.out)
    (Path(args.out) / "config.yaml").write_text(dump_config(cfg))
    log.info("%d runs, %d excluded -> %s", summary.n_runs, summary.n_excluded, args.out)
    return 0


def cmd_trajectory(args) -> int:
    cfg = _config(args)
    traj = simulate_truth(build_world(cfg), SCENARIOS[cfg.scenario], cfg.dt, cfg.n_steps, method="dop853")
    write_trajectory_csv(traj, args.out)
    return 0


def cmd_gramian(args) -> int:
    traj = read_trajectory_csv(args.trace)
    rep = scan_gramian(traj, args.pair, args.delta, args.stride, args.threshold)
    _emit({"pair": args.pair, **rep.to_dict()}, args.out)
    return 0


def cmd_check_pe(args) -> int:
    traj = read_trajectory_csv(args.trace)
    if args.signal == "normal":
        rep = check_pe_normal(traj.t, traj.eta_inertial, args.delta, traj.omega_T, args.threshold)
        out = rep.to_dict()
    else:
        rep = check_pe_bearing(traj.t, traj.bearing_inertial, args.delta, args.threshold)
        out = rep.to_dict()
        a1 = check_assumption1(traj.t, traj.a_T_inertial, traj.eta_inertial, traj.bearing_inertial, args.delta, rep.mu)
        out["assumption1"] = a1.to_dict()
    _emit(out, args.out)
    return 0


def cmd_self_test(args) -> int:
    rep = run_error_system_check(tolerance=args.tolerance)
    _emit(rep.to_dict(), None)
    return 0 if rep.passed else 1


def cmd_default_config(args) -> int:
    text = dump_config(default_config(args.scenario))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relnav", description="Relative navigation observers: simulation and analysis.")
    p.add_argument("--version", action="version", version=f"relnav {version_string()}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def cfg_args(sp):
        sp.add_argument("--config", help="YAML run configuration (defaults used when omitted)")
        sp.add_argument("--scenario", choices=sorted(SCENARIOS), default="cascade", help="used without --config")

    sp = sub.add_parser("simulate", help="one closed-loop run, error trace to CSV or JSON")
    cfg_args(sp)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True, help="trace file (.csv or .json)")
    sp.add_argument("--trajectory-out", help="also write the truth trajectory trace (CSV)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("montecarlo", help="batch of runs with percentile bands")
    cfg_args(sp)
    sp.add_argument("--runs", type=int, default=50)
    sp.add_argument("--seed", type=int, default=None, help="base seed (run k uses seed + k)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("trajectory", help="truth trajectory trace only (CSV)")
    cfg_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_trajectory)

    sp = sub.add_parser("gramian", help="observability Gramian scan over a trajectory trace")
    sp.add_argument("--trace", required=True, help="trajectory CSV")
    sp.add_argument("--pair", choices=["6state", "7state"], default="6state")
    sp.add_argument("--delta", type=float, required=True, help="window length (s)")
    sp.add_argument("--stride", type=float, default=None, help="window start spacing (s)")
    sp.add_argument("--threshold", type=float, default=1e-6)
    sp.add_argument("--out", help="JSON report path (stdout when omitted)")
    sp.set_defaults(func=cmd_gramian)

    sp = sub.add_parser("check-pe", help="persistence-of-excitation check on a trajectory trace")
    sp.add_argument("--trace", required=True, help="trajectory CSV")
    sp.add_argument("--signal", choices=["normal", "bearing"], required=True)
    sp.add_argument("--delta", type=float, required=True, help="window length (s)")
    sp.add_argument("--threshold", type=float, default=1e-6)
    sp.add_argument("--out", help="JSON report path (stdout when omitted)")
    sp.set_defaults(func=cmd_check_pe)

    sp = sub.add_parser("self-test", help="closed loop vs independently integrated error system")
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.set_defaults(func=cmd_self_test)

    sp = sub.add_parser("default-config", help="print the default configuration as YAML")
    sp.add_argument("--scenario", choices=sorted(SCENARIOS), default="cascade")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_default_config)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ExportError, ValueError) as exc:
        print(f"relnav: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
