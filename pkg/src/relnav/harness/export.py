"""CSV/JSON export of traces, summaries and truth trajectories.

Floats are written with ``%.17g`` so a file read back reproduces the arrays
bit for bit, and nothing time- or host-dependent goes into the files: the
same input always gives the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import subprocess
from pathlib import Path

import numpy as np

from relnav import __version__
from relnav.harness.engine import CHANNELS, ErrorTrace
from relnav.harness.montecarlo import McSummary
from relnav.truthsim import TruthTrajectory

TRACE_HEADER = ("t",) + CHANNELS

_TRAJ_FIELDS = (
    ("Q_B", 9),
    ("p_B", 3),
    ("v_B", 3),
    ("Q_T", 9),
    ("p_T", 3),
    ("v_T", 3),
    ("omega_B", 3),
    ("a_B", 3),
    ("omega_T", 3),
    ("a_T", 3),
)


class ExportError(OSError):
    pass


def version_string() -> str:
    """``<package version>+g<commit>`` when run from a git checkout."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    sha = out.stdout.strip()
    return f"{__version__}+g{sha}" if out.returncode == 0 and sha else __version__


def _fmt(x: float) -> str:
    return "%.17g" % x


def _write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc


def _csv_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# -- error traces ----------------------------------------------------------


def trace_csv(t, values) -> str:
    t = np.asarray(t, dtype=float).reshape(-1)
    values = np.asarray(values, dtype=float).reshape(len(t), len(CHANNELS))
    rows = (map(float, np.concatenate([[ti], v])) for ti, v in zip(t, values))
    return _csv_table(TRACE_HEADER, rows)


def write_trace_csv(trace: ErrorTrace, path: str | Path) -> Path:
    return _write_text(path, trace_csv(trace.t, trace.values))


def read_trace_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(t, values)`` of a trace CSV."""
    lines = _read_text(path).splitlines()
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != TRACE_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:] if ln], dtype=float)
    data = data.reshape(-1, len(TRACE_HEADER))
    return data[:, 0], data[:, 1:]


def trace_to_dict(trace: ErrorTrace, meta: dict | None = None) -> dict:
    return {
        "meta": {"version": version_string(), **(meta or {})},
        "seed": trace.seed,
        "status": trace.status,
        "fault": trace.fault,
        "diagnostics": trace.diagnostics,
        "channels": list(TRACE_HEADER),
        "t": trace.t.tolist(),
        "values": trace.values.tolist(),
    }


def write_trace_json(trace: ErrorTrace, path: str | Path, meta: dict | None = None) -> Path:
    return _write_text(path, json.dumps(trace_to_dict(trace, meta), indent=1, sort_keys=True) + "\n")


# -- Monte Carlo summaries -------------------------------------------------


def summary_to_dict(s: McSummary) -> dict:
    return {
        "meta": {"version": version_string(), **s.meta},
        "channels": list(CHANNELS),
        "t": s.t.tolist(),
        "p5": s.p5.tolist(),
        "p50": s.p50.tolist(),
        "p95": s.p95.tolist(),
        "seeds": list(s.seeds),
        "statuses": list(s.statuses),
        "terminal": s.terminal.tolist(),
        "faults": s.faults,
        "n_excluded": s.n_excluded,
    }


def summary_from_dict(d: dict) -> McSummary:
    if d.get("channels") != list(CHANNELS):
        raise ValueError("summary channels do not match this version")
    arr = lambda k: np.array(d[k], dtype=float)  # noqa: E731
    meta = dict(d.get("meta", {}))
    return McSummary(
        t=arr("t"),
        p5=arr("p5"),
        p50=arr("p50"),
        p95=arr("p95"),
        seeds=[int(x) for x in d["seeds"]],
        statuses=list(d["statuses"]),
        terminal=arr("terminal"),
        faults=list(d["faults"]),
        n_excluded=int(d["n_excluded"]),
        meta=meta,
    )


def write_summary(s: McSummary, out_dir: str | Path) -> dict[str, Path]:
    """Write percentile CSVs, per-run terminal values and ``summary.json``."""
    out = Path(out_dir)
    files = {}
    for name, band in (("p05", s.p5), ("p50", s.p50), ("p95", s.p95)):
        files[name] = _write_text(out / f"{name}.csv", trace_csv(s.t, band))
    rows = (
        [seed, status] + [float(v) for v in term] for seed, status, term in zip(s.seeds, s.statuses, s.terminal)
    )
    files["terminal"] = _write_text(out / "terminal.csv", _csv_table(("seed", "status") + CHANNELS, rows))
    files["summary"] = _write_text(out / "summary.json", json.dumps(summary_to_dict(s), indent=1) + "\n")
    return files


def load_summary(path: str | Path) -> McSummary:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    return summary_from_dict(json.loads(_read_text(path)))


# -- truth trajectories ----------------------------------------------------


def _traj_header() -> list[str]:
    cols = ["t"]
    for name, k in _TRAJ_FIELDS:
        cols += [f"{name}_{i}" for i in range(k)]
    return cols


def write_trajectory_csv(traj: TruthTrajectory, path: str | Path) -> Path:
    """One row per sample: time, both rigid states and the scenario inputs."""
    cols = [traj.t[:, None]] + [getattr(traj, name).reshape(len(traj.t), k) for name, k in _TRAJ_FIELDS]
    M = np.hstack(cols)
    buf = io.StringIO()
    buf.write(",".join(_traj_header()) + "\n")
    np.savetxt(buf, M, fmt="%.17g", delimiter=",")
    return _write_text(path, buf.getvalue())


def read_trajectory_csv(path: str | Path) -> TruthTrajectory:
    text = _read_text(path)
    header, _, body = text.partition("\n")
    if header.split(",") != _traj_header():
        raise ValueError(f"{path}: not a trajectory trace")
    M = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    out, col = {}, 1
    for name, k in _TRAJ_FIELDS:
        block = M[:, col : col + k]
        out[name] = block.reshape(-1, 3, 3) if k == 9 else block
        col += k
    return TruthTrajectory(t=M[:, 0], **out)
