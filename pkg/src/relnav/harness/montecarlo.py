"""Single runs and Monte Carlo batches with percentile bands."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from relnav.harness.config import RunConfig
from relnav.harness.engine import CHANNELS, ErrorTrace, Simulator, TruthSignals

log = logging.getLogger(__name__)

PERCENTILES = (5.0, 50.0, 95.0)


@dataclass
class McSummary:
    """Percentile bands of every error channel over the healthy runs.

    ``p5``, ``p50`` and ``p95`` have shape ``(samples, len(CHANNELS))``.
    Faulted runs are listed in ``faults`` and left out of the bands.
    """

    t: NDArray[np.float64]
    p5: NDArray[np.float64]
    p50: NDArray[np.float64]
    p95: NDArray[np.float64]
    seeds: list[int]
    statuses: list[str]
    terminal: NDArray[np.float64]  # (n_runs, len(CHANNELS))
    faults: list[dict]
    n_excluded: int
    meta: dict = field(default_factory=dict)
    traces: list[ErrorTrace] | None = field(default=None, repr=False, compare=False)

    @property
    def n_runs(self) -> int:
        return len(self.seeds)

    def median_terminal(self) -> dict[str, float]:
        ok = np.array([s != "faulted" for s in self.statuses])
        if not ok.any():
            return {c: float("nan") for c in CHANNELS}
        med = np.median(self.terminal[ok], axis=0)
        return {c: float(med[i]) for i, c in enumerate(CHANNELS)}


def seeds_for(cfg: RunConfig, n: int) -> list[int]:
    """Run ``k`` uses seed ``cfg.seed + k``."""
    if n < 1:
        raise ValueError("need at least one run")
    return [cfg.seed + k for k in range(n)]


def run_single(cfg: RunConfig, seed: int | None = None, signals: TruthSignals | None = None) -> ErrorTrace:
    """One closed-loop run; ``seed`` defaults to ``cfg.seed``."""
    seed = cfg.seed if seed is None else seed
    return Simulator(cfg, [seed], signals=signals).run()[0]


def summarize(traces: list[ErrorTrace], meta: dict | None = None) -> McSummary:
    if not traces:
        raise ValueError("no traces to summarize")
    t = traces[0].t
    ok = [tr for tr in traces if tr.ok]
    if ok:
        stack = np.stack([tr.values for tr in ok])
        p5, p50, p95 = np.percentile(stack, PERCENTILES, axis=0)
    else:
        p5 = p50 = p95 = np.full((len(t), len(CHANNELS)), np.nan)
    faults = [{"seed": tr.seed, "message": tr.fault} for tr in traces if not tr.ok]
    return McSummary(
        t=t.copy(),
        p5=p5,
        p50=p50,
        p95=p95,
        seeds=[tr.seed for tr in traces],
        statuses=[tr.status for tr in traces],
        terminal=np.stack([tr.values[-1] for tr in traces]),
        faults=faults,
        n_excluded=len(traces) - len(ok),
        meta=dict(meta or {}),
        traces=traces,
    )


def run_montecarlo(cfg: RunConfig, n: int = 50, signals: TruthSignals | None = None) -> McSummary:
    """``n`` runs sharing the truth, seeds ``cfg.seed, cfg.seed + 1, ...``.

    Faulted runs never abort the batch; they are reported and excluded.
    """
    seeds = seeds_for(cfg, n)
    log.info("monte carlo: scenario=%s runs=%d horizon=%.1fs", cfg.scenario, n, cfg.horizon_s)
    traces = Simulator(cfg, seeds, signals=signals).run()
    summary = summarize(traces, {"config_hash": cfg.config_hash(), "seed": cfg.seed, "runs": n})
    if summary.n_excluded:
        log.warning("%d of %d runs faulted and were excluded", summary.n_excluded, n)
    return summary
