"""Cross-check of the position/velocity observer against its error system.

With the true attitude fed to the observer, the estimation error
``x = (xi - xi_hat, v - v_hat)`` obeys the linear system
``x_dot = (A(t) - K(t) C(t)) x``. The check runs the closed loop, then
integrates that linear system on its own (adaptive scipy integrator, gains
rebuilt from the recorded ``omega_B``, bearing and ``P`` histories) and
compares the two error trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from relnav.harness.config import RunConfig, default_config
from relnav.harness.engine import Simulator
from relnav.pv_observer import build_A, build_C, compute_gains

TOLERANCE = 1e-4


@dataclass
class SelfTestReport:
    max_abs_diff: float
    tolerance: float
    horizon_s: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_diff <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "check": "error-system equivalence",
            "max_abs_diff": self.max_abs_diff,
            "tolerance": self.tolerance,
            "horizon_s": self.horizon_s,
            "n_samples": self.n_samples,
            "passed": self.passed,
        }


def error_system_config(horizon_s: float = 10.0) -> RunConfig:
    return default_config("cascade").replace(horizon_s=horizon_s, attitude__source="truth", riccati__mode="cascade6")


def integrate_error_system(history: dict, D: np.ndarray) -> np.ndarray:
    """Integrate ``x_dot = (A - K C) x`` from ``history["x_err"][0]``; return x at the recorded times."""
    t = history["t"]
    om = CubicSpline(t, history["omega_B"], axis=0)
    yb = CubicSpline(t, history["bearing"], axis=0)
    Pf = CubicSpline(t, history["P"], axis=0)

    def rhs(s, x):
        y = yb(s)
        y = y / np.linalg.norm(y)
        C = build_C(y)
        K = compute_gains(Pf(s), C, D)
        return (build_A(om(s)) - K @ C) @ x

    sol = solve_ivp(rhs, (t[0], t[-1]), history["x_err"][0], method="DOP853", t_eval=t, rtol=1e-11, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"error-system integration failed: {sol.message}")
    return sol.y.T


def run_error_system_check(cfg: RunConfig | None = None, seed: int = 0, tolerance: float = TOLERANCE) -> SelfTestReport:
    cfg = cfg or error_system_config()
    if cfg.attitude.source != "truth":
        raise ValueError("the error-system check needs attitude.source = 'truth'")
    sim = Simulator(cfg, [seed], record_history=True)
    sim.run()
    h = sim.history
    x_lin = integrate_error_system(h, sim.D)
    diff = float(np.max(np.abs(x_lin - h["x_err"])))
    return SelfTestReport(diff, tolerance, cfg.horizon_s, len(h["t"]))
