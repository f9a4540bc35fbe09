"""Observability Gramians, transition matrices and excitation checks.

Everything here works on sampled signals over a uniform time grid (usually a
:class:`~relnav.truthsim.TruthTrajectory`). Integrals use composite Simpson
quadrature at the sampling step.

Two linear pairs matter:

* the 6-state pair ``(A, C)`` of the position/velocity error, with
  ``A = [[-w^x, I], [0, -w^x]]`` and ``C = [pi_y, 0]``;
* the 7-state pair ``(A_theta, C_theta)`` which appends the yaw residual.
  In inertial coordinates its coupling column becomes ``b = a_T^I x eta_I``.

In inertial coordinates both transition matrices have closed forms, which
is what :func:`transition_matrix_6` and :func:`transition_matrix_theta` build.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import cumulative_simpson, simpson

from relnav.geom3 import E3, I3, cross
from relnav.truthsim import TruthTrajectory

MU_THRESHOLD = 1e-6
# ||b0|| below this fraction of max ||b|| counts as a vanishing mean; sampling
# a rotating b over a window that is not an exact number of periods on the
# grid leaves a residual mean of order dt / horizon
B0_REL_TOL = 1e-3


@dataclass(frozen=True)
class Window:
    """Integration window ``[t0, t0 + delta]`` sampled every ``dt_quad``."""

    t0: float
    delta: float
    dt_quad: float = 1e-3

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("window length delta must be positive")
        if not self.dt_quad > 0:
            raise ValueError("dt_quad must be positive")

    @property
    def n_intervals(self) -> int:
        return max(int(round(self.delta / self.dt_quad)), 1)

    def grid(self) -> NDArray[np.float64]:
        return self.t0 + np.linspace(0.0, self.delta, self.n_intervals + 1)


@dataclass
class GramianReport:
    W: NDArray[np.float64]
    mu: float
    window: Window
    # filled by scans: min mu over the scanned windows and the verdict
    uniformly_observable: bool | None = None
    mu_scan: NDArray[np.float64] | None = None
    t_scan: NDArray[np.float64] | None = None
    threshold: float = MU_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "t0": self.window.t0,
            "delta": self.window.delta,
            "dt_quad": self.window.dt_quad,
            "W": self.W.tolist(),
            "mu": self.mu,
            "mu_min_scan": None if self.mu_scan is None else float(np.min(self.mu_scan)),
            "n_windows": None if self.mu_scan is None else int(len(self.mu_scan)),
            "threshold": self.threshold,
            "uniformly_observable": self.uniformly_observable,
        }


@dataclass
class PeReport:
    """Worst-case excitation level of a unit-vector signal over a window scan."""

    signal: str
    delta: float
    mu: float
    passed: bool
    t_scan: NDArray[np.float64]
    mu_scan: NDArray[np.float64]
    threshold: float = MU_THRESHOLD
    aux: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "signal": self.signal,
            "delta": self.delta,
            "mu": self.mu,
            "threshold": self.threshold,
            "passed": self.passed,
            "n_windows": int(len(self.mu_scan)),
            "worst_window_t0": float(self.t_scan[int(np.argmin(self.mu_scan))]),
            **self.aux,
        }


@dataclass
class BDecomposition:
    """``b(t) = b0 + b1(t)`` with ``b0`` the horizon mean."""

    t: NDArray[np.float64]
    b0: NDArray[np.float64]
    b1_samples: NDArray[np.float64]

    @property
    def b(self) -> NDArray[np.float64]:
        return self.b0 + self.b1_samples


@dataclass
class Assumption1Report:
    status: str  # "holds", "violated" or "unverifiable"
    b0_norm: float
    worst_margin: float | None
    delta: float
    mu: float
    decomposition: BDecomposition
    note: str = "b0 estimated as the horizon mean; other decompositions are not explored"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "b0": self.decomposition.b0.tolist(),
            "b0_norm": self.b0_norm,
            "worst_margin": self.worst_margin,
            "delta": self.delta,
            "mu": self.mu,
            "note": self.note,
        }


# -- transition matrices ---------------------------------------------------


def _block_T(Q: NDArray[np.float64], n: int) -> NDArray[np.float64]:
    """``I_2 (x) Q`` padded with a unit diagonal up to size ``n``."""
    Q = np.asarray(Q, dtype=float)
    T = np.zeros(Q.shape[:-2] + (n, n))
    T[..., :3, :3] = Q
    T[..., 3:6, 3:6] = Q
    if n == 7:
        T[..., 6, 6] = 1.0
    return T


def transition_matrix_6(Q_B_s: ArrayLike, Q_B_t: ArrayLike, tau: ArrayLike) -> NDArray[np.float64]:
    """Closed-form ``Phi(s, t) = T(s)^T exp(Abar tau) T(t)`` with ``tau = s - t``.

    ``exp(Abar tau) = [[I, tau I], [0, I]]``. Broadcasts over leading axes
    of ``Q_B_s`` and ``tau``.
    """
    tau = np.asarray(tau, dtype=float)
    Ts = _block_T(Q_B_s, 6)
    Tt = _block_T(Q_B_t, 6)
    E = np.broadcast_to(np.eye(6), tau.shape + (6, 6)).copy()
    E[..., :3, 3:] = tau[..., None, None] * I3
    return np.swapaxes(Ts, -1, -2) @ E @ Tt


def b_signal(a_T_inertial: ArrayLike, eta_inertial: ArrayLike) -> NDArray[np.float64]:
    """``b = a_T^I x eta_I``."""
    return cross(a_T_inertial, eta_inertial)


def b_integrals(tau: ArrayLike, b: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Cumulative ``int_t^s b`` and ``beta(s, t) = int_t^s (s - tau) b(tau) dtau``.

    ``tau`` is the sample grid starting at ``t``; both outputs are returned at
    every sample ``s`` of that grid (``beta`` is the running integral of
    ``int b``, which follows from integrating by parts).
    """
    tau = np.asarray(tau, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(tau) == 1:
        z = np.zeros((1, 3))
        return z, z.copy()
    Ib = cumulative_simpson(b, x=tau, axis=0, initial=0.0)
    beta = cumulative_simpson(Ib, x=tau, axis=0, initial=0.0)
    return Ib, beta


def transition_matrix_theta_bar(tau: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Inertial-coordinate ``Phibar_theta(s, t)`` for every ``s`` on the grid ``tau``.

    ``tau[0]`` is ``t``. Returns shape ``(len(tau), 7, 7)``.
    """
    tau = np.asarray(tau, dtype=float)
    Ib, beta = b_integrals(tau, b)
    M = len(tau)
    Phi = np.broadcast_to(np.eye(7), (M, 7, 7)).copy()
    Phi[:, :3, 3:6] = (tau - tau[0])[:, None, None] * I3
    Phi[:, :3, 6] = beta
    Phi[:, 3:6, 6] = Ib
    return Phi


def transition_matrix_theta(tau: ArrayLike, b: ArrayLike, Q_B: ArrayLike) -> NDArray[np.float64]:
    """``Phi_theta(s, t) = Tbar(s)^T Phibar_theta(s, t) Tbar(t)`` along the grid ``tau``.

    ``Q_B`` holds the body attitude at every sample of ``tau``.
    """
    Q_B = np.asarray(Q_B, dtype=float)
    Pbar = transition_matrix_theta_bar(tau, b)
    Ts = _block_T(Q_B, 7)
    return np.swapaxes(Ts, -1, -2) @ Pbar @ Ts[0]


# -- Gramians --------------------------------------------------------------


def gramian(C_path: ArrayLike, Phi_path: ArrayLike, window: Window) -> GramianReport:
    """``W = (1/delta) int Phi^T C^T C Phi ds`` over ``window``.

    Parameters
    ----------
    C_path : (M, p, n) array
        Output matrix at each quadrature node of ``window.grid()``.
    Phi_path : (M, n, n) array
        ``Phi(s, t0)`` at the same nodes.
    """
    C = np.asarray(C_path, dtype=float)
    Phi = np.asarray(Phi_path, dtype=float)
    s = window.grid()
    if C.shape[0] != len(s) or Phi.shape[0] != len(s):
        raise ValueError(f"paths need {len(s)} samples to cover the window")
    CPhi = C @ Phi
    integrand = np.swapaxes(CPhi, -1, -2) @ CPhi
    W = simpson(integrand, x=s, axis=0) / window.delta
    W = 0.5 * (W + W.T)
    return GramianReport(W=W, mu=float(np.linalg.eigvalsh(W)[0]), window=window)


def _window_indices(traj: TruthTrajectory, t0: float, delta: float) -> slice:
    dt = traj.dt
    i0 = int(round((t0 - traj.t[0]) / dt))
    m = int(round(delta / dt))
    if i0 < 0 or m < 1 or i0 + m > len(traj.t) - 1:
        raise ValueError(f"window [{t0}, {t0 + delta}] not covered by the trajectory")
    return slice(i0, i0 + m + 1)


def _bearing_body(traj: TruthTrajectory, sl: slice) -> NDArray[np.float64]:
    xi = traj.xi[sl]
    return xi / np.linalg.norm(xi, axis=1, keepdims=True)


def gramian_6state(traj: TruthTrajectory, t0: float, delta: float) -> GramianReport:
    """Gramian of ``(A, C)`` along a truth trajectory, body-frame coordinates."""
    sl = _window_indices(traj, t0, delta)
    tau = traj.t[sl]
    window = Window(float(tau[0]), float(tau[-1] - tau[0]), traj.dt)
    y = _bearing_body(traj, sl)
    C = np.zeros((len(tau), 3, 6))
    C[:, :, :3] = I3 - y[:, :, None] * y[:, None, :]
    Phi = transition_matrix_6(traj.Q_B[sl], traj.Q_B[sl.start], tau - tau[0])
    return gramian(C, Phi, window)


def gramian_7state(traj: TruthTrajectory, t0: float, delta: float) -> GramianReport:
    """Gramian of ``(A_theta, C_theta)`` linearized at the true attitude."""
    sl = _window_indices(traj, t0, delta)
    tau = traj.t[sl]
    window = Window(float(tau[0]), float(tau[-1] - tau[0]), traj.dt)
    y = _bearing_body(traj, sl)
    C = np.zeros((len(tau), 3, 7))
    C[:, :, :3] = I3 - y[:, :, None] * y[:, None, :]
    b = b_signal(traj.a_T_inertial[sl], traj.eta_inertial[sl])
    Phi = transition_matrix_theta(tau, b, traj.Q_B[sl])
    return gramian(C, Phi, window)


def scan_gramian(
    traj: TruthTrajectory, pair: str, delta: float, stride_s: float | None = None, threshold: float = MU_THRESHOLD
) -> GramianReport:
    """Evaluate the Gramian on every window start (step ``stride_s``) that fits.

    The returned report holds the worst window's ``W`` and ``mu``; the flag
    ``uniformly_observable`` means ``min mu > threshold`` over the scan.
    """
    fn = {"6state": gramian_6state, "7state": gramian_7state}.get(pair)
    if fn is None:
        raise ValueError("pair must be '6state' or '7state'")
    t_end = traj.t[-1] - delta
    if t_end < traj.t[0] - 1e-12:
        raise ValueError("trajectory shorter than the window")
    stride = stride_s if stride_s is not None else max(delta / 4.0, traj.dt)
    starts = np.arange(traj.t[0], t_end + 1e-9, stride)
    reports = [fn(traj, float(t0), delta) for t0 in starts]
    mus = np.array([r.mu for r in reports])
    worst = reports[int(np.argmin(mus))]
    worst.mu_scan = mus
    worst.t_scan = starts
    worst.threshold = threshold
    worst.uniformly_observable = bool(mus.min() > threshold)
    return worst


# -- excitation checks -----------------------------------------------------


def windowed_projector_mu(
    t: ArrayLike, u: ArrayLike, delta: float, stride: int = 1
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``lambda_min((1/delta) int_t^{t+delta} pi_u)`` for window starts on the grid.

    Returns ``(t_starts, mu)``.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    dt = float(t[1] - t[0])
    m = int(round(delta / dt))
    if m < 1 or m >= len(t):
        raise ValueError("delta must span at least one sample and fit in the signal")
    Pi = I3 - u[:, :, None] * u[:, None, :]
    starts = np.arange(0, len(t) - m, stride)
    if m % 2 == 0:
        # exact composite Simpson on each window
        F = np.array([simpson(Pi[i : i + m + 1], x=t[i : i + m + 1], axis=0) for i in starts])
    else:
        F = cumulative_simpson(Pi, x=t, axis=0, initial=0.0)
        F = F[starts + m] - F[starts]
    mu = np.linalg.eigvalsh(F / (m * dt))[:, 0]
    return t[starts], mu


def _stride_for(n_samples: int, m: int) -> int:
    # about 200 windows keep the scan cheap without missing slow features
    return max(1, (n_samples - m) // 200)


def check_pe_normal(
    t: ArrayLike,
    eta_inertial: ArrayLike,
    delta: float,
    omega_T: ArrayLike | None = None,
    threshold: float = MU_THRESHOLD,
    stride: int | None = None,
) -> PeReport:
    """Excitation of the inertial platform normal.

    When ``omega_T`` is given, the report also carries the necessary
    condition ``min_t max_{s in window} |omega_T(s) x e3|`` as
    ``aux["min_window_max_omega_cross_e3"]``.
    """
    t = np.asarray(t, dtype=float)
    m = int(round(delta / (t[1] - t[0])))
    st = stride or _stride_for(len(t), m)
    ts, mu = windowed_projector_mu(t, eta_inertial, delta, st)
    aux = {}
    if omega_T is not None:
        g = np.linalg.norm(cross(omega_T, E3), axis=1)
        idx = np.arange(0, len(t) - m, st)
        aux["min_window_max_omega_cross_e3"] = float(min(g[i : i + m + 1].max() for i in idx))
    worst = float(mu.min())
    return PeReport("normal", delta, worst, worst > threshold, ts, mu, threshold, aux)


def check_pe_bearing(
    t: ArrayLike,
    bearing_inertial: ArrayLike,
    delta: float,
    threshold: float = MU_THRESHOLD,
    stride: int | None = None,
) -> PeReport:
    """Excitation of the inertial bearing ``Q_B y_xi``."""
    t = np.asarray(t, dtype=float)
    m = int(round(delta / (t[1] - t[0])))
    ts, mu = windowed_projector_mu(t, bearing_inertial, delta, stride or _stride_for(len(t), m))
    worst = float(mu.min())
    return PeReport("bearing", delta, worst, worst > threshold, ts, mu, threshold)


def decompose_b(t: ArrayLike, b: ArrayLike) -> BDecomposition:
    t = np.asarray(t, dtype=float)
    b = np.asarray(b, dtype=float)
    b0 = simpson(b, x=t, axis=0) / (t[-1] - t[0])
    return BDecomposition(t, b0, b - b0)


def check_assumption1(
    t: ArrayLike,
    a_T_inertial: ArrayLike,
    eta_inertial: ArrayLike,
    bearing_inertial: ArrayLike,
    delta: float,
    mu: float,
    stride: int | None = None,
    b0_rel_tol: float = B0_REL_TOL,
) -> Assumption1Report:
    """Check ``(1/delta) int |pi_y b1|^2 <= (mu/4) |b0|^2`` on every scanned window.

    ``b0`` is the horizon mean of ``b = a_T^I x eta_I``. A vanishing mean
    makes the mean-based split useless, so the status is "unverifiable"
    rather than a verdict.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(bearing_inertial, dtype=float)
    dec = decompose_b(t, b_signal(a_T_inertial, eta_inertial))
    b_max = float(np.max(np.linalg.norm(dec.b, axis=1)))
    b0n = float(np.linalg.norm(dec.b0))
    if b0n <= b0_rel_tol * b_max or b_max == 0.0:
        return Assumption1Report("unverifiable", b0n, None, delta, mu, dec)

    pb1 = dec.b1_samples - y * np.sum(y * dec.b1_samples, axis=1, keepdims=True)
    g = np.sum(pb1 * pb1, axis=1)
    dt = float(t[1] - t[0])
    m = int(round(delta / dt))
    if m < 1 or m >= len(t):
        raise ValueError("delta must span at least one sample and fit in the signal")
    st = stride or _stride_for(len(t), m)
    starts = np.arange(0, len(t) - m, st)
    lhs = np.array([simpson(g[i : i + m + 1], x=t[i : i + m + 1]) for i in starts]) / (m * dt)
    margin = float(0.25 * mu * b0n**2 - lhs.max())
    return Assumption1Report("holds" if margin >= 0 else "violated", b0n, margin, delta, mu, dec)
