"""Closed-loop simulation of truth, sensors and observers.

The truth does not depend on the observers, so it is integrated once per
configuration (adaptive 8th-order scheme, tight tolerances) and sampled on a
half-step grid. The observers are then stepped with a fixed-step RK4 scheme
whose stages fall exactly on that grid, so they see measurements evaluated
at every Runge-Kutta stage, the way a continuous-time observer would. Noisy
or decimated vision readings are sampled at frame times and held.

Monte Carlo runs share the truth (only the initial estimates and the noise
differ), so the engine steps a whole batch of observers at once: every
observer array has a leading run axis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from relnav import geom3
from relnav.att_observer import (
    attitude_rhs,
    coupled_innovation,
    normal_error,
    sigma_R,
    yaw_error,
)
from relnav.geom3 import exp_so3, nearest_rotation
from relnav.harness.config import RunConfig
from relnav.pv_observer import build_S, gamma_schedule, pv_rhs, symmetrize, yaw_coupling
from relnav.sensors import EPS_RANGE, tilt_direction
from relnav.truthsim import SCENARIOS, TruthTrajectory, initial_world, simulate_truth

log = logging.getLogger(__name__)

CHANNELS = ("normal_err", "att_trace_err", "pos_err_sq", "vel_err_sq", "theta_tilde", "p_min_eig")


@dataclass
class ErrorTrace:
    """Error channels of one run sampled every ``decimation`` steps."""

    t: NDArray[np.float64]
    values: NDArray[np.float64]  # (samples, len(CHANNELS))
    seed: int
    status: str = "ok"
    fault: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def channel(self, name: str) -> NDArray[np.float64]:
        return self.values[:, CHANNELS.index(name)]

    def terminal(self) -> dict[str, float]:
        return {name: float(self.values[-1, i]) for i, name in enumerate(CHANNELS)}

    @property
    def ok(self) -> bool:
        return self.status != "faulted"


@dataclass
class InitialEstimates:
    Rhat: NDArray[np.float64]  # (N, 3, 3)
    xi_hat: NDArray[np.float64]  # (N, 3)
    v_hat: NDArray[np.float64]  # (N, 3)


def sample_initial_estimates(cfg: RunConfig, rng: np.random.Generator, R0: NDArray[np.float64]):
    """Draw ``(Rhat0, xi_hat0, v_hat0)`` around the true initial attitude ``R0``."""
    ie = cfg.initial_estimate
    Rhat0 = geom3.random_rotation(ie.attitude_mean_deg, ie.attitude_std_deg, rng) @ R0
    xi0 = rng.normal(ie.xi_mean, ie.xi_std)
    v0 = rng.normal(ie.v_mean, ie.v_std)
    return Rhat0, xi0, v0


def build_world(cfg: RunConfig):
    tr = cfg.truth
    return initial_world(
        p_B=tr.p_B,
        v_B_body=tr.v_B_body,
        p_T=tr.p_T,
        v_T_body=cfg.v_T_body,
        Q_B=exp_so3(np.radians(tr.Q_B_rotvec_deg)),
        Q_T=exp_so3(np.radians(tr.Q_T_rotvec_deg)),
    )


class _Layout:
    """Slices of the packed per-run observer vector."""

    def __init__(self, n: int):
        self.n = n
        self.R = slice(0, 9)
        self.xi = slice(9, 12)
        self.v = slice(12, 15)
        self.theta = 15
        self.P = slice(16, 16 + n * n)
        self.size = 16 + n * n

    def unpack(self, z):
        N = z.shape[0]
        return (
            z[:, self.R].reshape(N, 3, 3),
            z[:, self.xi],
            z[:, self.v],
            z[:, self.P].reshape(N, self.n, self.n),
        )

    def pack(self, Rhat, xi, v, theta, P):
        N = xi.shape[0]
        z = np.empty((N, self.size))
        z[:, self.R] = Rhat.reshape(N, 9)
        z[:, self.xi] = xi
        z[:, self.v] = v
        z[:, self.theta] = theta
        z[:, self.P] = P.reshape(N, -1)
        return z


@dataclass
class TruthSignals:
    """Truth-derived quantities on the half-step grid ``t_j = j dt / 2``."""

    traj: TruthTrajectory
    R: NDArray[np.float64]
    xi: NDArray[np.float64]
    v: NDArray[np.float64]
    range: NDArray[np.float64]
    eta: NDArray[np.float64]

    @classmethod
    def from_trajectory(cls, traj: TruthTrajectory) -> TruthSignals:
        R = traj.R
        xi = traj.xi
        v = np.einsum("kji,kj->ki", traj.Q_B, traj.v_B - traj.v_T)
        return cls(traj, R, xi, v, np.linalg.norm(xi, axis=1), R[:, 2, :].copy())

    def bearing(self, j: int) -> NDArray[np.float64]:
        return self.xi[j] / self.range[j]


def simulate_signals(cfg: RunConfig) -> TruthSignals:
    """Truth for ``cfg`` sampled every ``dt / 2`` over the horizon."""
    traj = simulate_truth(build_world(cfg), SCENARIOS[cfg.scenario], 0.5 * cfg.dt, 2 * cfg.n_steps, method="dop853")
    return TruthSignals.from_trajectory(traj)


@dataclass
class _Held:
    """Sensor readings held over one integration step."""

    imu: NDArray[np.float64] | None = None  # (N, 12) additive noise: gyro_B, acc_B, gyro_T, acc_T
    vision: tuple[NDArray[np.float64], NDArray[np.float64]] | None = None


class Simulator:
    """Batched closed-loop simulator for one configuration.

    Parameters
    ----------
    cfg : RunConfig
    seeds : sequence of int
        One seed per run; each run owns ``np.random.default_rng(seed)``.
    initial : InitialEstimates, optional
        Overrides the random initial estimates (the generators are still
        seeded, so noise draws do not change).
    record_history : bool
        Keep per-step copies of the quantities needed to re-integrate the
        linear error system (measured ``omega_B``, bearing, ``P``, errors)
        for run 0.
    signals : TruthSignals, optional
        Precomputed truth for ``cfg``; computed on demand otherwise.
    """

    def __init__(
        self,
        cfg: RunConfig,
        seeds,
        initial: InitialEstimates | None = None,
        record_history: bool = False,
        signals: TruthSignals | None = None,
    ):
        self.cfg = cfg
        self.seeds = [int(s) for s in seeds]
        self.N = len(self.seeds)
        self.rcfg = cfg.riccati_config()
        self.k_R = cfg.att_config().k_R
        self.noise = cfg.noise_spec()
        self.coupled = self.rcfg.mode == "coupled7"
        self.truth_attitude = cfg.attitude.source == "truth"
        self.layout = _Layout(self.rcfg.n)
        self.D = np.asarray(self.rcfg.D, dtype=float)
        self.rngs = [np.random.default_rng(s) for s in self.seeds]
        self.record_history = record_history
        self.sig = signals if signals is not None else simulate_signals(cfg)

        R0 = self.sig.R[0]
        draws = [sample_initial_estimates(cfg, rng, R0) for rng in self.rngs]
        if initial is None:
            initial = InitialEstimates(
                np.array([d[0] for d in draws]), np.array([d[1] for d in draws]), np.array([d[2] for d in draws])
            )
        P0 = np.broadcast_to(self.rcfg.P0(), (self.N, self.rcfg.n, self.rcfg.n))
        self.z = self.layout.pack(initial.Rhat, initial.xi_hat, initial.v_hat, np.zeros(self.N), P0)

        # constant parts of A and S
        n = self.rcfg.n
        self._A0 = np.zeros((n, n))
        self._A0[:3, 3:6] = np.eye(3)
        self._S0 = build_S(self.rcfg, 1.0)
        self._S0[3:6, 3:6] = 0.0
        self._V = np.zeros((n, n))
        self._V[3:6, 3:6] = np.eye(3)

    # -- measurement model -------------------------------------------------

    def _draw_imu(self) -> NDArray[np.float64] | None:
        if not self.noise.imu_noisy:
            return None
        scale = np.repeat([self.noise.gyro_std, self.noise.accel_std] * 2, 3)
        return np.array([rng.standard_normal(12) for rng in self.rngs]) * scale

    def _sample_vision(self, j: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        bearing = np.broadcast_to(self.sig.bearing(j), (self.N, 3))
        eta = np.broadcast_to(self.sig.eta[j], (self.N, 3))
        if self.noise.vision_noisy:
            d = np.array([rng.standard_normal(2).tolist() + rng.uniform(0, 2 * np.pi, 2).tolist() for rng in self.rngs])
            sb = np.radians(self.noise.bearing_cone_std_deg)
            sn = np.radians(self.noise.normal_cone_std_deg)
            bearing = tilt_direction(bearing, np.abs(d[:, 0]) * sb, d[:, 2])
            eta = tilt_direction(eta, np.abs(d[:, 1]) * sn, d[:, 3])
        return np.array(bearing), np.array(eta)

    def inputs(self, j: int, held: _Held):
        """Measured ``(omega_B, a_B, omega_T, a_T, bearing, eta)`` at grid index ``j``."""
        tr = self.sig.traj
        omega_B, a_B, omega_T, a_T = tr.omega_B[j], tr.a_B[j], tr.omega_T[j], tr.a_T[j]
        if held.imu is not None:
            omega_B = omega_B + held.imu[:, 0:3]
            a_B = a_B + held.imu[:, 3:6]
            omega_T = omega_T + held.imu[:, 6:9]
            a_T = a_T + held.imu[:, 9:12]
        if held.vision is None:
            bearing, eta = self.sig.bearing(j), self.sig.eta[j]
        else:
            bearing, eta = held.vision
        return omega_B, a_B, omega_T, a_T, bearing, eta

    # -- observer dynamics -------------------------------------------------

    def deriv(self, j: int, z, held: _Held) -> NDArray[np.float64]:
        """Time derivative of the packed observer array at grid index ``j``."""
        N, n, L = self.N, self.rcfg.n, self.layout
        omega_B, a_B, omega_T, a_T, bearing, eta = self.inputs(j, held)
        Rhat, xi_hat, v_hat, P = L.unpack(z)
        R_used = np.broadcast_to(self.sig.R[j], Rhat.shape) if self.truth_attitude else Rhat

        # C = [pi_y, 0], so P C^T = P[:, :, :3] pi_y and C P C^T never needs C itself
        Pi = geom3.I3 - bearing[..., :, None] * bearing[..., None, :]
        PCt = P[:, :, :3] @ Pi
        K = PCt @ self.D
        y = -np.einsum("...ij,...j->...i", Pi, xi_hat)
        sig = np.einsum("nij,nj->ni", K, y)
        sigma_theta = sig[:, 6] if self.coupled else np.zeros(N)

        dz = np.empty_like(z)
        if self.truth_attitude:
            dz[:, L.R] = 0.0
        else:
            sR = sigma_R(Rhat, eta, self.k_R)
            dR = attitude_rhs(Rhat, omega_B, omega_T, coupled_innovation(sR, sigma_theta))
            dz[:, L.R] = dR.reshape(N, 9)
        d_xi, d_v = pv_rhs(xi_hat, v_hat, omega_B, a_B, a_T, R_used, sig[:, 0:3], sig[:, 3:6])
        dz[:, L.xi] = d_xi
        dz[:, L.v] = d_v
        dz[:, L.theta] = -sigma_theta

        W = geom3.skew(omega_B)
        A = np.broadcast_to(self._A0, (N, n, n)).copy()
        A[:, :3, :3] = -W
        A[:, 3:6, 3:6] = -W
        if self.coupled:
            A[:, 3:6, 6] = yaw_coupling(R_used, a_T)
        gamma = gamma_schedule(a_T, R_used[:, 2, :], eta, self.rcfg.gamma_floor)
        S = self._S0 + (self.rcfg.s_v * gamma)[..., None, None] * self._V
        # riccati_rhs with the P C^T D C P term assembled from K and P C^T
        AP = A @ P
        dP = AP + np.swapaxes(AP, 1, 2) - K @ np.swapaxes(PCt, 1, 2) + S
        dz[:, L.P] = dP.reshape(N, -1)
        return dz

    # -- diagnostics -------------------------------------------------------

    def errors(self, j: int, z) -> NDArray[np.float64]:
        R, xi, v = self.sig.R[j], self.sig.xi[j], self.sig.v[j]
        Rhat, xi_hat, v_hat, P = self.layout.unpack(z)
        if self.truth_attitude:
            Rhat = np.broadcast_to(R, Rhat.shape)
        out = np.empty((self.N, len(CHANNELS)))
        out[:, 0] = normal_error(Rhat, R[2, :])
        out[:, 1] = geom3.attitude_trace_error(Rhat, R)
        out[:, 2] = np.sum((xi - xi_hat) ** 2, axis=1)
        out[:, 3] = np.sum((v - v_hat) ** 2, axis=1)
        out[:, 4] = yaw_error(Rhat, R)
        out[:, 5] = _min_eig(P)
        return out

    # -- main loop ---------------------------------------------------------

    def run(self) -> list[ErrorTrace]:
        cfg = self.cfg
        dt, n_steps, dec = cfg.dt, cfg.n_steps, cfg.decimation
        vdec = cfg.noise.vision_decimation
        hold_vision = self.noise.vision_noisy or vdec > 1
        N, n, L = self.N, self.rcfg.n, self.layout

        alive = np.ones(N, dtype=bool)
        faults: list[str | None] = [None] * N
        fault_step = np.full(N, -1)
        max_v_increase = np.full(N, -np.inf)
        max_asym = np.zeros(N)
        min_eig = np.full(N, np.inf)
        status = "ok"

        sample_steps = list(range(0, n_steps + 1, dec))
        if sample_steps[-1] != n_steps:
            sample_steps.append(n_steps)
        samples = np.full((N, len(sample_steps), len(CHANNELS)), np.nan)
        times = np.array(sample_steps, dtype=float) * dt
        next_sample = 0

        # the bearing is undefined once the range drops below the guard
        low = np.flatnonzero(self.sig.range < EPS_RANGE)
        last_k = n_steps if low.size == 0 else max(int(low[0]) // 2 - 1, 0)
        if last_k < n_steps:
            status = "landed"
            log.info("range guard triggers at t=%.4f s; stopping", last_k * dt)

        hist = _History(self) if self.record_history else None
        held = _Held()

        e = self.errors(0, self.z)
        self._check_initial(alive, faults, fault_step)
        V_prev = e[:, 1]
        min_eig = np.minimum(min_eig, e[:, 5])

        for k in range(last_k + 1):
            if next_sample < len(sample_steps) and sample_steps[next_sample] == k:
                if k > 0:
                    e = self.errors(2 * k, self.z)
                samples[alive, next_sample] = e[alive]
                next_sample += 1
            if k == last_k:
                break
            held.imu = self._draw_imu()
            if hold_vision and k % vdec == 0:
                held.vision = self._sample_vision(2 * k)
            if hist is not None:
                hist.record(2 * k, self.z, held)
            z_new = self._rk4(k, dt, held)

            Pn = z_new[:, L.P].reshape(N, n, n)
            asym = np.max(np.abs(Pn - np.swapaxes(Pn, 1, 2)), axis=(1, 2))
            max_asym = np.where(alive, np.maximum(max_asym, asym), max_asym)
            z_new, lam = self._guard(z_new, alive, faults, fault_step, k + 1, dt)
            z_new[:, L.R] = nearest_rotation(z_new[:, L.R].reshape(N, 3, 3)).reshape(N, 9)
            z_new[:, L.P] = symmetrize(z_new[:, L.P].reshape(N, n, n)).reshape(N, -1)

            self.z = z_new
            V = self._lyapunov(2 * k + 2)
            max_v_increase = np.where(alive, np.maximum(max_v_increase, V - V_prev), max_v_increase)
            V_prev = V
            min_eig = np.where(alive, np.minimum(min_eig, lam), min_eig)

        if status == "landed":
            keep = np.array(sample_steps) <= last_k
            times, samples = times[keep], samples[:, keep]

        traces = []
        for i, seed in enumerate(self.seeds):
            traces.append(
                ErrorTrace(
                    t=times.copy(),
                    values=samples[i],
                    seed=seed,
                    status="faulted" if faults[i] else status,
                    fault=faults[i],
                    diagnostics={
                        "max_lyapunov_increase": float(max_v_increase[i]),
                        "max_p_asymmetry": float(max_asym[i]),
                        "min_p_eig": float(min_eig[i]),
                        "fault_time": float(fault_step[i] * dt) if fault_step[i] >= 0 else None,
                    },
                )
            )
        if hist is not None:
            self.history = hist.finish(2 * last_k)
        return traces

    def _rk4(self, k: int, dt: float, held: _Held) -> NDArray[np.float64]:
        z, j = self.z, 2 * k
        k1 = self.deriv(j, z, held)
        k2 = self.deriv(j + 1, z + 0.5 * dt * k1, held)
        k3 = self.deriv(j + 1, z + 0.5 * dt * k2, held)
        k4 = self.deriv(j + 2, z + dt * k3, held)
        return z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def _lyapunov(self, j: int) -> NDArray[np.float64]:
        R = self.sig.R[j]
        Rhat = R if self.truth_attitude else self.z[:, self.layout.R].reshape(self.N, 3, 3)
        return np.broadcast_to(geom3.attitude_trace_error(Rhat, R), (self.N,))

    def _check_initial(self, alive, faults, fault_step):
        n = self.rcfg.n
        finite = np.all(np.isfinite(self.z), axis=1)
        P = np.where(finite[:, None], self.z, 0.0)[:, self.layout.P].reshape(self.N, n, n)
        eig = np.where(finite, _min_eig(P), -1.0)
        for i in np.flatnonzero(~finite | (eig <= 0)):
            alive[i] = False
            faults[i] = "initial observer state is non-finite or P(0) is not positive definite"
            fault_step[i] = 0

    def _guard(self, z_new, alive, faults, fault_step, k, dt):
        """Flag runs whose state went non-finite or whose P lost definiteness; freeze them."""
        n = self.rcfg.n
        finite = np.all(np.isfinite(z_new), axis=1)
        P = np.where(finite[:, None], z_new, 0.0)[:, self.layout.P].reshape(self.N, n, n)
        lam = np.where(finite, _min_eig(P), -np.inf)
        bad = alive & ((~finite) | (lam <= 0))
        for i in np.flatnonzero(bad):
            alive[i] = False
            fault_step[i] = k
            faults[i] = (
                f"observer state became non-finite at t={k * dt:.4f} s"
                if not finite[i]
                else f"Riccati matrix lost positive definiteness at t={k * dt:.4f} s (lambda_min={lam[i]:.3e})"
            )
            log.warning("run seed=%d faulted: %s", self.seeds[i], faults[i])
        if np.any(~alive):
            z_new[~alive] = self.z[~alive]
        return z_new, lam


def _min_eig(P: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.linalg.eigvalsh(symmetrize(P))[..., 0]


class _History:
    """Per-step record of run 0 for re-integrating its linear error system."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.rows: dict[str, list] = {k: [] for k in ("t", "omega_B", "bearing", "P", "x_err")}

    def record(self, j, z, held):
        sim = self.sim
        omega_B, _, _, _, bearing, _ = sim.inputs(j, held)
        _, xi_hat, v_hat, P = sim.layout.unpack(z)
        self.rows["t"].append(0.5 * j * sim.cfg.dt)
        self.rows["omega_B"].append(np.broadcast_to(omega_B, (sim.N, 3))[0].copy())
        self.rows["bearing"].append(np.broadcast_to(bearing, (sim.N, 3))[0].copy())
        self.rows["P"].append(P[0].copy())
        self.rows["x_err"].append(np.concatenate([sim.sig.xi[j] - xi_hat[0], sim.sig.v[j] - v_hat[0]]))

    def finish(self, j_end: int) -> dict[str, NDArray[np.float64]]:
        self.record(j_end, self.sim.z, _Held())
        return {k: np.array(v) for k, v in self.rows.items()}


def run_batch(
    cfg: RunConfig, seeds, initial: InitialEstimates | None = None, signals: TruthSignals | None = None
) -> list[ErrorTrace]:
    return Simulator(cfg, seeds, initial, signals=signals).run()
