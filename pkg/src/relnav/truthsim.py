"""Ground-truth rigid-body motion of the UAV and the landing platform.

Frames follow the usual NED-like convention of the inertial frame: gravity
acts along ``+e3`` so that ``v_dot = Q a + g e3`` where ``a`` is the specific
acceleration an accelerometer would report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from relnav.geom3 import E3, G, cross, nearest_rotation, skew


@dataclass(frozen=True)
class RigidState:
    """Attitude (body to inertial), position and velocity in the inertial frame."""

    Q: NDArray[np.float64]
    p: NDArray[np.float64]
    v: NDArray[np.float64]

    @property
    def v_body(self) -> NDArray[np.float64]:
        return self.Q.T @ self.v


@dataclass(frozen=True)
class RelativeState:
    """Target-to-body attitude ``R = Q_T^T Q_B`` and body-frame ``xi``, ``v``."""

    R: NDArray[np.float64]
    xi: NDArray[np.float64]
    v: NDArray[np.float64]


@dataclass(frozen=True)
class ScenarioInputs:
    omega_B: NDArray[np.float64]
    a_B: NDArray[np.float64]
    omega_T: NDArray[np.float64]
    a_T: NDArray[np.float64]


@dataclass(frozen=True)
class WorldTruth:
    body: RigidState
    target: RigidState
    t: float = 0.0


Scenario = Callable[[float, WorldTruth], ScenarioInputs]


def rigid_rhs(
    Q: NDArray[np.float64], v: NDArray[np.float64], omega: ArrayLike, a: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Time derivatives ``(Q_dot, p_dot, v_dot)`` of a rigid body."""
    return Q @ skew(omega), np.array(v, dtype=float), Q @ np.asarray(a, dtype=float) + G * E3


def _check_finite(*arrays: ArrayLike) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input to rigid-body step")


def step_rigid(s: RigidState, omega: ArrayLike, a: ArrayLike, dt: float) -> RigidState:
    """One RK4 step of the rigid-body kinematics with inputs held over the step.

    The attitude is projected back onto SO(3) afterwards.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    _check_finite(s.Q, s.p, s.v, omega, a)

    def f(Q, v):
        dQ, dp, dv = rigid_rhs(Q, v, omega, a)
        return dQ, dp, dv

    k1 = f(s.Q, s.v)
    k2 = f(s.Q + 0.5 * dt * k1[0], s.v + 0.5 * dt * k1[2])
    k3 = f(s.Q + 0.5 * dt * k2[0], s.v + 0.5 * dt * k2[2])
    k4 = f(s.Q + dt * k3[0], s.v + dt * k3[2])
    Q, p, v = (
        x + dt / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
        for x, d1, d2, d3, d4 in zip((s.Q, s.p, s.v), k1, k2, k3, k4)
    )
    return RigidState(nearest_rotation(Q), p, v)


def relative_state(w: WorldTruth) -> RelativeState:
    QB, QT = w.body.Q, w.target.Q
    return RelativeState(
        R=QT.T @ QB,
        xi=QB.T @ (w.body.p - w.target.p),
        v=QB.T @ (w.body.v - w.target.v),
    )


UAV_RATE = np.array([0.0, 0.0, 0.5])
COUPLED_TARGET_RATE = np.array([0.0, 0.0, -0.8])


def _circling_accel(state: RigidState, omega: NDArray[np.float64]) -> NDArray[np.float64]:
    # omega x v_body cancels the rotation of the body axes, gravity term cancels g e3
    return cross(omega, state.v_body) - G * (state.Q.T @ E3)


def scenario_cascade(t: float, w: WorldTruth) -> ScenarioInputs:
    """UAV on a horizontal circle, target rolling in place."""
    return ScenarioInputs(
        omega_B=UAV_RATE.copy(),
        a_B=_circling_accel(w.body, UAV_RATE),
        omega_T=np.array([-1.5 * np.sin(t), 0.0, 0.0]),
        a_T=-G * (w.target.Q.T @ E3),
    )


def scenario_coupled(t: float, w: WorldTruth) -> ScenarioInputs:
    """UAV on a horizontal circle, target turning about its normal only."""
    return ScenarioInputs(
        omega_B=UAV_RATE.copy(),
        a_B=_circling_accel(w.body, UAV_RATE),
        omega_T=COUPLED_TARGET_RATE.copy(),
        a_T=_circling_accel(w.target, COUPLED_TARGET_RATE),
    )


SCENARIOS: dict[str, Scenario] = {
    "cascade": scenario_cascade,
    "coupled": scenario_coupled,
}


def initial_world(
    p_B: ArrayLike = (0.0, 0.0, 8.0),
    v_B_body: ArrayLike = (2.0, 0.0, 0.0),
    p_T: ArrayLike = (0.0, 0.0, 0.0),
    v_T_body: ArrayLike = (0.0, 0.0, 0.0),
    Q_B: ArrayLike | None = None,
    Q_T: ArrayLike | None = None,
) -> WorldTruth:
    """Build the initial truth; velocities are given in each vehicle's body frame."""
    QB = np.eye(3) if Q_B is None else np.asarray(Q_B, dtype=float)
    QT = np.eye(3) if Q_T is None else np.asarray(Q_T, dtype=float)
    body = RigidState(QB, np.asarray(p_B, dtype=float), QB @ np.asarray(v_B_body, dtype=float))
    target = RigidState(QT, np.asarray(p_T, dtype=float), QT @ np.asarray(v_T_body, dtype=float))
    return WorldTruth(body, target, 0.0)


# ---------------------------------------------------------------------------
# Joint stepping with the scenario re-evaluated at every RK stage.

def pack_world(w: WorldTruth) -> NDArray[np.float64]:
    b, tg = w.body, w.target
    return np.concatenate([b.Q.ravel(), b.p, b.v, tg.Q.ravel(), tg.p, tg.v])


def unpack_world(x: NDArray[np.float64], t: float) -> WorldTruth:
    return WorldTruth(
        RigidState(x[0:9].reshape(3, 3), x[9:12], x[12:15]),
        RigidState(x[15:24].reshape(3, 3), x[24:27], x[27:30]),
        t,
    )


def world_rhs(t: float, x: NDArray[np.float64], scenario: Scenario) -> tuple[NDArray[np.float64], ScenarioInputs]:
    """Derivative of the packed world state, plus the inputs that produced it."""
    w = unpack_world(x, t)
    u = scenario(t, w)
    dQB, dpB, dvB = rigid_rhs(w.body.Q, w.body.v, u.omega_B, u.a_B)
    dQT, dpT, dvT = rigid_rhs(w.target.Q, w.target.v, u.omega_T, u.a_T)
    return np.concatenate([dQB.ravel(), dpB, dvB, dQT.ravel(), dpT, dvT]), u


def reproject_world(x: NDArray[np.float64]) -> NDArray[np.float64]:
    x = x.copy()
    x[0:9] = nearest_rotation(x[0:9].reshape(3, 3)).ravel()
    x[15:24] = nearest_rotation(x[15:24].reshape(3, 3)).ravel()
    return x


def step_world(w: WorldTruth, scenario: Scenario, dt: float) -> WorldTruth:
    """RK4 step of both vehicles, scenario inputs evaluated at each stage."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, t = pack_world(w), w.t
    k1, _ = world_rhs(t, x, scenario)
    k2, _ = world_rhs(t + 0.5 * dt, x + 0.5 * dt * k1, scenario)
    k3, _ = world_rhs(t + 0.5 * dt, x + 0.5 * dt * k2, scenario)
    k4, _ = world_rhs(t + dt, x + dt * k3, scenario)
    x = reproject_world(x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    return unpack_world(x, t + dt)


@dataclass
class TruthTrajectory:
    """Sampled truth and scenario inputs on a uniform time grid.

    This is the trajectory trace consumed by the observability tools.
    """

    t: NDArray[np.float64]
    Q_B: NDArray[np.float64]
    p_B: NDArray[np.float64]
    v_B: NDArray[np.float64]
    Q_T: NDArray[np.float64]
    p_T: NDArray[np.float64]
    v_T: NDArray[np.float64]
    omega_B: NDArray[np.float64]
    a_B: NDArray[np.float64]
    omega_T: NDArray[np.float64]
    a_T: NDArray[np.float64]
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def xi(self) -> NDArray[np.float64]:
        return np.einsum("kji,kj->ki", self.Q_B, self.p_B - self.p_T)

    @property
    def bearing_inertial(self) -> NDArray[np.float64]:
        d = self.p_B - self.p_T
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    @property
    def eta_inertial(self) -> NDArray[np.float64]:
        return self.Q_T[..., :, 2]

    @property
    def a_T_inertial(self) -> NDArray[np.float64]:
        return np.einsum("kij,kj->ki", self.Q_T, self.a_T)

    @property
    def R(self) -> NDArray[np.float64]:
        return np.swapaxes(self.Q_T, -1, -2) @ self.Q_B


def simulate_truth(
    w0: WorldTruth, scenario: Scenario, dt: float, n_steps: int, method: str = "rk4"
) -> TruthTrajectory:
    """Sample the truth every ``dt`` for ``n_steps`` steps, scenario inputs included.

    ``method="rk4"`` chains :func:`step_world`. ``method="dop853"`` integrates
    with scipy's adaptive 8th-order scheme at ``rtol = atol = 1e-12`` and reads
    the samples off its dense output; it is much faster for long fine grids.
    """
    if method == "rk4":
        ws = [w0]
        for _ in range(n_steps):
            ws.append(step_world(ws[-1], scenario, dt))
        X = np.array([pack_world(w) for w in ws])
        t = np.array([w.t for w in ws])
    elif method == "dop853":
        from scipy.integrate import solve_ivp

        t = np.arange(n_steps + 1) * dt
        sol = solve_ivp(
            lambda tt, x: world_rhs(tt, x, scenario)[0],
            (0.0, float(t[-1])),
            pack_world(w0),
            method="DOP853",
            t_eval=t,
            rtol=1e-12,
            atol=1e-12,
        )
        if not sol.success:
            raise RuntimeError(f"truth integration failed: {sol.message}")
        X = sol.y.T.copy()
        for sl in (slice(0, 9), slice(15, 24)):
            X[:, sl] = nearest_rotation(X[:, sl].reshape(-1, 3, 3)).reshape(-1, 9)
    else:
        raise ValueError(f"unknown method {method!r}")

    us = [scenario(float(tk), unpack_world(x, float(tk))) for tk, x in zip(t, X)]
    return TruthTrajectory(
        t=t,
        Q_B=X[:, 0:9].reshape(-1, 3, 3),
        p_B=X[:, 9:12],
        v_B=X[:, 12:15],
        Q_T=X[:, 15:24].reshape(-1, 3, 3),
        p_T=X[:, 24:27],
        v_T=X[:, 27:30],
        omega_B=np.array([u.omega_B for u in us]),
        a_B=np.array([u.a_B for u in us]),
        omega_T=np.array([u.omega_T for u in us]),
        a_T=np.array([u.a_T for u in us]),
    )
