"""Riccati observer for relative position and velocity.

Two variants share the machinery:

* ``cascade6`` estimates ``(xi, v)``; the attitude estimate enters only
  through the feed-forward term ``-Rhat^T a_T``.
* ``coupled7`` augments the error state with the yaw residual of the
  attitude estimate. Its gain row ``K_theta`` yields the scalar correction
  ``sigma_theta`` handed back to the attitude filter.

Gains are ``K = P C^T D`` with ``P`` driven by the continuous Riccati
equation ``P_dot = A P + P A^T - P C^T D C P + S``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from relnav.geom3 import E3, cross, projector, skew

MODES = ("cascade6", "coupled7")


class RiccatiFault(RuntimeError):
    """The Riccati solution lost positive definiteness or became non-finite."""


@dataclass(frozen=True)
class PvEstimate:
    xi_hat: NDArray[np.float64]
    v_hat: NDArray[np.float64]
    # integrated -sigma_theta, only populated in coupled mode
    theta_channel: float | None = None


@dataclass(frozen=True)
class InnovationSet:
    sigma_xi: NDArray[np.float64]
    sigma_v: NDArray[np.float64]
    sigma_theta: float | None = None


@dataclass(frozen=True)
class RiccatiConfig:
    """Weights of the Riccati equation.

    ``S = diag(s_xi I3, s_v * gamma I3[, s_theta])``; ``gamma`` comes from
    :func:`gamma_schedule` and lets the velocity model weight grow only as the
    attitude estimate settles.
    """

    mode: str = "cascade6"
    D: NDArray[np.float64] = field(default_factory=lambda: 10.0 * np.eye(3))
    s_xi: float = 0.05
    s_v: float = 0.05
    s_theta: float = 0.05
    gamma_floor: float = 1e-2
    P0_scale: float = 2.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        D = np.asarray(self.D, dtype=float)
        if D.shape != (3, 3) or not np.allclose(D, D.T) or np.linalg.eigvalsh(D).min() <= 0:
            raise ValueError("D must be a symmetric positive definite 3x3 matrix")
        if min(self.s_xi, self.s_v, self.s_theta) <= 0:
            raise ValueError("S weights must be positive")
        if self.gamma_floor <= 0:
            raise ValueError("gamma_floor must be positive")

    @property
    def n(self) -> int:
        return 6 if self.mode == "cascade6" else 7

    def P0(self) -> NDArray[np.float64]:
        return self.P0_scale * np.eye(self.n)


def build_A(omega_B: ArrayLike) -> NDArray[np.float64]:
    """``[[-w^x, I], [0, -w^x]]``."""
    W = skew(omega_B)
    A = np.zeros(W.shape[:-2] + (6, 6))
    A[..., :3, :3] = -W
    A[..., 3:, 3:] = -W
    A[..., :3, 3:] = np.eye(3)
    return A


def build_C(y_xi: ArrayLike) -> NDArray[np.float64]:
    Pi = projector(y_xi)
    C = np.zeros(Pi.shape[:-2] + (3, 6))
    C[..., :, :3] = Pi
    return C


def output_y(y_xi: ArrayLike, xi_hat: ArrayLike) -> NDArray[np.float64]:
    """Pseudo-measurement ``-pi_y xi_hat``, which equals ``C x`` for the error ``x``."""
    return -np.einsum("...ij,...j->...i", projector(y_xi), np.asarray(xi_hat, dtype=float))


def gamma_schedule(a_T: ArrayLike, eta_hat: ArrayLike, eta: ArrayLike, floor: float = 1e-2):
    """``|a_T|^2 (1 - eta_hat . eta + floor)``."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    a_T = np.asarray(a_T, dtype=float)
    dot = np.einsum("...i,...i->...", np.asarray(eta_hat, float), np.asarray(eta, float))
    return np.einsum("...i,...i->...", a_T, a_T) * (1.0 - dot + floor)


def build_S(config: RiccatiConfig, gamma) -> NDArray[np.float64]:
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    n = config.n
    S = np.zeros(gamma.shape + (n, n))
    i = np.arange(3)
    S[..., i, i] = config.s_xi
    S[..., i + 3, i + 3] = (config.s_v * gamma)[..., None]
    if n == 7:
        S[..., 6, 6] = config.s_theta
    return S


def riccati_rhs(P, A, C, D, S) -> NDArray[np.float64]:
    PCt = P @ np.swapaxes(C, -1, -2)
    return A @ P + P @ np.swapaxes(A, -1, -2) - PCt @ D @ np.swapaxes(PCt, -1, -2) + S


def symmetrize(P: NDArray[np.float64]) -> NDArray[np.float64]:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def check_spd(P: NDArray[np.float64]) -> NDArray[np.float64]:
    """Return ``lambda_min(P)``; raise :class:`RiccatiFault` if it is not positive."""
    if not np.all(np.isfinite(P)):
        raise RiccatiFault("Riccati solution became non-finite")
    lam = np.linalg.eigvalsh(P)[..., 0]
    if np.any(lam <= 0):
        raise RiccatiFault(f"Riccati solution lost positive definiteness (lambda_min={np.min(lam):.3e})")
    return lam


def riccati_step(P, A, C, D, S, dt: float) -> NDArray[np.float64]:
    """One RK4 step of the CRE with ``A, C, D, S`` held, then symmetrization."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    P = np.asarray(P, dtype=float)
    check_spd(P)
    f = lambda X: riccati_rhs(X, A, C, D, S)  # noqa: E731
    k1 = f(P)
    k2 = f(P + 0.5 * dt * k1)
    k3 = f(P + 0.5 * dt * k2)
    k4 = f(P + dt * k3)
    P = symmetrize(P + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
    check_spd(P)
    return P


def compute_gains(P, C, D) -> NDArray[np.float64]:
    """``K = P C^T D`` with shape ``(n, 3)``."""
    P, C, D = (np.asarray(a, dtype=float) for a in (P, C, D))
    if P.shape[-1] != C.shape[-1] or C.shape[-2] != D.shape[-1]:
        raise ValueError("shape mismatch between P, C and D")
    return P @ np.swapaxes(C, -1, -2) @ D


def split_gains(K: NDArray[np.float64]):
    """``(K_xi, K_v, K_theta)``; ``K_theta`` is ``None`` for the 6-state form."""
    K_theta = K[..., 6, :] if K.shape[-2] == 7 else None
    return K[..., :3, :], K[..., 3:6, :], K_theta


def pv_rhs(xi_hat, v_hat, omega_B, a_B, a_T, Rhat, sigma_xi, sigma_v):
    """Observer dynamics for ``(xi_hat, v_hat)``; broadcasts over leading axes."""
    W = skew(omega_B)
    mv = lambda M, x: np.einsum("...ij,...j->...i", M, x)  # noqa: E731
    d_xi = -mv(W, xi_hat) + v_hat + sigma_xi
    RtaT = np.einsum("...ji,...j->...i", Rhat, np.asarray(a_T, dtype=float))
    d_v = -mv(W, v_hat) + a_B - RtaT + sigma_v
    return d_xi, d_v


def step_pv(
    est: PvEstimate,
    omega_B: ArrayLike,
    a_B: ArrayLike,
    a_T: ArrayLike,
    Rhat: ArrayLike,
    sigma: InnovationSet,
    dt: float,
) -> PvEstimate:
    """RK4 step of the position/velocity observer with inputs and innovations held."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    omega_B, a_B, a_T, Rhat = (np.asarray(a, dtype=float) for a in (omega_B, a_B, a_T, Rhat))
    f = lambda x, v: pv_rhs(x, v, omega_B, a_B, a_T, Rhat, sigma.sigma_xi, sigma.sigma_v)  # noqa: E731
    x0, v0 = np.asarray(est.xi_hat, float), np.asarray(est.v_hat, float)
    k1 = f(x0, v0)
    k2 = f(x0 + 0.5 * dt * k1[0], v0 + 0.5 * dt * k1[1])
    k3 = f(x0 + 0.5 * dt * k2[0], v0 + 0.5 * dt * k2[1])
    k4 = f(x0 + dt * k3[0], v0 + dt * k3[1])
    xi = x0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v = v0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    theta = est.theta_channel
    if theta is not None and sigma.sigma_theta is not None:
        theta = theta - dt * sigma.sigma_theta
    return PvEstimate(xi, v, theta)


def yaw_coupling(Rhat: ArrayLike, a_T: ArrayLike) -> NDArray[np.float64]:
    """``Rhat^T (a_T x e3)``: how a yaw residual leaks into the velocity error."""
    c = cross(np.asarray(a_T, dtype=float), E3)
    return np.einsum("...ji,...j->...i", np.asarray(Rhat, dtype=float), c)


def build_A_theta(omega_B: ArrayLike, Rhat: ArrayLike, a_T: ArrayLike) -> NDArray[np.float64]:
    A6 = build_A(omega_B)
    col = yaw_coupling(Rhat, a_T)
    shape = np.broadcast_shapes(A6.shape[:-2], col.shape[:-1])
    A = np.zeros(shape + (7, 7))
    A[..., :6, :6] = A6
    A[..., 3:6, 6] = col
    return A


def build_C_theta(y_xi: ArrayLike) -> NDArray[np.float64]:
    Pi = projector(y_xi)
    C = np.zeros(Pi.shape[:-2] + (3, 7))
    C[..., :, :3] = Pi
    return C


def step_coupled(
    est: PvEstimate,
    P: ArrayLike,
    Rhat: ArrayLike,
    omega_B: ArrayLike,
    a_B: ArrayLike,
    a_T: ArrayLike,
    bearing: ArrayLike,
    normal: ArrayLike,
    config: RiccatiConfig,
    dt: float,
) -> tuple[PvEstimate, NDArray[np.float64], float]:
    """One step of the 7-state observer with every input held over the step.

    Returns the new estimate, the new Riccati matrix and ``sigma_theta`` for
    :func:`relnav.att_observer.step_attitude_coupled`.
    """
    if config.mode != "coupled7":
        raise ValueError("step_coupled needs a coupled7 Riccati configuration")
    P = np.asarray(P, dtype=float)
    Rhat = np.asarray(Rhat, dtype=float)
    C = build_C_theta(bearing)
    D = np.asarray(config.D, dtype=float)
    y = output_y(bearing, est.xi_hat)
    K = compute_gains(P, C, D)
    K_xi, K_v, K_theta = split_gains(K)
    sigma = InnovationSet(K_xi @ y, K_v @ y, float(K_theta @ y))
    theta0 = 0.0 if est.theta_channel is None else est.theta_channel
    new = step_pv(PvEstimate(est.xi_hat, est.v_hat, theta0), omega_B, a_B, a_T, Rhat, sigma, dt)
    eta_hat = Rhat[2, :]  # Rhat^T e3
    gamma = gamma_schedule(a_T, eta_hat, normal, config.gamma_floor)
    P_new = riccati_step(P, build_A_theta(omega_B, Rhat, a_T), C, D, build_S(config, gamma), dt)
    return new, P_new, sigma.sigma_theta
