"""Complementary filter on SO(3) for the relative attitude.

The filter only sees the platform normal, so on its own it recovers the
tilt of the platform. The full attitude follows either from a persistently
exciting normal or, in the coupled design, from the extra scalar correction
``sigma_theta`` about ``e3`` supplied by the 7-state Riccati observer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from relnav.geom3 import E3, cross, nearest_rotation, skew, twist_angle


@dataclass(frozen=True)
class AttConfig:
    k_R: float = 1.5

    def __post_init__(self):
        if not self.k_R > 0:
            raise ValueError("k_R must be positive")


@dataclass(frozen=True)
class AttEstimate:
    Rhat: NDArray[np.float64]


def sigma_R(Rhat: ArrayLike, eta: ArrayLike, k_R: float) -> NDArray[np.float64]:
    """Innovation ``2 k_R (Rhat eta) x e3``; broadcasts over leading axes."""
    if not k_R > 0:
        raise ValueError("k_R must be positive")
    Rhat = np.asarray(Rhat, dtype=float)
    eta_est = np.einsum("...ij,...j->...i", Rhat, np.asarray(eta, dtype=float))
    return 2.0 * k_R * cross(eta_est, E3)


def attitude_rhs(
    Rhat: NDArray[np.float64], omega_B: ArrayLike, omega_T: ArrayLike, sigma: ArrayLike
) -> NDArray[np.float64]:
    """``-omega_T^x Rhat + Rhat omega_B^x + sigma^x Rhat``."""
    return (skew(sigma) - skew(omega_T)) @ Rhat + Rhat @ skew(omega_B)


def _rk4_attitude(Rhat, omega_B, omega_T, sigma, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    for a in (Rhat, omega_B, omega_T, sigma):
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input to attitude step")
    f = lambda R: attitude_rhs(R, omega_B, omega_T, sigma)  # noqa: E731
    k1 = f(Rhat)
    k2 = f(Rhat + 0.5 * dt * k1)
    k3 = f(Rhat + 0.5 * dt * k2)
    k4 = f(Rhat + dt * k3)
    return nearest_rotation(Rhat + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def step_attitude(
    est: AttEstimate, omega_B: ArrayLike, omega_T: ArrayLike, sigma: ArrayLike, dt: float
) -> AttEstimate:
    """Advance the estimate one RK4 step with rates and innovation held constant."""
    return AttEstimate(_rk4_attitude(np.asarray(est.Rhat, float), omega_B, omega_T, sigma, dt))


def coupled_innovation(sigma_R: ArrayLike, sigma_theta: ArrayLike) -> NDArray[np.float64]:
    """Total correction ``sigma_R - sigma_theta e3``."""
    return np.asarray(sigma_R, float) - np.asarray(sigma_theta, float)[..., None] * E3


def step_attitude_coupled(
    est: AttEstimate,
    omega_B: ArrayLike,
    omega_T: ArrayLike,
    sigma_R: ArrayLike,
    sigma_theta: float,
    dt: float,
) -> AttEstimate:
    return step_attitude(est, omega_B, omega_T, coupled_innovation(sigma_R, sigma_theta), dt)


def normal_error(Rhat: ArrayLike, eta: ArrayLike) -> NDArray[np.float64] | float:
    """``1 - e3^T Rhat eta``, in [0, 2]."""
    Rhat = np.asarray(Rhat, dtype=float)
    return 1.0 - np.einsum("...j,...j->...", Rhat[..., 2, :], np.asarray(eta, dtype=float))


def lyapunov_value(Rhat: ArrayLike, R: ArrayLike) -> NDArray[np.float64] | float:
    """``tr(I - Rhat R^T)``; non-increasing along the filter's trajectories."""
    return 3.0 - np.sum(np.asarray(Rhat) * np.asarray(R), axis=(-2, -1))


def yaw_error(Rhat: ArrayLike, R: ArrayLike) -> NDArray[np.float64] | float:
    """Residual rotation of ``Rhat R^T`` about ``e3``; diagnostic only.

    Meaningful once the normal has converged, i.e. ``Rhat R^T e3 ~ e3``.
    """
    Rhat = np.asarray(Rhat, dtype=float)
    R = np.asarray(R, dtype=float)
    return twist_angle(Rhat @ np.swapaxes(R, -1, -2), E3)
