"""IMU and monocular-vision measurement synthesis.

The vision model only provides the two cues the observer consumes: the bearing
from camera to platform centre and the platform normal in the body frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from relnav.truthsim import RelativeState

EPS_RANGE = 1e-3


class BearingUndefined(ValueError):
    """Range below the singularity guard: the target has been reached."""


@dataclass(frozen=True)
class ImuReading:
    omega: NDArray[np.float64]
    a: NDArray[np.float64]


@dataclass(frozen=True)
class VisionReading:
    bearing: NDArray[np.float64]
    normal: NDArray[np.float64]


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor noise levels. All zero reproduces the ideal sensors.

    ``gyro_std`` [rad/s] and ``accel_std`` [m/s^2] are per-axis additive
    Gaussian. The cone stds [deg] are the standard deviation of the angle by
    which a direction is tilted, see :func:`perturb_direction`.
    """

    gyro_std: float = 0.0
    accel_std: float = 0.0
    bearing_cone_std_deg: float = 0.0
    normal_cone_std_deg: float = 0.0

    def __post_init__(self):
        for name in ("gyro_std", "accel_std", "bearing_cone_std_deg", "normal_cone_std_deg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def imu_noisy(self) -> bool:
        return self.gyro_std > 0 or self.accel_std > 0

    @property
    def vision_noisy(self) -> bool:
        return self.bearing_cone_std_deg > 0 or self.normal_cone_std_deg > 0


def bearing_of(xi: ArrayLike, eps_range: float = EPS_RANGE) -> NDArray[np.float64]:
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1, keepdims=True)
    if np.any(r < eps_range):
        raise BearingUndefined(f"range below {eps_range} m, bearing undefined")
    return xi / r


def measure_bearing(rel: RelativeState, eps_range: float = EPS_RANGE) -> NDArray[np.float64]:
    """Unit line of sight ``xi / |xi|`` in the body frame."""
    return bearing_of(rel.xi, eps_range)


def normal_of(R: ArrayLike) -> NDArray[np.float64]:
    # R^T e3 is the third row of R
    return np.array(np.asarray(R, dtype=float)[..., 2, :])


def measure_normal(rel: RelativeState) -> NDArray[np.float64]:
    """Platform normal ``R^T e3`` seen from the body frame."""
    return normal_of(rel.R)


def measure_imu(
    omega: ArrayLike,
    a: ArrayLike,
    noise: NoiseSpec | None = None,
    rng: np.random.Generator | None = None,
) -> ImuReading:
    """Package true rates and specific acceleration as a reading, optionally noisy."""
    omega = np.array(omega, dtype=float)
    a = np.array(a, dtype=float)
    if noise is not None and noise.imu_noisy:
        if rng is None:
            raise ValueError("a random generator is required for noisy readings")
        omega = omega + noise.gyro_std * rng.standard_normal(omega.shape)
        a = a + noise.accel_std * rng.standard_normal(a.shape)
    return ImuReading(omega, a)


def tangent_basis(u: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Two unit vectors completing ``u`` to an orthonormal frame."""
    u = np.asarray(u, dtype=float)
    # cross with the axis least aligned with u
    helper = np.zeros_like(u)
    idx = np.argmin(np.abs(u), axis=-1)
    np.put_along_axis(helper, idx[..., None], 1.0, axis=-1)
    t1 = np.cross(u, helper)
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(u, t1)
    return t1, t2


def tilt_direction(u: ArrayLike, angle: ArrayLike, azimuth: ArrayLike) -> NDArray[np.float64]:
    """Rotate unit ``u`` by ``angle`` [rad] towards the tangent direction at ``azimuth``."""
    u = np.asarray(u, dtype=float)
    angle = np.asarray(angle, dtype=float)[..., None]
    azimuth = np.asarray(azimuth, dtype=float)[..., None]
    t1, t2 = tangent_basis(u)
    d = np.cos(azimuth) * t1 + np.sin(azimuth) * t2
    out = np.cos(angle) * u + np.sin(angle) * d
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def perturb_direction(u: ArrayLike, cone_std_deg: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """Tilt ``u`` by a random angle ``|N(0, std)|`` in a uniformly random direction.

    The tilt angle therefore follows a folded normal distribution with mean
    ``std * sqrt(2/pi)``.
    """
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("perturb_direction expects a unit vector")
    if cone_std_deg == 0:
        return u.copy()
    angle = abs(rng.normal(0.0, np.radians(cone_std_deg)))
    azimuth = rng.uniform(0.0, 2 * np.pi)
    return tilt_direction(u, angle, azimuth)


def measure_vision(rel: RelativeState, eps_range: float = EPS_RANGE) -> VisionReading:
    return VisionReading(measure_bearing(rel, eps_range), measure_normal(rel))

