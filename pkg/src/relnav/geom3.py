"""SO(3) and R^3 primitives.

Most functions broadcast over leading axes, so a stack of vectors with shape
``(..., 3)`` maps to a stack of matrices with shape ``(..., 3, 3)``. This is
what lets the Monte Carlo engine step many runs at once.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

G = 9.81
E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])
I3 = np.eye(3)

SMALL_ANGLE = 1e-6
ORTHO_TOL = 1e-9


def skew(v: ArrayLike) -> NDArray[np.float64]:
    """Return the cross-product matrix of ``v`` so that ``skew(v) @ w == v x w``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def cross(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Broadcasting cross product over the last axis (cheaper than ``np.cross``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def vex(M: ArrayLike, tol: float = ORTHO_TOL) -> NDArray[np.float64]:
    """Inverse of :func:`skew`.

    Raises
    ------
    ValueError
        If ``M`` deviates from antisymmetry by more than ``tol`` (max abs entry
        of ``M + M^T``).
    """
    M = np.asarray(M, dtype=float)
    sym = M + np.swapaxes(M, -1, -2)
    if np.max(np.abs(sym), initial=0.0) > tol:
        raise ValueError("vex expects an antisymmetric matrix")
    A = 0.5 * (M - np.swapaxes(M, -1, -2))
    return np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)


def exp_so3(w: ArrayLike) -> NDArray[np.float64]:
    """Rodrigues' formula for the exponential of ``skew(w)``.

    Below ``SMALL_ANGLE`` the coefficients ``sin(t)/t`` and ``(1 - cos(t))/t^2``
    are replaced by their second-order series.
    """
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=-1)
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(t) / t)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(t)) / (t * t))
    W = skew(w)
    return I3 + a[..., None, None] * W + b[..., None, None] * (W @ W)


def log_so3(R: ArrayLike) -> NDArray[np.float64]:
    """Rotation vector of a single rotation matrix (principal branch).

    Raises
    ------
    ValueError
        When ``tr(R) <= -1 + 1e-9``: the axis of a half-turn is only defined up
        to sign.
    """
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr <= -1.0 + ORTHO_TOL:
        raise ValueError("log_so3 undefined for rotations by pi (tr(R) = -1)")
    cos_t = np.clip(0.5 * (tr - 1.0), -1.0, 1.0)
    theta = float(np.arccos(cos_t))
    A = 0.5 * (R - R.T)
    s = np.array([A[2, 1], A[0, 2], A[1, 0]])  # sin(theta) * axis
    if theta < SMALL_ANGLE:
        return s * (1.0 + theta * theta / 6.0)
    if theta < np.pi - 1e-3:
        return s * (theta / np.sin(theta))
    # near pi, sin(theta) is ill-conditioned; read the axis off the symmetric part
    B = 0.5 * (R + R.T) - cos_t * I3
    i = int(np.argmax(np.diag(B)))
    axis = B[:, i] / np.linalg.norm(B[:, i])
    if axis @ s < 0.0:
        axis = -axis
    return theta * axis


def projector(u: ArrayLike) -> NDArray[np.float64]:
    """Orthogonal projector ``I - u u^T`` onto the plane normal to unit ``u``."""
    u = np.asarray(u, dtype=float)
    if np.max(np.abs(np.linalg.norm(u, axis=-1) - 1.0), initial=0.0) > ORTHO_TOL:
        raise ValueError("projector expects a unit vector")
    return I3 - u[..., :, None] * u[..., None, :]


def nearest_rotation(M: ArrayLike) -> NDArray[np.float64]:
    """Polar-factor projection of ``M`` onto SO(3).

    Uses the SVD ``M = U S V^T`` and returns ``U V^T``, the closest rotation in
    Frobenius norm. Exact rotations are fixed points.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("nearest_rotation got non-finite entries")
    if np.any(np.linalg.det(M) <= 0.0):
        raise ValueError("nearest_rotation requires det(M) > 0")
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def attitude_trace_error(Rhat: ArrayLike, R: ArrayLike) -> NDArray[np.float64] | float:
    """``tr(I - Rhat R^T)``, in [0, 4]."""
    Rhat = np.asarray(Rhat, dtype=float)
    R = np.asarray(R, dtype=float)
    return 3.0 - np.sum(Rhat * R, axis=(-2, -1))


def twist_angle(R: ArrayLike, axis: ArrayLike = E3) -> NDArray[np.float64] | float:
    """Angle of the twist of ``R`` about ``axis`` in a swing-twist split.

    For ``R = exp(theta * skew(axis))`` this returns ``theta`` wrapped to
    (-pi, pi]. It is only a meaningful error coordinate once the swing part
    (the tilt of ``axis``) has converged.
    """
    R = np.asarray(R, dtype=float)
    a = np.asarray(axis, dtype=float)
    tr = np.trace(R, axis1=-2, axis2=-1)
    v = np.stack(
        [R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]],
        axis=-1,
    )
    # quaternion (w, q) scaled by 4w: (1 + tr, v)
    return 2.0 * np.arctan2(v @ a, 1.0 + tr)


def random_rotation_vector(
    mean_deg: float, std_deg: float, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Rotation vector in degrees: per-axis Normal(mean, std) with a random sign."""
    if std_deg < 0:
        raise ValueError("std_deg must be non-negative")
    mag = rng.normal(mean_deg, std_deg, size=3)
    sign = rng.choice(np.array([-1.0, 1.0]), size=3)
    return mag * sign


def random_rotation(mean_deg: float, std_deg: float, rng: np.random.Generator) -> NDArray[np.float64]:
    """Random attitude error drawn with :func:`random_rotation_vector`."""
    return exp_so3(np.radians(random_rotation_vector(mean_deg, std_deg, rng)))


def is_rotation(R: ArrayLike, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    ortho = np.linalg.norm(np.swapaxes(R, -1, -2) @ R - I3, axis=(-2, -1))
    det = np.linalg.det(R)
    return bool(np.all(ortho <= tol) and np.all(np.abs(det - 1.0) <= tol))
