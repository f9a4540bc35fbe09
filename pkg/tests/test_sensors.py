import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import foldnorm

from relnav.geom3 import E3, exp_so3, projector
from relnav.sensors import (
    BearingUndefined,
    NoiseSpec,
    measure_bearing,
    measure_imu,
    measure_normal,
    measure_vision,
    perturb_direction,
)
from relnav.truthsim import (
    RelativeState,
    initial_world,
    relative_state,
    scenario_cascade,
    simulate_truth,
)


def rel(xi=(0, 0, 2), R=None):
    return RelativeState(np.eye(3) if R is None else R, np.asarray(xi, dtype=float), np.zeros(3))


def test_bearing_examples():
    np.testing.assert_array_equal(measure_bearing(rel((0, 0, 2))), [0, 0, 1])
    np.testing.assert_allclose(measure_bearing(rel((3, 4, 0))), [0.6, 0.8, 0])
    with pytest.raises(BearingUndefined):
        measure_bearing(rel((0, 0, 0)))
    with pytest.raises(BearingUndefined):
        measure_bearing(rel((0, 5e-4, 0)))


@given(st.tuples(*[st.floats(-50, 50)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-2))
def test_projector_of_bearing_annihilates_xi(xi):
    xi = np.array(xi)
    y = measure_bearing(rel(xi))
    assert np.linalg.norm(projector(y) @ xi) <= 1e-12 * max(1.0, np.linalg.norm(xi))


def test_normal_examples():
    np.testing.assert_array_equal(measure_normal(rel(R=np.eye(3))), E3)
    np.testing.assert_allclose(measure_normal(rel(R=exp_so3([np.pi / 2, 0, 0]))), [0, 1, 0], atol=1e-15)
    rs = exp_so3(np.random.default_rng(0).normal(size=(100, 3)))
    for R in rs:
        assert np.linalg.norm(measure_normal(rel(R=R))) == pytest.approx(1.0, abs=1e-14)


def test_normal_consistent_with_inertial_normal():
    tr = simulate_truth(initial_world(), scenario_cascade, 1e-2, 300, method="dop853")
    for k in range(0, 301, 30):
        eta = tr.R[k][2, :]
        np.testing.assert_allclose(tr.Q_T[k] @ E3, (tr.Q_T[k] @ tr.R[k]) @ eta, atol=1e-14)


def test_imu_noise_off_is_exact():
    omega, a = np.array([0.1, 0.2, 0.3]), np.array([1.0, -2.0, 9.81])
    r = measure_imu(omega, a, NoiseSpec())
    np.testing.assert_array_equal(r.omega, omega)
    np.testing.assert_array_equal(r.a, a)
    with pytest.raises(ValueError):
        measure_imu(omega, a, NoiseSpec(gyro_std=0.1))


def test_imu_noise_reproducible():
    spec = NoiseSpec(gyro_std=0.01, accel_std=0.1)
    a = [measure_imu(np.zeros(3), np.zeros(3), spec, np.random.default_rng(5)).a for _ in range(2)]
    np.testing.assert_array_equal(a[0], a[1])


def test_imu_noise_statistics():
    spec = NoiseSpec(gyro_std=0.02, accel_std=0.3)
    rng = np.random.default_rng(99)
    n = 100_000
    # batched call: leading axis over samples
    r = measure_imu(np.zeros((n, 3)), np.zeros((n, 3)), spec, rng)
    assert np.all(np.abs(r.omega.std(axis=0) / 0.02 - 1) < 0.05)
    assert np.all(np.abs(r.a.std(axis=0) / 0.3 - 1) < 0.05)


def test_noise_spec_rejects_negative():
    with pytest.raises(ValueError):
        NoiseSpec(bearing_cone_std_deg=-1.0)


def test_perturb_direction_zero_std_is_identity():
    u = np.array([0.6, 0.0, 0.8])
    np.testing.assert_array_equal(perturb_direction(u, 0.0, np.random.default_rng(0)), u)
    with pytest.raises(ValueError):
        perturb_direction(np.array([1.0, 1.0, 0.0]), 1.0, np.random.default_rng(0))


def test_perturb_direction_unit_and_folded_normal_mean():
    rng = np.random.default_rng(7)
    u = np.array([0.0, 0.6, 0.8])
    std = 2.0
    n = 100_000
    out = np.array([perturb_direction(u, std, rng) for _ in range(n)])
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-14)
    ang = np.degrees(np.arccos(np.clip(out @ u, -1, 1)))
    oracle = foldnorm(0.0, scale=std)
    assert abs(ang.mean() - oracle.mean()) < 4 * oracle.std() / np.sqrt(n)
    # tilt directions are spread uniformly around u
    assert np.linalg.norm(np.mean(out - u * (out @ u)[:, None], axis=0)) < 1e-3


def test_noise_free_readings_bitwise_stable():
    r = RelativeState(exp_so3([0.1, 0.2, 0.3]), np.array([1.0, -2.0, 4.0]), np.zeros(3))
    a, b = measure_vision(r), measure_vision(r)
    assert a.bearing.tobytes() == b.bearing.tobytes()
    assert a.normal.tobytes() == b.normal.tobytes()
    w = initial_world()
    assert relative_state(w).xi.tobytes() == relative_state(w).xi.tobytes()
