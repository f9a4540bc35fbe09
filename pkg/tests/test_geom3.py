import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import foldnorm

from relnav import geom3
from relnav.geom3 import (
    E1,
    E2,
    E3,
    attitude_trace_error,
    exp_so3,
    is_rotation,
    log_so3,
    nearest_rotation,
    projector,
    random_rotation,
    random_rotation_vector,
    skew,
    vex,
)

finite = st.floats(-10, 10, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def test_skew_known_matrix():
    np.testing.assert_array_equal(skew([1, 2, 3]), [[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    np.testing.assert_array_equal(skew([0, 0, 0]), np.zeros((3, 3)))
    np.testing.assert_array_equal(skew(E3) @ E1, E2)


@given(vec3, vec3)
def test_skew_is_cross_product(v, w):
    np.testing.assert_allclose(skew(v) @ w, np.cross(v, w), atol=1e-12)
    np.testing.assert_allclose(geom3.cross(v, w), np.cross(v, w), atol=1e-12)
    S = skew(v)
    np.testing.assert_array_equal(S, -S.T)


def test_skew_broadcasts():
    v = np.random.default_rng(0).normal(size=(4, 5, 3))
    S = skew(v)
    assert S.shape == (4, 5, 3, 3)
    np.testing.assert_array_equal(S[2, 3], skew(v[2, 3]))


def test_vex():
    np.testing.assert_array_equal(vex(skew([1, 2, 3])), [1, 2, 3])
    np.testing.assert_array_equal(vex(np.zeros((3, 3))), np.zeros(3))
    with pytest.raises(ValueError):
        vex(np.diag([1.0, 2.0, 3.0]))


def test_exp_so3_examples():
    np.testing.assert_array_equal(exp_so3([0, 0, 0]), np.eye(3))
    np.testing.assert_allclose(exp_so3([0, 0, np.pi / 2]), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_exp_so3_against_truncated_series():
    # 20-term power series of the matrix exponential
    w = np.array([0.3, -0.2, 0.5])
    W = skew(w)
    term, series = np.eye(3), np.eye(3)
    for k in range(1, 20):
        term = term @ W / k
        series = series + term
    assert np.linalg.norm(exp_so3(w) - series) <= 1e-12


@pytest.mark.parametrize("scale", [0.0, 1e-9, 5e-7, 2e-6, 1e-3, 1.0, 3.0])
def test_exp_so3_matches_expm_across_series_switch(scale):
    w = scale * np.array([0.6, -0.48, 0.64])
    np.testing.assert_allclose(exp_so3(w), expm(skew(w)), rtol=0, atol=1e-14)


@given(vec3)
def test_exp_so3_orthonormal_and_inverse(w):
    R = exp_so3(w)
    assert is_rotation(R)
    np.testing.assert_allclose(exp_so3(w).T, exp_so3(-w), atol=1e-12)


def test_exp_transpose_is_exp_of_negative_100_samples():
    w = np.random.default_rng(1).normal(size=(100, 3))
    np.testing.assert_allclose(np.swapaxes(exp_so3(w), -1, -2), exp_so3(-w), atol=1e-13)


def test_log_so3():
    np.testing.assert_array_equal(log_so3(np.eye(3)), np.zeros(3))
    np.testing.assert_allclose(log_so3(exp_so3([0, 0, 0.8])), [0, 0, 0.8], atol=1e-14)
    with pytest.raises(ValueError):
        log_so3(np.diag([1.0, -1.0, -1.0]))


@settings(max_examples=200)
@given(st.tuples(finite, finite, finite).filter(lambda w: 1e-9 < np.linalg.norm(w)))
def test_log_exp_round_trip(w):
    w = np.array(w)
    # map into the principal ball, away from the half-turn
    angle = np.linalg.norm(w)
    w = w / angle * np.mod(angle, np.pi - 1e-6)
    R = exp_so3(w)
    if np.trace(R) <= -1 + 1e-9:
        return
    np.testing.assert_allclose(exp_so3(log_so3(R)), R, atol=1e-9)


def test_log_near_half_turn():
    w = (np.pi - 5e-4) * np.array([0.0, 0.6, 0.8])
    np.testing.assert_allclose(log_so3(exp_so3(w)), w, atol=1e-8)


def test_projector():
    np.testing.assert_array_equal(projector(E3), np.diag([1.0, 1.0, 0.0]))
    u = np.ones(3) / np.sqrt(3)
    P = projector(u)
    np.testing.assert_allclose(P @ u, 0, atol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(P), [0, 1, 1], atol=1e-15)
    with pytest.raises(ValueError):
        projector([1.0, 1.0, 0.0])


@given(vec3.filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_projector_properties(v):
    u = v / np.linalg.norm(v)
    P = projector(u)
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    np.testing.assert_allclose(P, P.T, atol=0)
    np.testing.assert_allclose(P @ u, 0, atol=1e-12)


def test_nearest_rotation():
    M = np.eye(3) + 1e-8 * np.random.default_rng(2).normal(size=(3, 3))
    R = nearest_rotation(M)
    assert np.linalg.norm(R.T @ R - np.eye(3)) <= 1e-12
    Q = exp_so3([0.3, -1.0, 2.0])
    np.testing.assert_allclose(nearest_rotation(Q), Q, atol=1e-15)
    with pytest.raises(ValueError):
        nearest_rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        nearest_rotation(np.full((3, 3), np.nan))


def test_nearest_rotation_is_closest_in_frobenius():
    rng = np.random.default_rng(3)
    M = exp_so3([0.2, 0.1, -0.4]) + 0.05 * rng.normal(size=(3, 3))
    R = nearest_rotation(M)
    for _ in range(200):
        other = exp_so3(rng.normal(scale=0.05, size=3)) @ R
        assert np.linalg.norm(M - R) <= np.linalg.norm(M - other) + 1e-12


def test_attitude_trace_error_examples():
    assert attitude_trace_error(np.eye(3), np.eye(3)) == 0
    assert attitude_trace_error(np.diag([-1.0, -1.0, 1.0]), np.eye(3)) == pytest.approx(4)
    assert attitude_trace_error(exp_so3([0, 0, np.pi / 2]), np.eye(3)) == pytest.approx(2)


@given(vec3, vec3)
def test_attitude_trace_error_conjugation_invariant(a, b):
    Rt = exp_so3(a)
    Q = exp_so3(b)
    e = attitude_trace_error(Rt, np.eye(3))
    assert 0 - 1e-12 <= e <= 4 + 1e-12
    assert attitude_trace_error(Q @ Rt @ Q.T, np.eye(3)) == pytest.approx(e, abs=1e-12)


def test_twist_angle_recovers_rotation_about_axis():
    for th in np.linspace(-3.0, 3.0, 13):
        assert geom3.twist_angle(exp_so3(th * E3)) == pytest.approx(th, abs=1e-12)
    # a pure tilt has no twist
    assert geom3.twist_angle(exp_so3([0.4, -0.2, 0.0])) == pytest.approx(0, abs=1e-12)


def test_random_rotation_zero_spread_is_identity():
    np.testing.assert_array_equal(random_rotation(0.0, 0.0, np.random.default_rng(0)), np.eye(3))


def test_random_rotation_deterministic_and_orthonormal():
    a = random_rotation(45.0, 30.0, np.random.default_rng(11))
    b = random_rotation(45.0, 30.0, np.random.default_rng(11))
    np.testing.assert_array_equal(a, b)
    assert is_rotation(a)
    with pytest.raises(ValueError):
        random_rotation(45.0, -1.0, np.random.default_rng(0))


def test_random_rotation_vector_magnitude_statistics():
    # per-axis |component| is |N(45, 30)|, i.e. a folded normal; its mean is the oracle
    rng = np.random.default_rng(2024)
    mags = np.abs(np.array([random_rotation_vector(45.0, 30.0, rng) for _ in range(10_000)]))
    expected = foldnorm(45.0 / 30.0, scale=30.0).mean()
    sigma = foldnorm(45.0 / 30.0, scale=30.0).std() / np.sqrt(10_000)
    assert np.all(np.abs(mags.mean(axis=0) - expected) < 3 * sigma)
    # signs are balanced
    signs = np.sign(np.array([random_rotation_vector(45.0, 30.0, rng) for _ in range(4000)]))
    assert np.all(np.abs(signs.mean(axis=0)) < 3 / np.sqrt(4000))


def test_first_order_expansion_bound():
    for th in np.linspace(-0.5, 0.5, 100):
        assert np.linalg.norm(exp_so3(th * E3) - np.eye(3) - th * skew(E3)) <= th**2
