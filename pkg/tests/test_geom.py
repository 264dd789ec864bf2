import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from zftlearn.errors import DegenerateQuaternion, OutOfDomain
from zftlearn.geom import (Pose, pose_error, quat_angle, quat_canonical,
                           quat_conj, quat_exp, quat_log, quat_mul, quat_pow,
                           quat_rotate, rotation_angle, slerp)


def random_unit_quats(n, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def scipy_rotvec(q_wxyz):
    # scipy uses xyzw ordering
    w, x, y, z = q_wxyz
    return Rotation.from_quat([x, y, z, w]).as_rotvec()


class TestCanonical:
    def test_identity(self):
        np.testing.assert_array_equal(
            quat_canonical([1, 0, 0, 0]), [1.0, 0.0, 0.0, 0.0])

    def test_double_cover(self):
        np.testing.assert_array_equal(
            quat_canonical([-1, 0, 0, 0]), [1.0, 0.0, 0.0, 0.0])

    def test_normalizes_and_picks_hemisphere(self):
        np.testing.assert_allclose(
            quat_canonical([0, 0, 0, 2]), [0.0, 0.0, 0.0, 1.0])
        np.testing.assert_allclose(
            quat_canonical([0, 0, 0, -2]), [0.0, 0.0, 0.0, 1.0])

    def test_w_zero_first_nonzero_positive(self):
        q = quat_canonical([0.0, -0.6, 0.8, 0.0])
        assert q[1] > 0

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateQuaternion):
            quat_canonical([0.0, 0.0, 0.0, 1e-13])

    def test_batched(self):
        q = quat_canonical(np.array([[-1.0, 0, 0, 0], [0, 0, 0, 2.0]]))
        assert q.shape == (2, 4)
        np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0)


class TestLogExp:
    def test_log_identity(self):
        np.testing.assert_array_equal(quat_log([1, 0, 0, 0]), np.zeros(3))

    def test_log_quarter_turn_matches_matrix_log(self):
        q = np.array([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)])
        np.testing.assert_allclose(quat_log(q), [0, 0, np.pi / 2], atol=1e-12)
        np.testing.assert_allclose(quat_log(q), scipy_rotvec(q), atol=1e-12)

    def test_exp_identity(self):
        np.testing.assert_array_equal(quat_exp(np.zeros(3)), [1, 0, 0, 0])

    def test_exp_closed_form(self):
        np.testing.assert_allclose(
            quat_exp([0, 0, np.pi / 2]),
            [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)], atol=1e-15)
        np.testing.assert_allclose(
            quat_exp([np.pi, 0, 0]), [0, 1, 0, 0], atol=1e-12)

    def test_exp_out_of_domain(self):
        with pytest.raises(OutOfDomain):
            quat_exp([np.pi + 1e-6, 0, 0])

    def test_round_trip_small(self):
        v = np.array([0.1, 0.0, 0.0])
        np.testing.assert_allclose(quat_log(quat_exp(v)), v, atol=1e-12)

    def test_round_trip_bulk(self):
        q = random_unit_quats(10_000, seed=1)
        back = quat_exp(quat_log(q))
        err = np.linalg.norm(back - quat_canonical(q), axis=1)
        assert err.max() < 1e-9

    def test_log_matches_scipy_bulk(self):
        q = quat_canonical(random_unit_quats(500, seed=2))
        ours = quat_log(q)
        ref = np.array([scipy_rotvec(row) for row in q])
        np.testing.assert_allclose(ours, ref, atol=1e-9)

    def test_theta_near_pi(self):
        axis = np.array([0.6, 0.8, 0.0])
        v = axis * (np.pi - 1e-7)
        q = quat_exp(v)
        np.testing.assert_allclose(quat_log(q), v, atol=1e-9)


class TestSlerp:
    def test_endpoints(self):
        qa = quat_canonical([1.0, 0, 0, 0])
        qb = quat_canonical([np.cos(0.7), 0, np.sin(0.7), 0])
        np.testing.assert_allclose(slerp(qa, qb, 0.0), qa, atol=1e-15)
        np.testing.assert_allclose(slerp(qa, qb, 1.0), qb, atol=1e-15)

    def test_halfway_matches_log_oracle(self):
        qa = np.array([1.0, 0, 0, 0])
        qb = quat_exp([0, 0, np.pi / 2])
        got = slerp(qa, qb, 0.5)
        # exp(0.5 log(qb qa^-1)) qa
        ref = quat_mul(quat_exp(0.5 * quat_log(quat_mul(qb, quat_conj(qa)))), qa)
        np.testing.assert_allclose(got, ref, atol=1e-12)
        np.testing.assert_allclose(got, quat_exp([0, 0, np.pi / 4]), atol=1e-12)

    def test_unit_norm_bulk(self):
        rng = np.random.default_rng(3)
        qa = quat_canonical(random_unit_quats(10_000, seed=4))
        qb = quat_canonical(random_unit_quats(10_000, seed=5))
        mu = rng.uniform(0, 1, size=10_000)
        out = slerp(qa, qb, mu)
        assert np.abs(np.linalg.norm(out, axis=1) - 1.0).max() < 1e-12

    def test_geodesic_linearity(self):
        rng = np.random.default_rng(6)
        qa = quat_canonical(random_unit_quats(2000, seed=7))
        qb = quat_canonical(random_unit_quats(2000, seed=8))
        omega = quat_angle(qa, qb)
        keep = (omega > 1e-4) & (omega < np.pi / 2 - 1e-4)
        qa, qb, omega = qa[keep], qb[keep], omega[keep]
        mu = rng.uniform(0.05, 0.95, size=qa.shape[0])
        out = slerp(qa, qb, mu)
        ratio = quat_angle(qa, out) / omega
        np.testing.assert_allclose(ratio, mu, atol=1e-9)

    def test_shortest_path_on_antipodal_representatives(self):
        qa = np.array([1.0, 0, 0, 0])
        qb = quat_exp([0, 0, 0.4])
        near = slerp(qa, -qb, 0.5)
        ref = slerp(qa, qb, 0.5)
        assert min(np.linalg.norm(near - ref), np.linalg.norm(near + ref)) < 1e-12

    def test_tiny_angle_falls_back_to_nlerp(self):
        qa = quat_canonical([1.0, 0, 0, 0])
        qb = quat_exp([0, 0, 1e-9])
        out = slerp(qa, qb, 0.3)
        assert np.isfinite(out).all()
        np.testing.assert_allclose(np.linalg.norm(out), 1.0, atol=1e-15)


class TestPow:
    def test_pow_composes(self):
        q = quat_exp([0.3, -0.2, 0.5])
        half = quat_pow(q, 0.5)
        np.testing.assert_allclose(quat_mul(half, half), q, atol=1e-12)

    def test_pow_inverse(self):
        q = quat_exp([0.1, 0.7, -0.3])
        np.testing.assert_allclose(
            quat_mul(quat_pow(q, -1.0), q), [1, 0, 0, 0], atol=1e-12)


class TestPoseError:
    def test_identical_poses(self):
        pose = Pose(np.array([0.1, -0.2, 0.3]), quat_exp([0.2, 0.1, -0.4]))
        err = pose_error(pose, pose)
        np.testing.assert_allclose(err.e_t, 0.0, atol=1e-15)
        np.testing.assert_allclose(err.e_r, 0.0, atol=1e-12)

    def test_translation_only(self):
        a = Pose(np.array([0.01, 0, 0]), np.array([1.0, 0, 0, 0]))
        b = Pose(np.zeros(3), np.array([1.0, 0, 0, 0]))
        err = pose_error(a, b)
        np.testing.assert_allclose(err.e_t, [0.01, 0, 0])

    def test_rotation_sign_convention(self):
        observed = Pose(np.zeros(3), quat_exp([0, 0, np.pi / 2]))
        equilibrium = Pose(np.zeros(3), np.array([1.0, 0, 0, 0]))
        err = pose_error(observed, equilibrium)
        np.testing.assert_allclose(err.e_r, [0, 0, -np.pi / 2], atol=1e-12)

    def test_magnitude_bounded_by_pi(self):
        q = quat_canonical(random_unit_quats(200, seed=9))
        for row in q:
            err = pose_error(Pose(np.zeros(3), row),
                             Pose(np.zeros(3), [1.0, 0, 0, 0]))
            assert np.linalg.norm(err.e_r) <= np.pi + 1e-12


class TestRotate:
    def test_matches_scipy(self):
        q = quat_canonical(random_unit_quats(100, seed=10))
        v = np.random.default_rng(11).normal(size=(100, 3))
        ours = quat_rotate(q, v)
        for i in range(100):
            w, x, y, z = q[i]
            ref = Rotation.from_quat([x, y, z, w]).apply(v[i])
            np.testing.assert_allclose(ours[i], ref, atol=1e-12)

    def test_rotation_angle(self):
        q = quat_exp([0, 0.9, 0])
        assert abs(rotation_angle(q) - 0.9) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_round_trip_property(seed):
    q = quat_canonical(random_unit_quats(1, seed=seed)[0])
    np.testing.assert_allclose(quat_exp(quat_log(q)), q, atol=1e-9)
