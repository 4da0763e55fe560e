import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from mopg.errors import DomainError
from mopg.quaternion import (
    DualQuaternion,
    Quaternion,
    axis_angle_to_quat,
    canonical_sign,
    dq_conj_dual,
    dq_conj_quat,
    dq_conj_total,
    dq_inverse,
    dq_mul,
    dq_to_pose,
    pose_to_dq,
    qconj,
    qinv,
    qmul,
    quat_to_matrix,
    rotate_vectors,
    rotmat_to_quat,
    transform_pose,
)

from conftest import random_unit_quats
from oracles import table_product

finite = st.floats(-10, 10, allow_nan=False)
quats = st.tuples(finite, finite, finite, finite).map(np.array)


def scipy_matrix(q):
    return Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()


class TestMultiply:
    def test_identity(self):
        q = np.array([0.3, -1.2, 2.0, 0.5])
        np.testing.assert_array_equal(qmul([1, 0, 0, 0], q), q)

    def test_i_times_j_is_k(self):
        np.testing.assert_array_equal(qmul([0, 1, 0, 0], [0, 0, 1, 0]), [0, 0, 0, 1])

    def test_worked_product(self):
        np.testing.assert_array_equal(qmul([1, 2, 3, 4], [5, 6, 7, 8]), [-60, 12, 30, 24])

    @given(quats, quats)
    def test_matches_unit_table(self, p, q):
        np.testing.assert_allclose(qmul(p, q), table_product(p, q), atol=1e-9)

    def test_associative_and_noncommutative(self, rng):
        a, b, c = random_unit_quats(rng, 3)
        np.testing.assert_allclose(qmul(qmul(a, b), c), qmul(a, qmul(b, c)), atol=1e-12)
        assert not np.allclose(qmul(a, b), qmul(b, a))

    def test_broadcasts(self, rng):
        a = random_unit_quats(rng, 5)
        b = random_unit_quats(rng, 5)
        out = qmul(a, b)
        for i in range(5):
            np.testing.assert_allclose(out[i], table_product(a[i], b[i]), atol=1e-14)


class TestElementwise:
    def test_conj(self):
        np.testing.assert_array_equal(qconj([1, 2, 3, 4]), [1, -2, -3, -4])

    def test_inverse_law(self):
        np.testing.assert_allclose(qmul([1, 2, 3, 4], qinv([1, 2, 3, 4])), [1, 0, 0, 0], atol=1e-12)

    def test_inverse_of_zero(self):
        with pytest.raises(DomainError):
            qinv([0, 0, 0, 0])

    def test_axis_angle_norm(self):
        assert Quaternion.from_axis_angle(1.3, [1, 2, -1]).norm() == pytest.approx(1.0, abs=1e-15)

    def test_class_algebra(self):
        p = Quaternion(1, 2, 3, 4)
        q = Quaternion(5, 6, 7, 8)
        assert (p * q).tolist() == [-60, 12, 30, 24]
        assert (p + q).tolist() == [6, 8, 10, 12]
        assert p.scale(2).tolist() == [2, 4, 6, 8]
        assert (-p).canonical() == p
        np.testing.assert_allclose((p * p.inverse()).array, [1, 0, 0, 0], atol=1e-12)


class TestRotation:
    def test_identity_rotation(self):
        assert Quaternion.identity().rotate(Quaternion(0, 1, 2, 3)) == Quaternion(0, 1, 2, 3)

    def test_half_turn_about_z(self):
        out = Quaternion(0, 0, 0, 1).rotate(Quaternion(0, 1, 0, 0))
        np.testing.assert_allclose(out.array, [0, -1, 0, 0], atol=1e-15)
        np.testing.assert_allclose(quat_to_matrix([0, 0, 0, 1]) @ [1, 0, 0], [-1, 0, 0], atol=1e-15)

    def test_quarter_turn_about_z(self):
        q = Quaternion.from_axis_angle(math.pi / 2, [0, 0, 1])
        np.testing.assert_allclose(q.rotate(Quaternion(0, 1, 0, 0)).array, [0, 0, 1, 0], atol=1e-15)

    def test_non_unit_rejected(self):
        with pytest.raises(DomainError):
            Quaternion(2, 0, 0, 0).rotate([1, 0, 0])

    def test_non_imaginary_point_rejected(self):
        with pytest.raises(DomainError):
            Quaternion.identity().rotate(Quaternion(1, 1, 0, 0))

    def test_antipodal_equivalence(self, rng):
        q = random_unit_quats(rng, 100)
        v = rng.standard_normal((100, 3))
        np.testing.assert_allclose(rotate_vectors(q, v), rotate_vectors(-q, v), atol=1e-15, rtol=0)

    def test_matches_scipy_matrix(self, rng):
        for q in random_unit_quats(rng, 50):
            np.testing.assert_allclose(quat_to_matrix(q), scipy_matrix(q), atol=1e-14)

    def test_composition(self, rng):
        q1, q2 = random_unit_quats(rng, 2)
        v = rng.standard_normal(3)
        np.testing.assert_allclose(
            rotate_vectors(q1, rotate_vectors(q2, v)), rotate_vectors(qmul(q1, q2), v), atol=1e-12
        )

    def test_length_preserved(self, rng):
        q = random_unit_quats(rng, 20)
        v = rng.standard_normal((20, 3))
        np.testing.assert_allclose(np.linalg.norm(rotate_vectors(q, v), axis=1), np.linalg.norm(v, axis=1))


class TestAxisAngle:
    def test_zero_angle(self):
        np.testing.assert_array_equal(axis_angle_to_quat(0.0, [1, 0, 0]), [1, 0, 0, 0])

    def test_half_turn(self):
        np.testing.assert_allclose(axis_angle_to_quat(math.pi, [0, 0, 1]), [0, 0, 0, 1], atol=1e-12)

    def test_quarter_turn_about_x(self):
        q = axis_angle_to_quat(math.pi / 2, [1, 0, 0])
        np.testing.assert_allclose(q, [math.sqrt(0.5), math.sqrt(0.5), 0, 0], atol=1e-15)
        np.testing.assert_allclose(quat_to_matrix(q), Rotation.from_rotvec([math.pi / 2, 0, 0]).as_matrix(), atol=1e-15)

    def test_zero_axis_rejected(self):
        with pytest.raises(DomainError):
            axis_angle_to_quat(0.5, [0, 0, 0])


class TestRotmatToQuat:
    def test_identity(self):
        np.testing.assert_array_equal(rotmat_to_quat(np.eye(3)), [1, 0, 0, 0])

    def test_half_turn_x_canonical(self):
        np.testing.assert_allclose(rotmat_to_quat(np.diag([1.0, -1, -1])), [0, 1, 0, 0], atol=1e-15)

    @pytest.mark.parametrize("axis", [[0, 1, 0], [0, 0, 1], [1, 1, 1]])
    def test_every_branch(self, axis):
        q = axis_angle_to_quat(math.pi * 0.97, axis)
        out = rotmat_to_quat(quat_to_matrix(q))
        np.testing.assert_allclose(out, canonical_sign(q), atol=1e-12)

    def test_round_trip(self, rng):
        for q in random_unit_quats(rng, 1000):
            out = rotmat_to_quat(quat_to_matrix(q))
            assert min(np.max(np.abs(out - q)), np.max(np.abs(out + q))) <= 1e-9

    def test_non_orthogonal_rejected(self):
        with pytest.raises(DomainError):
            rotmat_to_quat(np.diag([1.0, 1.0, 1.1]))
        with pytest.raises(DomainError):
            rotmat_to_quat(np.diag([1.0, 1.0, -1.0]))


def random_pose(rng):
    return random_unit_quats(rng, 1)[0], rng.uniform(-3, 3, 3)


def homogeneous(q, t):
    T = np.eye(4)
    T[:3, :3] = scipy_matrix(q)
    T[:3, 3] = t
    return T


class TestDualQuaternion:
    def test_identity_product(self, rng):
        dq = pose_to_dq(*random_pose(rng))
        np.testing.assert_array_equal(dq_mul(DualQuaternion.identity().array, dq), dq)

    def test_zero_dual_parts(self, rng):
        q1, q2 = random_unit_quats(rng, 2)
        x = np.stack([q1, np.zeros(4)])
        y = np.stack([q2, np.zeros(4)])
        out = dq_mul(x, y)
        np.testing.assert_array_equal(out[0], qmul(q1, q2))
        np.testing.assert_array_equal(out[1], np.zeros(4))

    def test_composition_matches_matrices(self, rng):
        (q1, t1), (q2, t2) = random_pose(rng), random_pose(rng)
        q3, t3 = dq_to_pose(dq_mul(pose_to_dq(q2, t2), pose_to_dq(q1, t1)))
        T = homogeneous(q2, t2) @ homogeneous(q1, t1)
        np.testing.assert_allclose(quat_to_matrix(q3), T[:3, :3], atol=1e-12)
        np.testing.assert_allclose(t3, T[:3, 3], atol=1e-12)

    def test_dual_part_of_pure_translation(self):
        dq = pose_to_dq([1, 0, 0, 0], [0, 1, 2, 3])
        np.testing.assert_array_equal(dq[1], [0, 0.5, 1, 1.5])

    def test_round_trip(self, rng):
        q, t = random_pose(rng)
        q2, t2 = dq_to_pose(pose_to_dq(q, t))
        np.testing.assert_allclose(q2, q, atol=1e-12)
        np.testing.assert_allclose(t2, t, atol=1e-12)

    def test_point_transform_matches_matrix(self, rng):
        q, t = random_pose(rng)
        p = rng.standard_normal(3)
        dq = DualQuaternion.from_pose(q, t)
        np.testing.assert_allclose(dq.transform_point(p), (homogeneous(q, t) @ np.r_[p, 1])[:3], atol=1e-12)
        np.testing.assert_allclose(dq.to_matrix(), homogeneous(q, t), atol=1e-12)

    def test_non_unit_rotation_rejected(self):
        with pytest.raises(DomainError):
            pose_to_dq([1, 1, 0, 0], [0, 0, 0])

    def test_conjugates(self, rng):
        dq = pose_to_dq(*random_pose(rng))
        ident = DualQuaternion.identity().array
        np.testing.assert_array_equal(dq_conj_quat(ident), ident)
        np.testing.assert_array_equal(dq_conj_dual(dq), np.stack([dq[0], -dq[1]]))
        np.testing.assert_array_equal(dq_conj_total(dq), dq_conj_dual(dq_conj_quat(dq)))

    def test_quat_conjugate_reverses_products(self, rng):
        a = pose_to_dq(*random_pose(rng))
        b = pose_to_dq(*random_pose(rng))
        np.testing.assert_allclose(dq_conj_quat(dq_mul(a, b)), dq_mul(dq_conj_quat(b), dq_conj_quat(a)), atol=1e-12)

    def test_inverse(self, rng):
        ident = DualQuaternion.identity()
        assert ident.inverse() == ident
        dq = DualQuaternion.from_pose(*random_pose(rng))
        np.testing.assert_allclose((dq * dq.inverse()).array, ident.array, atol=1e-12)

    def test_inverse_of_zero_real(self):
        with pytest.raises(DomainError):
            dq_inverse(np.zeros((2, 4)))

    def test_transform_pose_left_multiplies(self, rng):
        p = DualQuaternion.from_pose(*random_pose(rng))
        m = DualQuaternion.from_pose(*random_pose(rng))
        assert transform_pose(p, m) == m * p
        np.testing.assert_array_equal(transform_pose(p.array, m.array), (m * p).array)

    def test_recovered_translation_is_imaginary(self, rng):
        dq = pose_to_dq(*random_pose(rng))
        qt = 2.0 * qmul(dq[1], qconj(dq[0]))
        assert abs(qt[0]) <= 1e-12

    @settings(max_examples=50)
    @given(st.floats(-np.pi, np.pi), st.tuples(finite, finite, finite))
    def test_rotation_only_dq_rotates(self, theta, t):
        q = axis_angle_to_quat(theta, [0.3, -0.4, 0.5])
        _, t2 = dq_to_pose(pose_to_dq(q, np.array(t)))
        np.testing.assert_allclose(t2, t, atol=1e-9)
