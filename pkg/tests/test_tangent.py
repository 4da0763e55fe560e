import math

import numpy as np
import pytest

from mopg.errors import DomainError, ProjectionError
from mopg.quaternion import dq_mul, dq_to_pose, pose_to_dq, qmul
from mopg.tangent import (
    TangentSpace,
    canonical_basis,
    change_jacobian,
    change_tangent_space,
    composition_jacobian,
    jacobian,
    pose_transformation_ts,
    same_chart,
    sphere_to_tangent,
    sphere_to_tangent_masked,
    tangent_to_sphere,
)

from conftest import random_chart, random_unit_quats


class TestCanonicalBasis:
    def test_identity_point(self):
        np.testing.assert_array_equal(canonical_basis(np.array([1.0, 0, 0, 0])), np.eye(4)[:, 1:])

    def test_i_point(self):
        B = canonical_basis(np.array([0.0, 1, 0, 0]))
        np.testing.assert_array_equal(B[:, 0], [-1, 0, 0, 0])
        np.testing.assert_array_equal(B[:, 1], [0, 0, 0, 1])
        np.testing.assert_array_equal(B[:, 2], [0, 0, -1, 0])

    def test_orthogonality(self, rng):
        for q in random_unit_quats(rng, 200):
            Q = np.column_stack([q, canonical_basis(q)])
            assert np.max(np.abs(Q.T @ Q - np.eye(4))) <= 1e-12

    def test_non_unit_rejected(self):
        with pytest.raises(DomainError):
            canonical_basis(np.array([1.0, 1, 0, 0]))

    def test_equivariance(self, rng):
        for qc, q0 in zip(random_unit_quats(rng, 50), random_unit_quats(rng, 50)):
            lhs = canonical_basis(qmul(qc, q0))
            rhs = qmul(qc, canonical_basis(q0).T).T
            assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_custom_basis_validated(self):
        with pytest.raises(DomainError):
            TangentSpace([1, 0, 0, 0], np.ones((4, 3)))
        ts = TangentSpace([1, 0, 0, 0], np.eye(4)[:, [2, 1, 3]])
        assert not ts.is_canonical()


class TestCentralProjection:
    def test_origin_maps_to_point(self, rng):
        ts = random_chart(rng)
        np.testing.assert_allclose(tangent_to_sphere(ts, np.zeros(6))[:4], ts.point, atol=1e-15)

    def test_closed_form_at_identity(self, rng):
        r = rng.standard_normal(3)
        out = tangent_to_sphere(TangentSpace.identity(), np.r_[r, 1, 2, 3])
        np.testing.assert_allclose(out[:4], np.r_[1, r] / math.sqrt(1 + r @ r), atol=1e-15)

    def test_inverse_closed_form(self):
        x = sphere_to_tangent(TangentSpace.identity(), np.r_[0.5, 0.5, 0.5, 0.5, 0, 0, 0])
        np.testing.assert_allclose(x[:3], [1, 1, 1], atol=1e-15)

    def test_point_and_antipode_map_to_zero(self, rng):
        ts = random_chart(rng)
        np.testing.assert_allclose(sphere_to_tangent(ts, np.r_[ts.point, 0, 0, 0])[:3], 0, atol=1e-15)
        np.testing.assert_allclose(sphere_to_tangent(ts, np.r_[-ts.point, 0, 0, 0])[:3], 0, atol=1e-15)

    def test_antipodal_invariance_exact(self, rng):
        ts = random_chart(rng)
        q = random_unit_quats(rng, 100)
        t = rng.standard_normal((100, 3))
        a = sphere_to_tangent(ts, np.column_stack([q, t]))
        b = sphere_to_tangent(ts, np.column_stack([-q, t]))
        np.testing.assert_array_equal(a, b)

    def test_translation_bit_exact(self, rng):
        ts = random_chart(rng)
        x = rng.standard_normal((20, 6))
        np.testing.assert_array_equal(tangent_to_sphere(ts, x)[:, 4:], x[:, 3:])
        other = random_chart(rng)
        np.testing.assert_array_equal(change_tangent_space(ts, x, other)[:, 3:], x[:, 3:])

    def test_round_trip(self, rng):
        ts = random_chart(rng)
        r = rng.standard_normal((100, 3))
        r *= rng.uniform(0, 10, (100, 1)) / np.linalg.norm(r, axis=1, keepdims=True)
        x = np.column_stack([r, rng.standard_normal((100, 3))])
        np.testing.assert_allclose(sphere_to_tangent(ts, tangent_to_sphere(ts, x)), x, atol=1e-9)

    def test_output_unit(self, rng):
        ts = random_chart(rng)
        out = tangent_to_sphere(ts, rng.standard_normal((50, 6)) * 5)
        np.testing.assert_allclose(np.linalg.norm(out[:, :4], axis=1), 1.0, atol=1e-15)

    def test_equator_raises(self):
        ts = TangentSpace.identity()
        with pytest.raises(ProjectionError):
            sphere_to_tangent(ts, np.r_[0, 1, 0, 0, 0, 0, 0])
        near = np.r_[math.sin(5e-8), math.cos(5e-8), 0, 0, 0, 0, 0]
        with pytest.raises(ProjectionError):
            sphere_to_tangent(ts, near)
        x, valid = sphere_to_tangent_masked(ts, near)
        assert not valid and np.all(np.isnan(x[:3]))

    def test_just_off_equator_projects(self):
        ts = TangentSpace.identity()
        ang = 1e-6
        x = sphere_to_tangent(ts, np.r_[math.sin(ang), math.cos(ang), 0, 0, 0, 0, 0])
        assert np.isfinite(x).all()


class TestChartChange:
    def test_same_chart_identity(self, rng):
        ts = random_chart(rng)
        x = rng.standard_normal(6)
        np.testing.assert_array_equal(change_tangent_space(ts, x, TangentSpace(ts.point)), x)

    def test_antipodal_charts_coincide(self, rng):
        ts = random_chart(rng)
        assert same_chart(ts, TangentSpace(-ts.point))
        q = np.r_[random_unit_quats(rng, 1)[0], 0, 0, 0]
        np.testing.assert_allclose(
            sphere_to_tangent(ts, q), sphere_to_tangent(TangentSpace(-ts.point), q), atol=1e-15
        )

    def test_round_trip(self, rng):
        a = TangentSpace.identity()
        b = TangentSpace(np.array([math.cos(0.2), math.sin(0.2), 0, 0]))
        x = np.r_[rng.uniform(-1, 1, 3), rng.standard_normal(3)]
        np.testing.assert_allclose(change_tangent_space(b, change_tangent_space(a, x, b), a), x, atol=1e-9)

    def test_definitional(self, rng):
        a, b = random_chart(rng), random_chart(rng)
        x = np.r_[rng.uniform(-0.5, 0.5, 3), 1, 2, 3]
        expected = sphere_to_tangent(b, tangent_to_sphere(a, x))
        np.testing.assert_array_equal(change_tangent_space(a, x, b), expected)


class TestPoseTransformation:
    def test_identity_motion(self, rng):
        ts = random_chart(rng)
        x = np.r_[rng.uniform(-1, 1, 3), rng.standard_normal(3)]
        out = pose_transformation_ts(x, np.zeros(6), ts, TangentSpace.identity(), ts)
        np.testing.assert_allclose(out, x, atol=1e-10)

    def test_pure_translation_motion(self, rng):
        ts = random_chart(rng)
        x = np.r_[rng.uniform(-1, 1, 3), rng.standard_normal(3)]
        shift = np.array([0.5, -1.0, 2.0])
        out = pose_transformation_ts(x, np.r_[0, 0, 0, shift], ts, TangentSpace.identity(), ts)
        np.testing.assert_allclose(out, np.r_[x[:3], x[3:] + shift], atol=1e-12)

    def test_matches_hand_composition(self, rng):
        tp, tm, to = random_chart(rng), random_chart(rng), random_chart(rng)
        xp = np.r_[rng.uniform(-0.3, 0.3, 3), rng.standard_normal(3)]
        xm = np.r_[rng.uniform(-0.3, 0.3, 3), rng.standard_normal(3)]
        p = tangent_to_sphere(tp, xp)
        m = tangent_to_sphere(tm, xm)
        q, t = dq_to_pose(dq_mul(pose_to_dq(m[:4], m[4:]), pose_to_dq(p[:4], p[4:])))
        expected = sphere_to_tangent(to, np.r_[q, t])
        np.testing.assert_allclose(pose_transformation_ts(xp, xm, tp, tm, to), expected, atol=1e-14)


class TestJacobian:
    def test_linear_map_exact(self, rng):
        A = rng.standard_normal((4, 3))
        np.testing.assert_allclose(jacobian(lambda z: z @ A.T, np.ones(3), 0.1), A, atol=1e-13)

    def test_identity_map(self, rng):
        ts = random_chart(rng)
        x = rng.standard_normal(6)
        J = jacobian(lambda z: change_tangent_space(ts, z, ts), x, 1e-6)
        np.testing.assert_allclose(J, np.eye(6), atol=1e-7)
        np.testing.assert_array_equal(change_jacobian(ts, x, ts), np.eye(6))

    def test_analytic_derivative_at_identity(self):
        # d/dr of (1, r)/sqrt(1+|r|^2) at r = 0 is [0; I]
        ts = TangentSpace.identity()
        J = jacobian(lambda z: tangent_to_sphere(ts, z)[:, :4], np.zeros(6), 1e-6)
        expected = np.zeros((4, 6))
        expected[1:, :3] = np.eye(3)
        np.testing.assert_allclose(J, expected, atol=1e-9)

    def test_step_halving(self, rng):
        a = TangentSpace.identity()
        b = TangentSpace(np.array([math.cos(0.3), 0, math.sin(0.3), 0]))
        x = np.r_[0.2, -0.1, 0.3, 1, 2, 3]
        J1 = change_jacobian(a, x, b, 1e-6)
        J2 = change_jacobian(a, x, b, 5e-7)
        assert np.max(np.abs(J1 - J2)) <= 1e-5
        tp, tm, to = random_chart(rng), random_chart(rng), random_chart(rng)
        xp = np.r_[0.1, 0.2, -0.1, 0.5, 0.1, 0.3]
        xm = np.r_[-0.1, 0.05, 0.2, 1.0, -1.0, 0.2]
        to = TangentSpace(tangent_to_sphere(tp, xp)[:4])
        C1 = composition_jacobian(xp, xm, tp, tm, to, 1e-3)
        C2 = composition_jacobian(xp, xm, tp, tm, to, 5e-4)
        assert np.max(np.abs(C1 - C2)) <= 1e-5

    def test_bad_step(self):
        with pytest.raises(DomainError):
            jacobian(lambda z: z, np.zeros(2), 0.0)

    def test_equator_probe_raises(self):
        a = TangentSpace.identity()
        b = TangentSpace(np.array([0.0, 1.0, 0, 0]))
        with pytest.raises(ProjectionError):
            change_jacobian(a, np.zeros(6), b)
