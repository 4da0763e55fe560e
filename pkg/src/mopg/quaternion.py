"""Quaternion and dual-quaternion algebra.

Quaternions are stored as arrays ``[a, b, c, d]`` (scalar part first).
The array functions operate on the last axis and broadcast over leading
axes; dual quaternions are arrays of shape ``(..., 2, 4)`` holding the
real and dual parts. The :class:`Quaternion` and :class:`DualQuaternion`
classes are thin immutable wrappers around single values.
"""

import math

import numpy as np

from .errors import DomainError

__all__ = [
    "UNIT_TOL",
    "qmul",
    "qconj",
    "qnorm",
    "qinv",
    "canonical_sign",
    "axis_angle_to_quat",
    "quat_to_matrix",
    "rotmat_to_quat",
    "rotate_vectors",
    "dq_mul",
    "dq_conj_quat",
    "dq_conj_dual",
    "dq_conj_total",
    "dq_inverse",
    "pose_to_dq",
    "dq_to_pose",
    "check_unit",
    "Quaternion",
    "DualQuaternion",
    "transform_pose",
]

UNIT_TOL = 1e-9
ROTMAT_ORTHO_TOL = 1e-4


def qmul(p, q):
    """Hamilton product of quaternion arrays ``p * q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a, b, c, d = np.moveaxis(p, -1, 0)
    e, f, g, h = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            a * e - b * f - c * g - d * h,
            a * f + b * e + c * h - d * g,
            a * g - b * h + c * e + d * f,
            a * h + b * g - c * f + d * e,
        ],
        axis=-1,
    )


def qconj(q):
    """Quaternion conjugate, negating the imaginary parts."""
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qnorm(q):
    """Euclidean norm in 4-space."""
    return np.linalg.norm(np.asarray(q, dtype=float), axis=-1)


def qinv(q):
    """Multiplicative inverse ``conj(q) / |q|^2``."""
    q = np.asarray(q, dtype=float)
    n2 = np.sum(q * q, axis=-1, keepdims=True)
    if np.any(n2 == 0.0):
        raise DomainError("inverse of the zero quaternion")
    return qconj(q) / n2


def canonical_sign(q):
    """Flip ``q`` so that its first nonzero component is positive."""
    q = np.array(q, dtype=float)
    flat = q.reshape(-1, 4)
    for row in flat:
        nz = np.flatnonzero(row)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return flat.reshape(q.shape)


def check_unit(q, what="rotation quaternion"):
    """Raise :class:`DomainError` unless every quaternion in ``q`` is unit."""
    n = qnorm(q)
    if not np.all(np.abs(n - 1.0) <= UNIT_TOL):
        raise DomainError(f"{what} is not unit norm (norm {np.ravel(n)[0]!r})")


def axis_angle_to_quat(theta, axis):
    """Unit quaternion ``[cos(theta/2), sin(theta/2) * axis/|axis|]``."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        if theta == 0.0:
            return np.array([1.0, 0.0, 0.0, 0.0])
        raise DomainError("zero rotation axis with nonzero angle")
    half = 0.5 * float(theta)
    return np.concatenate([[math.cos(half)], math.sin(half) * axis / n])


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion (broadcasts to ``(..., 3, 3)``)."""
    q = np.asarray(q, dtype=float)
    a, b, c, d = np.moveaxis(q, -1, 0)
    rows = [
        [1 - 2 * c * c - 2 * d * d, 2 * b * c - 2 * a * d, 2 * (a * c + b * d)],
        [2 * (b * c + a * d), 1 - 2 * b * b - 2 * d * d, -2 * a * b + 2 * c * d],
        [-2 * a * c + 2 * b * d, 2 * (a * b + c * d), 1 - 2 * b * b - 2 * c * c],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def rotmat_to_quat(R):
    """Unit quaternion of a 3x3 rotation matrix, sign-canonicalized.

    The branch picks the first of a², b², c², d² that reaches 1/4, which
    keeps the division well conditioned.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise DomainError("rotation matrix must be 3x3")
    if np.max(np.abs(R @ R.T - np.eye(3))) > ROTMAT_ORTHO_TOL or np.linalg.det(R) <= 0:
        raise DomainError("matrix is not a rotation")
    lim = 0.25
    a2 = (1.0 + R[0, 0] + R[1, 1] + R[2, 2]) / 4.0
    if a2 >= lim:
        a = math.sqrt(a2)
        b = 0.25 * (R[2, 1] - R[1, 2]) / a
        c = 0.25 * (R[0, 2] - R[2, 0]) / a
        d = 0.25 * (R[1, 0] - R[0, 1]) / a
    else:
        b2 = a2 - 0.5 * (R[1, 1] + R[2, 2])
        if b2 >= lim:
            b = math.sqrt(b2)
            a = 0.25 * (R[2, 1] - R[1, 2]) / b
            c = 0.25 * (R[0, 1] + R[1, 0]) / b
            d = 0.25 * (R[0, 2] + R[2, 0]) / b
        else:
            c2 = a2 - 0.5 * (R[0, 0] + R[2, 2])
            if c2 >= lim:
                c = math.sqrt(c2)
                a = 0.25 * (R[0, 2] - R[2, 0]) / c
                b = 0.25 * (R[0, 1] + R[1, 0]) / c
                d = 0.25 * (R[1, 2] + R[2, 1]) / c
            else:
                d = math.sqrt(a2 - 0.5 * (R[0, 0] + R[1, 1]))
                a = 0.25 * (R[1, 0] - R[0, 1]) / d
                b = 0.25 * (R[0, 2] + R[2, 0]) / d
                c = 0.25 * (R[1, 2] + R[2, 1]) / d
    q = np.array([a, b, c, d])
    return canonical_sign(q / np.linalg.norm(q))


def rotate_vectors(q, v):
    """Rotate 3-vectors ``v`` by unit quaternions ``q`` via ``q * v * conj(q)``."""
    v = np.asarray(v, dtype=float)
    p = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return qmul(qmul(q, p), qconj(q))[..., 1:]


# dual quaternions ---------------------------------------------------------


def dq_mul(x, y):
    """Dual-quaternion product ``(r1 r2, r1 d2 + d1 r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    real = qmul(x[..., 0, :], y[..., 0, :])
    dual = qmul(x[..., 1, :], y[..., 0, :]) + qmul(x[..., 0, :], y[..., 1, :])
    return np.stack([real, dual], axis=-2)


def dq_conj_quat(x):
    """Quaternion conjugate ``(conj r, conj d)``."""
    x = np.asarray(x, dtype=float)
    return np.stack([qconj(x[..., 0, :]), qconj(x[..., 1, :])], axis=-2)


def dq_conj_dual(x):
    """Dual conjugate ``(r, -d)``."""
    x = np.array(x, dtype=float)
    x[..., 1, :] *= -1.0
    return x


def dq_conj_total(x):
    """Total conjugate ``(conj r, -conj d)``."""
    return dq_conj_dual(dq_conj_quat(x))


def dq_inverse(x):
    """Inverse ``(r⁻¹, -r⁻¹ d r⁻¹)``; requires a nonzero real part."""
    x = np.asarray(x, dtype=float)
    ri = qinv(x[..., 0, :])
    return np.stack([ri, -qmul(qmul(ri, x[..., 1, :]), ri)], axis=-2)


def pose_to_dq(q_r, t):
    """Dual quaternion ``(q_r, ½ q_t q_r)`` of a rotation and translation.

    ``t`` may be a 3-vector or an imaginary quaternion ``[0, x, y, z]``.
    """
    q_r = np.asarray(q_r, dtype=float)
    t = np.asarray(t, dtype=float)
    check_unit(q_r)
    if t.shape[-1] == 4:
        if np.any(np.abs(t[..., 0]) > UNIT_TOL):
            raise DomainError("translation quaternion must be imaginary")
        q_t = t
    else:
        q_t = np.concatenate([np.zeros(t.shape[:-1] + (1,)), t], axis=-1)
    q_r, q_t = np.broadcast_arrays(q_r, q_t)
    return np.stack([q_r, 0.5 * qmul(q_t, q_r)], axis=-2)


def dq_to_pose(x):
    """Recover ``(q_r, t)`` with ``q_t = 2 d conj(r)``; ``t`` is a 3-vector."""
    x = np.asarray(x, dtype=float)
    q_r = x[..., 0, :]
    check_unit(q_r)
    q_t = 2.0 * qmul(x[..., 1, :], qconj(q_r))
    return q_r.copy(), q_t[..., 1:]


def transform_pose(pose, motion):
    """Apply ``motion`` to ``pose`` by left multiplication."""
    if isinstance(pose, DualQuaternion) and isinstance(motion, DualQuaternion):
        return motion * pose
    return dq_mul(motion, pose)


# value classes ------------------------------------------------------------


class Quaternion:
    """Immutable quaternion ``a + ib + jc + kd``."""

    __slots__ = ("_v",)

    def __init__(self, a, b=None, c=None, d=None, renormalize=False):
        if b is None:
            v = np.array(a, dtype=float).reshape(4)
        else:
            v = np.array([a, b, c, d], dtype=float)
        if not np.all(np.isfinite(v)):
            raise DomainError("quaternion components must be finite")
        if renormalize:
            n = np.linalg.norm(v)
            if n == 0.0:
                raise DomainError("cannot renormalize the zero quaternion")
            v = v / n
        v.flags.writeable = False
        self._v = v

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, theta, axis):
        return cls(axis_angle_to_quat(theta, axis))

    @classmethod
    def from_matrix(cls, R):
        return cls(rotmat_to_quat(R))

    @property
    def array(self):
        return self._v

    a = property(lambda self: float(self._v[0]))
    b = property(lambda self: float(self._v[1]))
    c = property(lambda self: float(self._v[2]))
    d = property(lambda self: float(self._v[3]))

    def __mul__(self, other):
        if isinstance(other, Quaternion):
            return Quaternion(qmul(self._v, other._v))
        return Quaternion(self._v * float(other))

    __rmul__ = lambda self, s: Quaternion(self._v * float(s))

    def __add__(self, other):
        return Quaternion(self._v + other._v)

    def __sub__(self, other):
        return Quaternion(self._v - other._v)

    def __neg__(self):
        return Quaternion(-self._v)

    def __eq__(self, other):
        return isinstance(other, Quaternion) and np.array_equal(self._v, other._v)

    def __hash__(self):
        return hash(self._v.tobytes())

    def __repr__(self):
        return "Quaternion({!r}, {!r}, {!r}, {!r})".format(*self._v.tolist())

    def conj(self):
        return Quaternion(qconj(self._v))

    def norm(self):
        return float(np.linalg.norm(self._v))

    def inverse(self):
        return Quaternion(qinv(self._v))

    def scale(self, s):
        return Quaternion(self._v * float(s))

    def is_unit(self):
        return abs(self.norm() - 1.0) <= UNIT_TOL

    def canonical(self):
        return Quaternion(canonical_sign(self._v))

    def to_matrix(self):
        return quat_to_matrix(self._v)

    def rotate(self, p):
        """Rotate an imaginary quaternion (or 3-vector) ``p``, returning ``q p q̄``."""
        if not self.is_unit():
            raise DomainError("rotation requires a unit quaternion")
        pv = p.array if isinstance(p, Quaternion) else np.asarray(p, dtype=float)
        if pv.shape[-1] == 4:
            if abs(pv[0]) > UNIT_TOL:
                raise DomainError("rotated point must be an imaginary quaternion")
            out = qmul(qmul(self._v, pv), qconj(self._v))
            out[0] = 0.0
            return Quaternion(out)
        return rotate_vectors(self._v, pv)

    def tolist(self):
        return self._v.tolist()


class DualQuaternion:
    """Immutable dual quaternion ``real + ε dual``."""

    __slots__ = ("_v",)

    def __init__(self, real, dual=None):
        if dual is None:
            v = np.array(real, dtype=float).reshape(2, 4)
        else:
            r = real.array if isinstance(real, Quaternion) else real
            d = dual.array if isinstance(dual, Quaternion) else dual
            v = np.stack([np.asarray(r, dtype=float), np.asarray(d, dtype=float)])
        if not np.all(np.isfinite(v)):
            raise DomainError("dual quaternion components must be finite")
        v.flags.writeable = False
        self._v = v

    @classmethod
    def identity(cls):
        return cls([[1.0, 0, 0, 0], [0.0, 0, 0, 0]])

    @classmethod
    def from_pose(cls, q_r, t):
        q_r = q_r.array if isinstance(q_r, Quaternion) else q_r
        t = t.array if isinstance(t, Quaternion) else t
        return cls(pose_to_dq(q_r, t))

    @property
    def array(self):
        return self._v

    @property
    def real(self):
        return Quaternion(self._v[0])

    @property
    def dual(self):
        return Quaternion(self._v[1])

    def __mul__(self, other):
        return DualQuaternion(dq_mul(self._v, other._v))

    def __eq__(self, other):
        return isinstance(other, DualQuaternion) and np.array_equal(self._v, other._v)

    def __hash__(self):
        return hash(self._v.tobytes())

    def __repr__(self):
        return f"DualQuaternion({self._v.tolist()!r})"

    def conj_quat(self):
        return DualQuaternion(dq_conj_quat(self._v))

    def conj_dual(self):
        return DualQuaternion(dq_conj_dual(self._v))

    def conj_total(self):
        return DualQuaternion(dq_conj_total(self._v))

    def inverse(self):
        return DualQuaternion(dq_inverse(self._v))

    def to_pose(self):
        """Return ``(rotation Quaternion, translation 3-vector)``."""
        q_r, t = dq_to_pose(self._v)
        return Quaternion(q_r), t

    def to_matrix(self):
        """Homogeneous 4x4 transform."""
        q_r, t = dq_to_pose(self._v)
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(q_r)
        T[:3, 3] = t
        return T

    def transform_point(self, p):
        """Apply the rigid motion to a 3-point."""
        q_r, t = dq_to_pose(self._v)
        return rotate_vectors(q_r, p) + t

    def tolist(self):
        return self._v.tolist()
