"""Tangent spaces of S3, central projection and chart changes.

Tangent coordinates are 6-vectors ``(r1, r2, r3, t1, t2, t3)``: a point
of the rotation tangent plane followed by a translation that every
projection passes through unchanged. Points on S3 x R3 are 7-vectors
``(q_a, q_b, q_c, q_d, t1, t2, t3)``. All maps act row-wise on arrays with
leading batch axes.
"""

import math

import numpy as np

from .errors import DomainError, ProjectionError
from .quaternion import UNIT_TOL, dq_mul, dq_to_pose, pose_to_dq, qmul

__all__ = [
    "EQUATOR_ANGLE_TOL",
    "CHANGE_STEP",
    "COMPOSE_STEP",
    "TangentSpace",
    "canonical_basis",
    "tangent_to_sphere",
    "sphere_to_tangent",
    "sphere_to_tangent_masked",
    "change_tangent_space",
    "pose_transformation_ts",
    "jacobian",
    "change_jacobian",
    "composition_jacobian",
    "same_chart",
]

# a point within this angle of the chart's equator projects to infinity
EQUATOR_ANGLE_TOL = 1e-7
_EQUATOR_COS = math.sin(EQUATOR_ANGLE_TOL)
CHANGE_STEP = 1e-6
COMPOSE_STEP = 1e-3
_ORTHO_TOL = 1e-10


def canonical_basis(q0):
    """Columns ``q0*j, q0*k, q0*l`` spanning the tangent space at ``q0``.

    Parameters
    ----------
    q0 : array_like, shape (4,)
        Unit tangent point.

    Returns
    -------
    ndarray, shape (4, 3)
    """
    q0 = np.asarray(q0, dtype=float)
    if q0.shape != (4,) or abs(np.linalg.norm(q0) - 1.0) > UNIT_TOL:
        raise DomainError("tangent point must be a unit 4-vector")
    return qmul(q0, np.eye(4)[1:]).T


class TangentSpace:
    """Tangent point ``q0`` on S3 with an orthonormal 4x3 basis.

    The basis defaults to :func:`canonical_basis`. Instances are immutable.
    """

    __slots__ = ("point", "basis")

    def __init__(self, point, basis=None):
        p = np.array(point, dtype=float).reshape(-1)
        if p.shape != (4,) or not np.all(np.isfinite(p)):
            raise DomainError("tangent point must be a finite 4-vector")
        if abs(np.linalg.norm(p) - 1.0) > UNIT_TOL:
            raise DomainError("tangent point must have unit norm")
        if basis is None:
            B = canonical_basis(p)
        else:
            B = np.array(basis, dtype=float)
            if B.shape != (4, 3):
                raise DomainError("tangent basis must be 4x3")
            Q = np.column_stack([p, B])
            if np.max(np.abs(Q.T @ Q - np.eye(4))) > _ORTHO_TOL:
                raise DomainError("[point | basis] is not orthogonal")
        p.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "basis", B)

    def __setattr__(self, name, value):
        raise AttributeError("TangentSpace is immutable")

    @classmethod
    def identity(cls):
        return cls([1.0, 0.0, 0.0, 0.0])

    def __eq__(self, other):
        return (
            isinstance(other, TangentSpace)
            and np.array_equal(self.point, other.point)
            and np.array_equal(self.basis, other.basis)
        )

    def __hash__(self):
        return hash((self.point.tobytes(), self.basis.tobytes()))

    def __repr__(self):
        return f"TangentSpace({self.point.tolist()!r})"

    def is_canonical(self):
        return np.array_equal(self.basis, canonical_basis(self.point))


def same_chart(a, b):
    """True when two tangent spaces give identical coordinates.

    Charts at ``q0`` and ``-q0`` with bases of matching sign coincide.
    """
    if a is b:
        return True
    for s in (1.0, -1.0):
        if np.array_equal(a.point, s * b.point) and np.array_equal(a.basis, s * b.basis):
            return True
    return False


def _split6(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 6:
        raise DomainError("tangent coordinates must have 6 components")
    return x


def tangent_to_sphere(ts, x):
    """Central projection ``(B r + q0)/|B r + q0|``; translation copied."""
    x = _split6(x)
    w = x[..., :3] @ ts.basis.T + ts.point
    q = w / np.linalg.norm(w, axis=-1, keepdims=True)
    return np.concatenate([q, x[..., 3:]], axis=-1)


def sphere_to_tangent_masked(ts, q7):
    """Inverse central projection that flags equator points instead of raising.

    Returns
    -------
    x : ndarray, shape (..., 6)
        Tangent coordinates; rows at the equator hold NaN rotation parts.
    valid : ndarray of bool, shape (...)
    """
    q7 = np.asarray(q7, dtype=float)
    if q7.shape[-1] != 7:
        raise DomainError("sphere points must have 7 components")
    q = q7[..., :4]
    dot = q @ ts.point
    valid = np.abs(dot) > _EQUATOR_COS * np.linalg.norm(q, axis=-1)
    safe = np.where(valid, dot, 1.0)
    r = (q / safe[..., None] - ts.point) @ ts.basis
    r = np.where(valid[..., None], r, np.nan)
    return np.concatenate([r, q7[..., 4:]], axis=-1), valid


def sphere_to_tangent(ts, q7):
    """Inverse central projection ``B^T (q/<q,q0> - q0)``; translation copied.

    Raises
    ------
    ProjectionError
        If a point lies within the equator tolerance of the chart.
    """
    x, valid = sphere_to_tangent_masked(ts, q7)
    if not np.all(valid):
        idx = int(np.flatnonzero(~np.ravel(valid))[0])
        raise ProjectionError(f"point {idx} projects to infinity in the target chart")
    return x


def change_tangent_space(src, x, dst):
    """Re-express tangent coordinates of chart ``src`` in chart ``dst``."""
    x = _split6(x)
    if same_chart(src, dst):
        return x.copy()
    return sphere_to_tangent(dst, tangent_to_sphere(src, x))


def pose_transformation_ts(pose_x, motion_x, ts_pose, ts_motion, ts_out):
    """Compose a pose with a motion, both given in tangent coordinates.

    Both are lifted to dual quaternions, the motion is applied from the
    left and the result is projected into ``ts_out``.
    """
    p = tangent_to_sphere(ts_pose, pose_x)
    m = tangent_to_sphere(ts_motion, motion_x)
    dq = dq_mul(pose_to_dq(m[..., :4], m[..., 4:]), pose_to_dq(p[..., :4], p[..., 4:]))
    q_r, t = dq_to_pose(dq)
    return sphere_to_tangent(ts_out, np.concatenate([q_r, t], axis=-1))


def jacobian(f, x, step):
    """Central-difference Jacobian of a row-wise map.

    Parameters
    ----------
    f : callable
        Maps an ``(m, n)`` array to an ``(m, k)`` array row by row.
    x : array_like, shape (n,)
    step : float
        Probe distance ``h``; column ``j`` is ``(f(x+h e_j) - f(x-h e_j))/(2h)``.
    """
    if not step > 0:
        raise DomainError("Jacobian step must be positive")
    x = np.asarray(x, dtype=float)
    n = x.size
    E = np.eye(n) * step
    vals = f(np.concatenate([x + E, x - E]))
    return ((vals[:n] - vals[n:]) / (2.0 * step)).T


def change_jacobian(src, x, dst, step=CHANGE_STEP):
    """Jacobian of :func:`change_tangent_space` at ``x``."""
    if same_chart(src, dst):
        return np.eye(6)
    return jacobian(lambda z: change_tangent_space(src, z, dst), x, step)


def composition_jacobian(pose_x, motion_x, ts_pose, ts_motion, ts_out, step=COMPOSE_STEP):
    """6x12 Jacobian of :func:`pose_transformation_ts` over (pose, motion)."""
    z = np.concatenate([np.asarray(pose_x, float), np.asarray(motion_x, float)])
    return jacobian(
        lambda zz: pose_transformation_ts(zz[:, :6], zz[:, 6:], ts_pose, ts_motion, ts_out),
        z,
        step,
    )
