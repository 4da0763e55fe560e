"""Projected Gaussian base elements.

A :class:`ProjectedGaussian` is a 6-D Gaussian ``N(mu, Sigma)`` on a
tangent chart whose rotation part is centrally projected onto S3. Its
density on the double-covered S3 x R3 is::

    p(q) = N(x(q); mu, Sigma) / (2 * mass),   mass = E_N[w(r)]

with the correction weight ``w(r) = 1/(1 + |r|^2)^2`` and ``p = 0`` on the
chart's equator. Covariances may be singular (a deterministic motion has
zero covariance); operations that need an inverse raise
:class:`~mopg.errors.NumericError` in that case.
"""

import numpy as np
from scipy.linalg import block_diag

from .errors import DomainError, NumericError
from .montecarlo import McEstimate, rng_stream, sobol_normals, stream_id
from .quaternion import (
    UNIT_TOL,
    canonical_sign,
    dq_mul,
    dq_to_pose,
    pose_to_dq,
    quat_to_matrix,
    qmul,
)
from .tangent import (
    CHANGE_STEP,
    COMPOSE_STEP,
    TangentSpace,
    change_jacobian,
    change_tangent_space,
    composition_jacobian,
    same_chart,
    sphere_to_tangent_masked,
    tangent_to_sphere,
)

__all__ = [
    "DEFAULT_MASS_SAMPLES",
    "SYM_TOL",
    "GaussianKernel",
    "ProjectedGaussian",
    "correction_weight",
    "estimate_mass",
    "density",
    "chart_density",
    "midpoint_chart",
    "fuse",
    "merge",
    "merge_moments",
    "compose",
    "mahalanobis_weight",
    "kl_divergence",
    "skl_divergence",
    "skl_merge_bound",
    "sample",
    "repair_spd",
]

DEFAULT_MASS_SAMPLES = 2048
SYM_TOL = 1e-10
_LOG_2PI = np.log(2.0 * np.pi)


def correction_weight(r):
    """Surface weight ``1/(1 + |r|^2)^2`` of the central projection."""
    r = np.asarray(r, dtype=float)
    return 1.0 / (1.0 + np.sum(r * r, axis=-1)) ** 2


def _check_cov(cov, dim):
    cov = np.array(cov, dtype=float)
    if cov.shape != (dim, dim) or not np.all(np.isfinite(cov)):
        raise DomainError(f"covariance must be a finite {dim}x{dim} matrix")
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(cov))):
        raise DomainError("covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    evals = np.linalg.eigvalsh(cov)
    if evals[0] < -SYM_TOL * max(1.0, evals[-1]):
        raise DomainError("covariance is not positive semi-definite")
    return cov


def _cholesky(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericError("covariance is singular") from exc


def _psd_sqrt(cov):
    """Factor ``L`` with ``L L^T = cov`` that tolerates singular matrices."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(cov)
        return V * np.sqrt(np.clip(w, 0.0, None))


def repair_spd(cov):
    """Symmetrize and floor eigenvalues at ``1e-12 * trace / dim``."""
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    floor = 1e-12 * np.trace(cov) / cov.shape[0]
    if w[0] >= floor:
        return cov
    w = np.maximum(w, floor)
    out = (V * w) @ V.T
    return 0.5 * (out + out.T)


class GaussianKernel:
    """Plain Gaussian ``N(mean, cov)`` in ``dim`` dimensions."""

    __slots__ = ("mean", "cov", "dim")

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = _check_cov(np.atleast_2d(cov), mean.size)
        mean.flags.writeable = False
        cov.flags.writeable = False
        self.mean, self.cov, self.dim = mean, cov, mean.size

    def logpdf(self, x):
        L = _cholesky(self.cov)
        d = np.atleast_2d(np.asarray(x, dtype=float) - self.mean)
        z = np.linalg.solve(L, d.T)
        return -0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(L))) - 0.5 * self.dim * _LOG_2PI


def estimate_mass(pg, n=DEFAULT_MASS_SAMPLES, seed=None, method="qmc"):
    """Normalization mass ``E_N[w(r)]`` of an element.

    Parameters
    ----------
    pg : ProjectedGaussian or tuple (mean, cov)
    n : int
        Sample count.
    seed : int, optional
        Defaults to a hash of the rotation marginal, so the result is a pure
        function of the element.
    method : {"qmc", "iid"}
        ``"qmc"`` uses scrambled Sobol points (randomized quasi-Monte Carlo),
        ``"iid"`` plain pseudo-random normals.

    Returns
    -------
    float
    """
    return estimate_mass_mc(pg, n, seed, method).value


def estimate_mass_mc(pg, n=DEFAULT_MASS_SAMPLES, seed=None, method="qmc"):
    """Like :func:`estimate_mass` but returns the full :class:`McEstimate`."""
    if n < 1:
        raise DomainError("mass estimation needs at least one sample")
    mean, cov = (pg.mean, pg.cov) if isinstance(pg, ProjectedGaussian) else pg
    mu = np.asarray(mean, dtype=float)[:3]
    S = np.asarray(cov, dtype=float)[:3, :3]
    sid = stream_id("mass", mu, S)
    seed = 0 if seed is None else int(seed)
    if method == "qmc":
        z = sobol_normals(n, 3, seed, sid)
    elif method == "iid":
        z = rng_stream(seed, sid).normal((n, 3))
    else:
        raise DomainError(f"unknown mass method {method!r}")
    r = mu + z @ _psd_sqrt(S).T
    return McEstimate.from_values(correction_weight(r), seed)


class ProjectedGaussian:
    """Gaussian on a tangent chart, projected onto S3 x R3.

    Parameters
    ----------
    ts : TangentSpace or array_like
        Chart, or its tangent point (canonical basis).
    mean : array_like, shape (6,)
    cov : array_like, shape (6, 6)
        Symmetric positive semi-definite.
    mass : float, optional
        Normalization mass; estimated with :data:`DEFAULT_MASS_SAMPLES`
        points when omitted.
    compat : float
        Accumulated fusion compatibility in [0, 1].
    """

    __slots__ = ("ts", "mean", "cov", "mass", "compat")

    def __init__(self, ts, mean, cov, mass=None, compat=1.0):
        if not isinstance(ts, TangentSpace):
            ts = TangentSpace(ts)
        mean = np.array(mean, dtype=float).reshape(-1)
        if mean.shape != (6,) or not np.all(np.isfinite(mean)):
            raise DomainError("mean must be a finite 6-vector")
        cov = _check_cov(cov, 6)
        mean.flags.writeable = False
        cov.flags.writeable = False
        if mass is None:
            mass = estimate_mass((mean, cov))
        mass = float(mass)
        if not 0.0 < mass <= 1.0 + 1e-12:
            raise DomainError(f"mass must lie in (0, 1], got {mass!r}")
        compat = float(compat)
        if not 0.0 <= compat <= 1.0:
            raise DomainError(f"compat must lie in [0, 1], got {compat!r}")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mass", min(mass, 1.0))
        object.__setattr__(self, "compat", compat)

    def __setattr__(self, name, value):
        raise AttributeError("ProjectedGaussian is immutable")

    def __repr__(self):
        return (
            f"ProjectedGaussian(point={self.ts.point.tolist()}, mean={self.mean.tolist()}, "
            f"mass={self.mass:.6g})"
        )

    @classmethod
    def deterministic(cls, q_r, t):
        """Zero-covariance element centred on the pose ``(q_r, t)``."""
        return cls(TangentSpace(canonical_sign(q_r)), np.r_[0.0, 0.0, 0.0, t], np.zeros((6, 6)), 1.0)

    def replace(self, **kw):
        """Copy with some fields replaced; mass is re-estimated if mean/cov change."""
        args = {"ts": self.ts, "mean": self.mean, "cov": self.cov, "mass": self.mass, "compat": self.compat}
        if ("mean" in kw or "cov" in kw) and "mass" not in kw:
            args["mass"] = None
        args.update(kw)
        return ProjectedGaussian(**args)

    def key(self):
        """Content hash used to derive random streams."""
        return stream_id("pg", self.ts.point, self.ts.basis, self.mean, self.cov)

    def mean_pose(self):
        """Projected mean as a 7-vector ``(q, t)`` with canonical sign."""
        p = tangent_to_sphere(self.ts, self.mean)
        p[:4] = canonical_sign(p[:4])
        return p

    def mean_dq(self):
        p = tangent_to_sphere(self.ts, self.mean)
        return pose_to_dq(p[:4], p[4:])

    def in_chart(self, ts, step=CHANGE_STEP):
        """Mean and covariance re-expressed in chart ``ts`` by linearization."""
        if same_chart(self.ts, ts):
            return self.mean.copy(), self.cov.copy()
        mean = change_tangent_space(self.ts, self.mean, ts)
        J = change_jacobian(self.ts, self.mean, ts, step)
        cov = J @ self.cov @ J.T
        return mean, 0.5 * (cov + cov.T)

    def reexpressed(self, ts, step=CHANGE_STEP):
        """Element moved to chart ``ts`` (mass re-estimated)."""
        if same_chart(self.ts, ts):
            return self if self.ts == ts else self.replace(ts=ts)
        mean, cov = self.in_chart(ts, step)
        return ProjectedGaussian(ts, mean, repair_spd(cov), compat=self.compat)

    def recentered(self, step=CHANGE_STEP):
        """Element on the chart at its projected rotation mean, rotation mean zero."""
        if not np.any(self.mean[:3]):
            return self
        ts = TangentSpace(canonical_sign(tangent_to_sphere(self.ts, self.mean)[:4]))
        mean, cov = self.in_chart(ts, step)
        mean[:3] = 0.0
        return ProjectedGaussian(ts, mean, repair_spd(cov), compat=self.compat)

    def moved(self, motion):
        """Element pushed forward by an exact rigid motion (dual quaternion).

        The chart is rotated with the motion, so the rotation coordinates are
        unchanged and the translation block is rotated and shifted.
        """
        m = motion.array if hasattr(motion, "array") else np.asarray(motion, dtype=float)
        q_c, t_c = dq_to_pose(m)
        R = quat_to_matrix(q_c)
        ts = TangentSpace(qmul(q_c, self.ts.point), qmul(q_c, self.ts.basis.T).T)
        mean = np.r_[self.mean[:3], R @ self.mean[3:] + t_c]
        A = block_diag(np.eye(3), R)
        cov = A @ self.cov @ A.T
        return ProjectedGaussian(ts, mean, 0.5 * (cov + cov.T), self.mass, self.compat)

    def kernel(self):
        return GaussianKernel(self.mean, self.cov)

    def chart_logpdf(self, x):
        """Gaussian log density at chart coordinates ``x`` (no mass factor)."""
        L = _cholesky(self.cov)
        d = np.asarray(x, dtype=float) - self.mean
        flat = d.reshape(-1, 6)
        z = np.linalg.solve(L, flat.T)
        out = -0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(L))) - 3.0 * _LOG_2PI
        return out.reshape(d.shape[:-1])

    def log_density(self, q7):
        """Log density on S3 x R3; ``-inf`` at the chart's equator."""
        q7 = np.asarray(q7, dtype=float)
        if q7.shape[-1] != 7:
            raise DomainError("points must have 7 components")
        if np.any(np.abs(np.linalg.norm(q7[..., :4], axis=-1) - 1.0) > UNIT_TOL):
            raise DomainError("sphere part of the point is not unit norm")
        x, valid = sphere_to_tangent_masked(self.ts, q7)
        x = np.where(valid[..., None], x, self.mean)
        lp = self.chart_logpdf(x) - np.log(2.0 * self.mass)
        return np.where(valid, lp, -np.inf)


def density(pg, q7):
    """Normalized density of ``pg`` at points ``q7`` (0 at the equator)."""
    return np.exp(pg.log_density(q7))


def chart_density(pg, q7):
    """Unnormalized density ``N(x(q); mu, Sigma)`` without the mass factor."""
    x, valid = sphere_to_tangent_masked(pg.ts, np.asarray(q7, dtype=float))
    x = np.where(valid[..., None], x, pg.mean)
    return np.where(valid, np.exp(pg.chart_logpdf(x)), 0.0)


def sample(pg, n, seed, stream=None):
    """Draw ``n`` points (7-vectors) from ``pg``.

    The random stream defaults to one derived from the element's content.
    """
    if n < 0:
        raise DomainError("sample count must be non-negative")
    if n == 0:
        return np.empty((0, 7))
    rng = rng_stream(seed, pg.key() if stream is None else stream)
    x = pg.mean + rng.normal((n, 6)) @ _psd_sqrt(pg.cov).T
    return tangent_to_sphere(pg.ts, x)


def midpoint_chart(ts1, ts2):
    """Chart halfway between two tangent points after sign alignment.

    Returns ``ts1`` itself when both charts coincide.
    """
    if same_chart(ts1, ts2):
        return ts1
    p1, p2 = ts1.point, ts2.point
    if p1 @ p2 < 0:
        p2 = -p2
    m = p1 + p2
    return TangentSpace(canonical_sign(m / np.linalg.norm(m)))


def _mahalanobis(m1, S1, m2, S2):
    L = _cholesky(S1 + S2)
    z = np.linalg.solve(L, m1 - m2)
    return float(np.exp(-0.5 * z @ z))


def mahalanobis_weight(pg1, pg2):
    """Compatibility ``exp(-½ Δ^T (Σ1+Σ2)^{-1} Δ)`` on a shared chart.

    Accepts two :class:`ProjectedGaussian` on the same chart or two
    :class:`GaussianKernel`.
    """
    if isinstance(pg1, ProjectedGaussian) and not same_chart(pg1.ts, pg2.ts):
        raise DomainError("mahalanobis_weight needs elements on a shared chart")
    return _mahalanobis(pg1.mean, pg1.cov, pg2.mean, pg2.cov)


def fuse_moments(m1, S1, m2, S2):
    """Gaussian product moments on one chart.

    Returns
    -------
    mean, cov, delta
        Fused moments and the Mahalanobis compatibility of the pair.
    """
    S = S1 + S2
    try:
        cho = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NumericError("sum of covariances is singular") from exc

    def solve(b):
        return np.linalg.solve(cho.T, np.linalg.solve(cho, b))

    cov = S1 @ solve(S2)
    cov = 0.5 * (cov + cov.T)
    mean = S2 @ solve(m1) + S1 @ solve(m2)
    z = np.linalg.solve(cho, m1 - m2)
    return mean, cov, float(np.exp(-0.5 * z @ z))


def fuse_with_weight(pg1, pg2, recenter=False):
    """Fuse two elements; also return the Mahalanobis weight of the pair."""
    ts = midpoint_chart(pg1.ts, pg2.ts)
    m1, S1 = pg1.in_chart(ts)
    m2, S2 = pg2.in_chart(ts)
    mean, cov, delta = fuse_moments(m1, S1, m2, S2)
    out = ProjectedGaussian(ts, mean, repair_spd(cov), compat=pg1.compat * pg2.compat * delta)
    if recenter:
        out = out.recentered()
    return out, delta


def fuse(pg1, pg2, recenter=False):
    """Bayesian fusion of two elements on their midpoint chart.

    Parameters
    ----------
    pg1, pg2 : ProjectedGaussian
    recenter : bool
        Move the result to the chart at its projected rotation mean.

    Returns
    -------
    ProjectedGaussian
    """
    return fuse_with_weight(pg1, pg2, recenter)[0]


def merge_moments(l1, m1, S1, l2, m2, S2):
    """Moment-preserving merge of two weighted Gaussians.

    Returns the pooled mean and covariance with normalized weights
    ``w1 = l1/(l1+l2)`` and ``w2 = l2/(l1+l2)``.
    """
    if not (l1 > 0 and l2 > 0):
        raise DomainError("merge weights must be positive")
    w1 = l1 / (l1 + l2)
    w2 = l2 / (l1 + l2)
    d = np.atleast_1d(m1 - m2)
    mean = w1 * m1 + w2 * m2
    cov = w1 * S1 + w2 * S2 + w1 * w2 * np.outer(d, d)
    return mean, 0.5 * (cov + cov.T)


def merge(pg1, pg2, l1, l2, recenter=False):
    """Merge two weighted elements on their midpoint chart.

    Returns
    -------
    ProjectedGaussian, float
        The merged element and its weight ``l1 + l2``.
    """
    if not (l1 > 0 and l2 > 0):
        raise DomainError("merge weights must be positive")
    ts = midpoint_chart(pg1.ts, pg2.ts)
    m1, S1 = pg1.in_chart(ts)
    m2, S2 = pg2.in_chart(ts)
    mean, cov = merge_moments(l1, m1, S1, l2, m2, S2)
    compat = (l1 * pg1.compat + l2 * pg2.compat) / (l1 + l2)
    out = ProjectedGaussian(ts, mean, repair_spd(cov), compat=compat)
    if recenter:
        out = out.recentered()
    return out, l1 + l2


def compose(pg_pose, pg_motion, step=COMPOSE_STEP):
    """Apply an uncertain motion to an uncertain pose.

    The output chart sits at the composed mean rotation; the covariance
    is ``J blockdiag(Σ_pose, Σ_motion) J^T`` with the 6x12 finite-difference
    Jacobian of the composition.
    """
    dq = dq_mul(pg_motion.mean_dq(), pg_pose.mean_dq())
    q_r, t = dq_to_pose(dq)
    ts = TangentSpace(canonical_sign(q_r / np.linalg.norm(q_r)))
    mean = np.r_[0.0, 0.0, 0.0, t]
    J = composition_jacobian(pg_pose.mean, pg_motion.mean, pg_pose.ts, pg_motion.ts, ts, step)
    cov = J @ block_diag(pg_pose.cov, pg_motion.cov) @ J.T
    return ProjectedGaussian(ts, mean, repair_spd(cov), compat=pg_pose.compat * pg_motion.compat)


def _as_moments(g):
    if isinstance(g, (GaussianKernel, ProjectedGaussian)):
        return np.atleast_1d(g.mean), np.atleast_2d(g.cov)
    m, S = g
    return np.atleast_1d(np.asarray(m, dtype=float)), np.atleast_2d(np.asarray(S, dtype=float))


def kl_divergence(g1, g2):
    """Closed-form ``KL(g1 || g2)`` of two Gaussians."""
    m1, S1 = _as_moments(g1)
    m2, S2 = _as_moments(g2)
    if m1.size != m2.size:
        raise DomainError("kernels have different dimensions")
    d = m1.size
    L2 = _cholesky(S2)
    L1 = _cholesky(S1)
    A = np.linalg.solve(L2, L1)
    z = np.linalg.solve(L2, m1 - m2)
    logdet = 2.0 * (np.sum(np.log(np.diag(L2))) - np.sum(np.log(np.diag(L1))))
    return 0.5 * (np.sum(A * A) + z @ z - d + logdet)


def skl_divergence(g1, g2):
    """Symmetrized KL divergence ``KL(g1||g2) + KL(g2||g1)``.

    Evaluated as ``½ tr(Σ2⁻¹Σ1 + Σ1⁻¹Σ2 + (Σ1⁻¹+Σ2⁻¹) Δ Δ^T) - d`` where the
    log-determinants cancel.
    """
    if isinstance(g1, ProjectedGaussian) and isinstance(g2, ProjectedGaussian):
        if not same_chart(g1.ts, g2.ts):
            raise DomainError("skl_divergence needs elements on a shared chart")
    m1, S1 = _as_moments(g1)
    m2, S2 = _as_moments(g2)
    if m1.size != m2.size:
        raise DomainError("kernels have different dimensions")
    d = m1.size
    L1 = _cholesky(S1)
    L2 = _cholesky(S2)
    A = np.linalg.solve(L2, L1)
    B = np.linalg.solve(L1, L2)
    delta = m1 - m2
    z1 = np.linalg.solve(L1, delta)
    z2 = np.linalg.solve(L2, delta)
    val = 0.5 * (np.sum(A * A) + np.sum(B * B) + z1 @ z1 + z2 @ z2) - d
    return max(float(val), 0.0)


def merge_bound_moments(l1, m1, S1, l2, m2, S2):
    """``B_s`` for two weighted Gaussians given on one chart."""
    m, S = merge_moments(l1, m1, S1, l2, m2, S2)
    return l1 * skl_divergence((m1, S1), (m, S)) + l2 * skl_divergence((m2, S2), (m, S))


def skl_merge_bound(pg_i, pg_j, l_i, l_j):
    """Upper bound ``B_s`` on the mixture sKL change caused by merging i and j.

    Both elements are re-expressed on their midpoint chart first.
    """
    if not (l_i > 0 and l_j > 0):
        raise DomainError("merge weights must be positive")
    ts = midpoint_chart(pg_i.ts, pg_j.ts)
    mi, Si = pg_i.in_chart(ts)
    mj, Sj = pg_j.in_chart(ts)
    return merge_bound_moments(l_i, mi, Si, l_j, mj, Sj)
