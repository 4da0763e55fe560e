"""Simulated localization: sample generators, sensor model and the
fuse, prune and merge loop."""

import math
from dataclasses import dataclass, field

import numpy as np

from .element import ProjectedGaussian
from .errors import DomainError
from .mixture import (
    EmConfig,
    Mixture,
    compose_mixtures,
    em_fit,
    fuse_mixtures,
    init_mixture,
    l2_distance_sq,
    mixture_integral,
    prune,
    reduce_by_merging,
    sample_mixture,
    seed_centers,
)
from .montecarlo import McEstimate, rng_stream, stream_id
from .quaternion import (
    axis_angle_to_quat,
    canonical_sign,
    dq_inverse,
    dq_mul,
    dq_to_pose,
    pose_to_dq,
    qmul,
)
from .tangent import sphere_to_tangent_masked

__all__ = [
    "SAMPLE_KINDS",
    "SampleSpec",
    "make_samples",
    "sensor_model",
    "box_probability",
    "best_box",
    "GraspCriterion",
    "grasp_check",
    "PipelineConfig",
    "Observation",
    "run_pipeline",
    "demo_observations",
]

SAMPLE_KINDS = {
    "equal-on-quat-and-box": 6,
    "equal-rotation-xy-normal-z": 2,
    "sift-referred-to-object": 12,
}


@dataclass(frozen=True)
class SampleSpec:
    """Kind of synthetic pose samples and its parameters.

    ``equal-on-quat-and-box``
        Uniform rotation, translation uniform in a box given as
        ``[lo_x, hi_x, lo_y, hi_y, lo_z, hi_z]``.
    ``equal-rotation-xy-normal-z``
        ``[sigma_z, max_tilt]``: normal rotation about z followed by a tilt
        of uniform angle up to ``max_tilt`` about a uniform axis in the
        x-y plane; zero translation.
    ``sift-referred-to-object``
        ``[sigma_z, max_tilt, sigma_xy, mean_z, sigma_z_offset, qa, qb, qc,
        qd, tx, ty, tz]``: a feature pose drawn as above with a normal
        translation offset, composed with the inverse of the feature pose in
        object coordinates.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in SAMPLE_KINDS:
            raise DomainError(f"unknown sample kind {self.kind!r}")
        p = np.asarray(self.params, dtype=float).reshape(-1)
        if p.size != SAMPLE_KINDS[self.kind]:
            raise DomainError(f"{self.kind} takes {SAMPLE_KINDS[self.kind]} parameters, got {p.size}")
        if not np.all(np.isfinite(p)):
            raise DomainError("sample parameters must be finite")
        object.__setattr__(self, "params", tuple(p.tolist()))


def _cone_rotations(rng, n, sigma_z, max_tilt):
    """Normal rotation about z followed by a uniform tilt about an x-y axis."""
    zrad = sigma_z * rng.normal(n)
    qz = np.column_stack([np.cos(zrad / 2), np.zeros(n), np.zeros(n), np.sin(zrad / 2)])
    phi = 2.0 * np.pi * rng.uniform(n)
    tilt = max_tilt * rng.uniform(n)
    s = np.sin(tilt / 2)
    qxy = np.column_stack([np.cos(tilt / 2), s * np.cos(phi), s * np.sin(phi), np.zeros(n)])
    return qmul(qxy, qz)


def make_samples(n, spec, seed):
    """Draw ``n`` synthetic poses as 7-vectors ``(q, t)``.

    Parameters
    ----------
    n : int
    spec : SampleSpec
    seed : int

    Returns
    -------
    ndarray, shape (n, 7)
    """
    if n < 0:
        raise DomainError("sample count must be non-negative")
    rng = rng_stream(seed, stream_id("make-samples", spec.kind, spec.params))
    p = np.asarray(spec.params)
    if spec.kind == "equal-on-quat-and-box":
        g = rng.normal((n, 4))
        q = g / np.linalg.norm(g, axis=1, keepdims=True)
        lo, hi = p[0::2], p[1::2]
        if np.any(lo > hi):
            raise DomainError("box lower bounds must not exceed upper bounds")
        t = lo + (hi - lo) * rng.uniform((n, 3))
    elif spec.kind == "equal-rotation-xy-normal-z":
        q = _cone_rotations(rng, n, p[0], p[1])
        t = np.zeros((n, 3))
    else:
        qf = _cone_rotations(rng, n, p[0], p[1])
        tf = np.column_stack([p[2] * rng.normal(n), p[2] * rng.normal(n), p[3] + p[4] * rng.normal(n)])
        qfo = p[5:9]
        nq = np.linalg.norm(qfo)
        if nq == 0:
            raise DomainError("feature-in-object rotation must be nonzero")
        dq_of = dq_inverse(pose_to_dq(qfo / nq, p[9:12]))
        q, t = dq_to_pose(dq_mul(pose_to_dq(qf, tf), dq_of))
    return np.column_stack([canonical_sign(q), t])


def sensor_model(feature_model, camera_to_feature, feature_to_object):
    """Object pose belief ``PG1 ∘ MoPG0 ∘ PG2`` in camera coordinates."""
    first = compose_mixtures(feature_model, Mixture.single(camera_to_feature))
    return compose_mixtures(Mixture.single(feature_to_object), first)


def box_probability(m, box, n, seed, chart=None):
    """Probability that the mixture lies in a 6-D box of chart coordinates.

    Parameters
    ----------
    m : Mixture
    box : array_like, shape (6, 2)
        Lower and upper bound per tangent coordinate.
    n : int
    seed : int
    chart : TangentSpace, optional
        Chart for the rotation coordinates; defaults to the chart of the
        highest-weight element.

    Returns
    -------
    McEstimate
        Fraction of samples in the box with its binomial standard error.
    """
    box = np.asarray(box, dtype=float)
    if box.shape != (6, 2) or np.any(box[:, 0] > box[:, 1]):
        raise DomainError("box must be six [low, high] intervals")
    if n < 1:
        raise DomainError("sample count must be positive")
    chart = m.elements[m.dominant()].ts if chart is None else chart
    x, _ = sample_mixture(m, n, seed)
    r, valid = sphere_to_tangent_masked(chart, x)
    with np.errstate(invalid="ignore"):
        inside = valid & np.all((r >= box[:, 0]) & (r <= box[:, 1]), axis=1)
    return McEstimate.from_values(inside.astype(float), seed)


def best_box(m, boxes, n, seed, chart=None):
    """Index of the box with the highest estimated probability and all estimates."""
    est = [box_probability(m, b, n, seed, chart) for b in boxes]
    return int(np.argmax([e.value for e in est])), est


@dataclass(frozen=True)
class GraspCriterion:
    """Threshold ``G`` on the squared L2 distance with failure budget ``epsilon``."""

    G: float
    epsilon: float = 0.05
    n: int = 20000
    seed: int = 0
    distance_kind: str = "l2-squared"

    def __post_init__(self):
        if not self.G >= 0:
            raise DomainError("G must be non-negative")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")
        if self.distance_kind != "l2-squared":
            raise DomainError(f"unsupported distance kind {self.distance_kind!r}")
        if self.n < 1:
            raise DomainError("sample count must be positive")


def grasp_check(gripper, obj, crit):
    """Conservative grasp test: pass iff ``estimate + 3 std_error <= G``."""
    est = l2_distance_sq(gripper, obj, crit.n, crit.seed)
    return bool(est.value + 3.0 * est.std_error <= crit.G), est


@dataclass(frozen=True)
class Observation:
    """One feature detection: feature model with camera and object transforms."""

    feature_model: Mixture
    camera_to_feature: ProjectedGaussian
    feature_to_object: ProjectedGaussian


@dataclass(frozen=True)
class PipelineConfig:
    """Settings of :func:`run_pipeline`.

    Attributes
    ----------
    prune_budget : float
        Total weight that may be dropped over the whole run.
    merge_target : int
        Element count after each merge stage.
    prune_max_drop : int, optional
        Most elements dropped per prune stage.
    prune_threshold : float, optional
        Drop only elements lighter than this.
    seed : int
    integral_samples : int
        Samples for the per-stage ``∫p`` estimate.
    alpha_form : str
    gripper : Mixture, optional
    stop_criterion : GraspCriterion, optional
        Stop early once the belief passes the grasp check against ``gripper``.
    """

    prune_budget: float = 0.1
    merge_target: int = 10
    prune_max_drop: int = None
    prune_threshold: float = None
    seed: int = 0
    integral_samples: int = 20000
    alpha_form: str = "text"
    gripper: Mixture = field(default=None, compare=False)
    stop_criterion: GraspCriterion = None

    def __post_init__(self):
        if not 0 <= self.prune_budget < 1:
            raise DomainError("prune budget must lie in [0, 1)")
        if self.merge_target < 1:
            raise DomainError("merge target must be at least 1")
        if self.prune_max_drop is not None and self.prune_max_drop < 0:
            raise DomainError("prune_max_drop must be non-negative")
        if (self.stop_criterion is None) != (self.gripper is None):
            raise DomainError("stop criterion and gripper must be given together")


def _stage(report, obs, stage, m, cfg, **extra):
    est = mixture_integral(m, cfg.integral_samples, cfg.seed)
    entry = {"observation": obs, "stage": stage, "count": len(m)}
    entry.update(extra)
    entry["weight_sum"] = math.fsum(m.weights)
    entry["integral"] = {"value": est.value, "std_error": est.std_error}
    report["stages"].append(entry)


def run_pipeline(observations, cfg):
    """Fold a sequence of observations into one object pose belief.

    Each observation passes through the sensor model and is fused with the
    running belief; after every fusion the belief is pruned within the
    remaining budget and merged down to ``cfg.merge_target`` elements.

    Returns
    -------
    Mixture, dict
        Final belief and a JSON-serializable per-stage report.
    """
    observations = list(observations)
    if not observations:
        raise DomainError("the pipeline needs at least one observation")
    report = {"stages": [], "cumulative_dropped": 0.0, "drop_bound": 0.0, "stopped": None, "notes": []}
    belief = None
    dropped_total = 0.0
    for i, ob in enumerate(observations):
        sensed = sensor_model(ob.feature_model, ob.camera_to_feature, ob.feature_to_object)
        _stage(report, i, "sensor", sensed, cfg)
        if belief is None:
            belief = sensed
        else:
            belief = fuse_mixtures(belief, sensed, cfg.alpha_form)
            _stage(report, i, "fuse", belief, cfg)
            remaining = cfg.prune_budget - dropped_total
            if remaining <= 0:
                report["notes"].append(f"observation {i}: prune budget exhausted, pruning skipped")
            elif cfg.prune_max_drop != 0:
                count = None if cfg.prune_max_drop is None else max(len(belief) - cfg.prune_max_drop, 1)
                belief, dropped = prune(belief, threshold=cfg.prune_threshold, count=count, budget=remaining)
                dropped_total += dropped
                _stage(report, i, "prune", belief, cfg, dropped_weight=dropped)
            if len(belief) > cfg.merge_target:
                belief, bounds = reduce_by_merging(belief, cfg.merge_target, return_bounds=True)
                _stage(report, i, "merge", belief, cfg, bounds=[float(b) for b in bounds])
        if cfg.stop_criterion is not None:
            ok, est = grasp_check(cfg.gripper, belief, cfg.stop_criterion)
            if ok:
                report["stopped"] = {"observation": i, "reason": "grasp criterion met", "distance": est.to_dict()}
                break
    report["cumulative_dropped"] = dropped_total
    report["drop_bound"] = 2.0 * dropped_total
    report["final_count"] = len(belief)
    return belief, report


def demo_observations(seed=0, n_samples=1500, n_components=7):
    """Three feature observations of one object, each with a fitted feature model.

    The feature uncertainty is fitted by EM to samples of a visibility cone
    and shared by all features. The returned observations agree on the
    object pose, which is also returned as a 7-vector.
    """
    spec = SampleSpec("sift-referred-to-object", [0.05, 0.3, 0.005, 0.0, 0.02, 1, 0, 0, 0, 0, 0, 0])
    X = make_samples(n_samples, spec, seed)
    init = init_mixture(X[seed_centers(X, n_components, seed)], trans_var=4e-4)
    feature_model, _ = em_fit(init, X, EmConfig(max_iterations=50, min_increment=1e-6, seed=seed))
    q_obj = axis_angle_to_quat(0.35, [0.2, 1.0, 0.3])
    dq_obj = pose_to_dq(q_obj, [0.1, -0.05, 0.8])
    feature_poses = [
        (axis_angle_to_quat(0.2, [1, 0, 0]), [0.05, 0.0, 0.02]),
        (axis_angle_to_quat(-0.25, [0, 1, 0]), [0.0, 0.06, 0.01]),
        (axis_angle_to_quat(0.3, [1, 1, 0]), [-0.04, -0.05, 0.0]),
    ]
    meas_cov = np.diag([1e-4, 1e-4, 1e-4, 1e-6, 1e-6, 1e-6])
    obs = []
    for q_fo, t_fo in feature_poses:
        dq_fo = pose_to_dq(q_fo, t_fo)
        qc, tc = dq_to_pose(dq_mul(dq_obj, dq_fo))
        pg1 = ProjectedGaussian(canonical_sign(qc), np.r_[0.0, 0.0, 0.0, tc], meas_cov)
        qi, ti = dq_to_pose(dq_inverse(dq_fo))
        pg2 = ProjectedGaussian.deterministic(qi, ti)
        obs.append(Observation(feature_model, pg1, pg2))
    return obs, np.r_[canonical_sign(q_obj), 0.1, -0.05, 0.8]
