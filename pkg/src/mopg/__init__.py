"""Mixtures of projected Gaussians for 6-DOF pose uncertainty."""

from .element import (
    GaussianKernel,
    ProjectedGaussian,
    compose,
    correction_weight,
    density,
    estimate_mass,
    fuse,
    mahalanobis_weight,
    merge,
    sample,
    skl_divergence,
    skl_merge_bound,
)
from .errors import DegenerateFusionError, DomainError, MopgError, NumericError, ProjectionError
from .mixture import (
    EmConfig,
    Mixture,
    compose_mixtures,
    em_fit,
    fuse_mixtures,
    l2_distance_sq,
    prune,
    reduce_by_merging,
    sample_mixture,
)
from .montecarlo import McEstimate, error_estimate, importance_estimate, rng_stream
from .quaternion import DualQuaternion, Quaternion
from .tangent import (
    TangentSpace,
    canonical_basis,
    change_tangent_space,
    jacobian,
    pose_transformation_ts,
    sphere_to_tangent,
    tangent_to_sphere,
)

__version__ = "0.1.0"
