"""Mixtures of projected Gaussians."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .element import (
    ProjectedGaussian,
    compose,
    fuse_with_weight,
    merge,
    repair_spd,
    sample,
    skl_merge_bound,
)
from .errors import DegenerateFusionError, DomainError, ProjectionError
from .montecarlo import McEstimate, rng_stream, stream_id
from .quaternion import canonical_sign
from .tangent import TangentSpace, sphere_to_tangent_masked

__all__ = [
    "WEIGHT_TOL",
    "Mixture",
    "EmConfig",
    "Responsibilities",
    "alpha_weight",
    "fuse_mixtures",
    "compose_mixtures",
    "prune",
    "reduce_by_merging",
    "sample_mixture",
    "responsibilities",
    "log_likelihood",
    "em_fit",
    "seed_centers",
    "init_mixture",
    "l2_distance_sq",
    "mixture_integral",
]

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-9
TIE_TOL = 1e-12


class Mixture:
    """Weighted sequence of projected Gaussians with weights summing to one.

    Parameters
    ----------
    elements : sequence of ProjectedGaussian
    weights : array_like
        Non-negative weights with ``|sum - 1| <= 1e-9``.
    """

    __slots__ = ("elements", "weights")

    def __init__(self, elements, weights):
        elements = tuple(elements)
        w = np.array(weights, dtype=float).reshape(-1)
        if not elements:
            raise DomainError("a mixture needs at least one element")
        if len(elements) != w.size:
            raise DomainError("number of weights does not match number of elements")
        if not all(isinstance(e, ProjectedGaussian) for e in elements):
            raise DomainError("mixture elements must be ProjectedGaussian")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1 + WEIGHT_TOL):
            raise DomainError("mixture weights must lie in [0, 1]")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"mixture weights sum to {w.sum()!r}, not 1")
        w.flags.writeable = False
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("Mixture is immutable")

    @classmethod
    def normalized(cls, elements, weights):
        """Build a mixture after rescaling ``weights`` to sum to one."""
        w = np.asarray(weights, dtype=float)
        total = math.fsum(w)
        if not total > 0 or not np.isfinite(total):
            raise DomainError("weights must have a positive finite sum")
        return cls(elements, w / total)

    @classmethod
    def single(cls, pg):
        return cls([pg], [1.0])

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(zip(self.elements, self.weights))

    def __repr__(self):
        return f"Mixture(n={len(self)}, weights={np.round(self.weights, 6).tolist()})"

    def dominant(self):
        """Index of the highest-weight element (first on ties)."""
        return int(np.argmax(self.weights))

    def component_log_densities(self, q7):
        """Array ``(N, K)`` of element log densities at points ``q7``."""
        q7 = np.atleast_2d(np.asarray(q7, dtype=float))
        return np.stack([e.log_density(q7) for e in self.elements], axis=-1)

    def log_density(self, q7):
        q7 = np.asarray(q7, dtype=float)
        lp = self.component_log_densities(q7)
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)
        out = logsumexp(lp + lw, axis=-1)
        return out.reshape(q7.shape[:-1])

    def density(self, q7):
        """Mixture density ``sum_i λ_i p_i(q)``."""
        return np.exp(self.log_density(q7))

    def moved(self, motion):
        """Mixture pushed forward by an exact rigid motion."""
        return Mixture([e.moved(motion) for e in self.elements], self.weights)


# fusion and composition ---------------------------------------------------


def alpha_weight(p1, p2, form="text"):
    """Tangent-point proximity factor for fusion.

    ``form="text"`` gives ``exp(-5 arccos((p1·p2)^2))``; ``form="code"``
    gives ``exp(-5 arccos(|p1·p2|)^2)``.
    """
    c = float(np.dot(p1, p2))
    if form == "text":
        return math.exp(-5.0 * math.acos(min(c * c, 1.0)))
    if form == "code":
        return math.exp(-5.0 * math.acos(min(abs(c), 1.0)) ** 2)
    raise DomainError(f"unknown alpha form {form!r}")


def fuse_mixtures(m1, m2, alpha_form="text", recenter=True):
    """Fuse every pair of elements of two mixtures.

    The fused pair ``(i, j)`` gets weight proportional to
    ``λ_i λ_j α_ij δ_ij / mass_ij``. Pairs that cannot be projected onto
    their midpoint chart are skipped.

    Raises
    ------
    DegenerateFusionError
        If every candidate weight is zero.
    """
    elements, weights = [], []
    for a, la in m1:
        for b, lb in m2:
            try:
                pg, delta = fuse_with_weight(a, b, recenter)
            except ProjectionError:
                continue
            alpha = alpha_weight(a.ts.point, b.ts.point, alpha_form)
            elements.append(pg)
            weights.append(la * lb * alpha * delta / pg.mass)
    total = math.fsum(weights)
    if not elements or not total > 0:
        raise DegenerateFusionError("all fused candidate weights vanished")
    return Mixture.normalized(elements, weights)


def compose_mixtures(m_pose, m_motion):
    """Compose every pose element with every motion element (weights λ_i λ_j)."""
    elements, weights = [], []
    for p, lp in m_pose:
        for m, lm in m_motion:
            elements.append(compose(p, m))
            weights.append(lp * lm)
    return Mixture.normalized(elements, weights)


# pruning and reduction ----------------------------------------------------


def prune(m, threshold=None, count=None, budget=None):
    """Drop the lowest-weight elements and renormalize.

    Parameters
    ----------
    m : Mixture
    threshold : float, optional
        Drop elements with weight below this value.
    count : int, optional
        Drop elements until at most ``count`` remain.
    budget : float, optional
        Never drop more total weight than this. Used alone, drops the
        lightest elements while the budget allows.

    Returns
    -------
    Mixture, float
        Pruned mixture and the total dropped weight ``D``. The probability
        of any region changes by at most ``2 D``.
    """
    if threshold is None and count is None and budget is None:
        raise DomainError("prune needs a threshold, a count or a budget")
    if count is not None and count < 1:
        raise DomainError("prune count must be at least 1")
    order = np.argsort(m.weights, kind="stable")
    n = len(m)
    dropped = []
    total = 0.0
    for idx in order:
        w = float(m.weights[idx])
        wanted = (threshold is not None and w < threshold) or (count is not None and n - len(dropped) > count)
        if threshold is None and count is None:
            wanted = True
        if not wanted:
            break
        if budget is not None and total + w > budget:
            break
        dropped.append(int(idx))
        total += w
    if len(dropped) == n:
        raise DomainError("prune policy would drop every element")
    keep = sorted(set(range(n)) - set(dropped))
    return Mixture.normalized([m.elements[i] for i in keep], m.weights[keep]), math.fsum(m.weights[dropped])


def _pair_merge(a, la, b, lb, recenter):
    if la == 0.0 and lb == 0.0:
        return a, 0.0
    if la == 0.0:
        return b, lb
    if lb == 0.0:
        return a, la
    return merge(a, b, la, lb, recenter)


def _pair_bound(a, la, b, lb):
    if la == 0.0 or lb == 0.0:
        return 0.0
    try:
        return skl_merge_bound(a, b, la, lb)
    except ProjectionError:
        return math.inf


def reduce_by_merging(m, target_count, recenter=False, return_bounds=False):
    """Greedily merge the pair with the smallest ``B_s`` until ``target_count`` remain.

    Ties within 1e-12 go to the lexicographically smallest index pair.

    Returns
    -------
    Mixture
        Or ``(Mixture, list of chosen B_s)`` when ``return_bounds`` is set.
    """
    if target_count < 1:
        raise DomainError("target count must be at least 1")
    items = [(e, float(w), uid) for uid, (e, w) in enumerate(m)]
    next_uid = len(items)
    cache = {}
    chosen = []
    while len(items) > target_count:
        best = None
        for i in range(len(items)):
            a, la, ua = items[i]
            for j in range(i + 1, len(items)):
                b, lb, ub = items[j]
                key = (ua, ub)
                if key not in cache:
                    cache[key] = _pair_bound(a, la, b, lb)
                bound = cache[key]
                if best is None or bound < best[0] - TIE_TOL:
                    best = (bound, i, j)
        bound, i, j = best
        if not np.isfinite(bound):
            raise ProjectionError("no pair of elements can be merged")
        a, la, _ = items[i]
        b, lb, _ = items[j]
        merged, lm = _pair_merge(a, la, b, lb, recenter)
        items[i] = (merged, lm, next_uid)
        next_uid += 1
        del items[j]
        chosen.append(bound)
    out = Mixture.normalized([e for e, _, _ in items], [w for _, w, _ in items])
    return (out, chosen) if return_bounds else out


# sampling -----------------------------------------------------------------


def sample_mixture(m, n, seed):
    """Draw ``n`` points and their component indices.

    Returns
    -------
    points : ndarray, shape (n, 7)
    index : ndarray of int, shape (n,)
    """
    if n < 0:
        raise DomainError("sample count must be non-negative")
    idx = rng_stream(seed, stream_id("mixture-categorical", len(m))).categorical(m.weights, n)
    out = np.empty((n, 7))
    for k, e in enumerate(m.elements):
        sel = np.flatnonzero(idx == k)
        if sel.size:
            out[sel] = sample(e, sel.size, seed, stream_id("mixture-component", k, e.key()))
    return out, idx


# L2 distance --------------------------------------------------------------


def _proposal_logpdf(elements, q7, weights=None):
    """Log density of the pushforward of the element Gaussians onto S3 x R3.

    Elements get equal weight unless ``weights`` is given.
    """
    parts = []
    for e in elements:
        x, valid = sphere_to_tangent_masked(e.ts, q7)
        x = np.where(valid[:, None], x, e.mean)
        r2 = np.sum(x[:, :3] ** 2, axis=1)
        lp = e.chart_logpdf(x) - math.log(2.0) + 2.0 * np.log1p(r2)
        parts.append(np.where(valid, lp, -np.inf))
    lp = np.stack(parts, axis=1)
    if weights is None:
        return logsumexp(lp, axis=1) - math.log(len(elements))
    with np.errstate(divide="ignore"):
        return logsumexp(lp + np.log(np.asarray(weights, dtype=float)), axis=1)


def mixture_integral(m, n, seed):
    """Importance-sampled total probability ``∫ p`` of a mixture.

    Samples come from the mixture's own generative process, whose density
    is the pushforward of the chart Gaussians. The ratio to the normalized
    density therefore checks the mass normalization of every element.
    """
    x, _ = sample_mixture(m, n, seed)
    y = np.exp(m.log_density(x) - _proposal_logpdf(m.elements, x, m.weights))
    if not np.all(np.isfinite(y)):
        raise ProjectionError("non-finite integral ratio")
    return McEstimate.from_values(y, seed)


def l2_distance_sq(m1, m2, n, seed):
    """Importance-sampled ``∫ (p1 - p2)^2`` over S3 x R3.

    The proposal is the equal-weight union of all elements of both
    mixtures, sampled with equal allocation per element; its density is
    evaluated exactly over every element chart. Elements are ordered by
    content hash, so the estimate is symmetric in ``(m1, m2)``.

    Returns
    -------
    McEstimate
    """
    if n < 1:
        raise DomainError("sample count must be positive")
    comps = sorted(list(m1.elements) + list(m2.elements), key=lambda e: e.key())
    K = len(comps)
    base, extra = divmod(n, K)
    counts = [base + (1 if k < extra else 0) for k in range(K)]
    means, variances, ns = [], [], []
    for k, e in enumerate(comps):
        if counts[k] == 0:
            continue
        x = sample(e, counts[k], seed, stream_id("l2", e.key(), k))
        diff = m1.density(x) - m2.density(x)
        y = diff * diff / np.exp(_proposal_logpdf(comps, x))
        if not np.all(np.isfinite(y)):
            raise ProjectionError("non-finite L2 integrand ratio")
        means.append(np.mean(y))
        variances.append(np.var(y))
        ns.append(counts[k])
    means, variances, ns = map(np.asarray, (means, variances, ns))
    # strata carry equal proposal weight 1/K
    value = float(np.sum(means) / K)
    se2 = float(np.sum(variances / ns) / K**2)
    return McEstimate(value, n, se2 * n, math.sqrt(se2), int(seed))


# EM -----------------------------------------------------------------------


@dataclass(frozen=True)
class EmConfig:
    """Settings of :func:`em_fit`.

    Attributes
    ----------
    max_iterations : int
    min_increment : float
        Stop once the relative log-likelihood gain falls below this.
    eps : float
        Added to covariance diagonals in the M step.
    seed : int
    recenter : bool
        Move each chart to its component's projected rotation mean.
    starvation_floor : float
        Components with fewer effective samples are dropped.
    max_halvings : int
        Damped fallback steps tried when a full step would lower the
        log-likelihood.
    """

    max_iterations: int = 100
    min_increment: float = 1e-8
    eps: float = 1e-9
    seed: int = 0
    recenter: bool = True
    starvation_floor: float = 1.0
    max_halvings: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DomainError("max_iterations must be at least 1")
        if not self.min_increment > 0:
            raise DomainError("min_increment must be positive")
        if self.eps < 0:
            raise DomainError("eps must be non-negative")


@dataclass(frozen=True)
class Responsibilities:
    """Posterior component memberships ``gamma`` (samples x components)."""

    gamma: np.ndarray
    log_likelihood: float

    @property
    def counts(self):
        return self.gamma.sum(axis=0)


def _log_terms(elements, weights, X):
    with np.errstate(divide="ignore"):
        lw = np.log(np.asarray(weights, dtype=float))
    return np.stack([e.log_density(X) for e in elements], axis=1) + lw


def _check_rows(lt):
    dead = ~np.any(np.isfinite(lt), axis=1)
    if np.any(dead):
        raise ProjectionError(f"sample {int(np.flatnonzero(dead)[0])} has zero density under every component")


def responsibilities(m, samples):
    """E step: responsibilities of each component for each sample."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    lt = _log_terms(m.elements, m.weights, X)
    _check_rows(lt)
    lse = logsumexp(lt, axis=1)
    return Responsibilities(np.exp(lt - lse[:, None]), float(np.sum(lse)))


def log_likelihood(m, samples):
    """Sum of log mixture densities over the samples."""
    return float(np.sum(m.log_density(np.atleast_2d(samples))))


def _ll(elements, weights, X):
    lt = _log_terms(elements, weights, X)
    if not np.all(np.any(np.isfinite(lt), axis=1)):
        return -math.inf
    return float(np.sum(logsumexp(lt, axis=1)))


def _moments(e, gamma_k, X, eps):
    x, valid = sphere_to_tangent_masked(e.ts, X)
    x = np.where(valid[:, None], x, 0.0)
    nk = gamma_k.sum()
    mu = gamma_k @ x / nk
    d = x - mu
    cov = (gamma_k[:, None] * d).T @ d / nk + eps * np.eye(6)
    return mu, 0.5 * (cov + cov.T)


def em_fit(m_init, samples, cfg=None):
    """Fit a mixture to pose samples by expectation maximization.

    Each M step computes weighted moments on every component's chart and,
    when ``cfg.recenter`` is set, moves the chart to the projected rotation
    mean. A step is accepted only if it does not lower the log-likelihood;
    otherwise the step without recentering and then damped steps are tried,
    and the fit stops if none of them improves.

    Parameters
    ----------
    m_init : Mixture
    samples : array_like, shape (N, 7)
    cfg : EmConfig, optional

    Returns
    -------
    Mixture, list of float
        Fitted mixture and the log-likelihood after every accepted step
        (the first entry is the initial value).
    """
    cfg = cfg or EmConfig()
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] == 0 or X.shape[1] != 7:
        raise DomainError("samples must be a non-empty (N, 7) array")
    N = X.shape[0]
    elements = list(m_init.elements)
    weights = np.asarray(m_init.weights, dtype=float)
    lt = _log_terms(elements, weights, X)
    _check_rows(lt)
    ll = float(np.sum(logsumexp(lt, axis=1)))
    trace = [ll]
    for it in range(cfg.max_iterations):
        gamma = np.exp(lt - logsumexp(lt, axis=1)[:, None])
        nk = gamma.sum(axis=0)
        healthy = nk >= cfg.starvation_floor
        if not np.any(healthy):
            raise ProjectionError("every component is starved")
        moments = [(_moments(e, gamma[:, k], X, cfg.eps) if healthy[k] else None) for k, e in enumerate(elements)]

        def build(t, drop, recenter):
            els, ws = [], []
            for k, e in enumerate(elements):
                if moments[k] is None:
                    if drop:
                        continue
                    els.append(e)
                    ws.append(weights[k] + t * (nk[k] / N - weights[k]))
                    continue
                mu, cov = moments[k]
                if t != 1.0:
                    mu = e.mean + t * (mu - e.mean)
                    cov = e.cov + t * (cov - e.cov)
                pg = ProjectedGaussian(e.ts, mu, repair_spd(cov), compat=e.compat)
                els.append(pg.recentered() if recenter else pg)
                ws.append(weights[k] + t * (nk[k] / N - weights[k]))
            ws = np.asarray(ws)
            return els, ws / ws.sum()

        plans = []
        starving = not np.all(healthy)
        for drop in ([True, False] if starving else [False]):
            if cfg.recenter:
                plans.append((1.0, drop, True))
            plans.append((1.0, drop, False))
        plans += [(0.5**h, False, False) for h in range(1, cfg.max_halvings + 1)]
        accepted = None
        for t, drop, rec in plans:
            els, ws = build(t, drop, rec)
            cand = _ll(els, ws, X)
            if cand >= ll:
                accepted = (els, ws, cand)
                break
        if accepted is None:
            log.debug("EM stalled at iteration %d", it)
            break
        els, ws, cand = accepted
        if len(els) < len(elements):
            log.info("EM dropped %d starved component(s)", len(elements) - len(els))
        gain = (cand - ll) / max(abs(ll), 1e-300)
        elements, weights, ll = els, ws, cand
        lt = _log_terms(elements, weights, X)
        trace.append(ll)
        if gain < cfg.min_increment:
            break
    return Mixture.normalized(elements, weights), trace


def seed_centers(samples, k, seed=0):
    """Pick ``k`` sample indices by k-means++ seeding.

    Distances combine the rotation angle between quaternions with the
    Euclidean translation distance.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if not 1 <= k <= X.shape[0]:
        raise DomainError("k must lie between 1 and the number of samples")
    rng = rng_stream(seed, stream_id("seed-centers", k))
    chosen = [int(rng.categorical(np.ones(X.shape[0]), 1)[0])]
    d2 = np.full(X.shape[0], np.inf)
    for _ in range(1, k):
        c = X[chosen[-1]]
        ang = 2.0 * np.arccos(np.clip(np.abs(X[:, :4] @ c[:4]), 0.0, 1.0))
        d2 = np.minimum(d2, ang**2 + np.sum((X[:, 4:] - c[4:]) ** 2, axis=1))
        if not np.any(d2 > 0):
            chosen.append(chosen[-1])
            continue
        chosen.append(int(rng.categorical(d2, 1)[0]))
    return chosen


def init_mixture(centers, rot_var=(0.01, 0.02, 0.04), trans_var=1e-6):
    """Equal-weight mixture with one element centred on each pose.

    Each element sits on the chart at its centre's rotation with a fixed
    diagonal covariance.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    tv = np.broadcast_to(np.asarray(trans_var, dtype=float), (3,))
    cov = np.diag(np.r_[np.asarray(rot_var, dtype=float), tv])
    els = []
    for c in centers:
        q = c[:4] / np.linalg.norm(c[:4])
        els.append(ProjectedGaussian(TangentSpace(canonical_sign(q)), np.r_[0.0, 0.0, 0.0, c[4:]], cov))
    return Mixture.normalized(els, np.ones(len(els)))
