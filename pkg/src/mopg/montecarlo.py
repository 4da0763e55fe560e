"""Seeded Monte Carlo integration.

Random streams use the Philox-4x64 counter-based generator (as provided
by :class:`numpy.random.Philox`) keyed by ``(seed, stream_id)`` through
:class:`numpy.random.SeedSequence`. Uniforms are formed from the top 53
bits of each raw 64-bit word, shifted into the open interval (0, 1), and
normals are the inverse normal CDF of those uniforms. Every draw consumes
exactly one word, so streams stay aligned across platforms.
"""

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DomainError, NumericError

__all__ = [
    "McEstimate",
    "RngStream",
    "rng_stream",
    "stream_id",
    "importance_estimate",
    "error_estimate",
    "sobol_normals",
]

_TWO_M53 = 2.0**-53


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo integral estimate.

    Attributes
    ----------
    value : float
        Sample mean of the integrand-over-proposal ratios.
    n : int
        Sample count.
    sample_variance : float
        Population variance of the ratios.
    std_error : float
        ``sqrt(sample_variance / n)``.
    seed : int
    """

    value: float
    n: int
    sample_variance: float
    std_error: float
    seed: int

    @classmethod
    def from_values(cls, y, seed, scale=1.0):
        y = np.asarray(y, dtype=float)
        n = y.size
        if n < 1:
            raise DomainError("estimate needs at least one sample")
        value = float(np.mean(y))
        var = float(np.var(y))
        return cls(scale * value, n, scale * scale * var, float(scale * np.sqrt(var / n)), int(seed))

    def to_dict(self):
        return {"value": self.value, "n": self.n, "std_error": self.std_error, "seed": self.seed}


def stream_id(*parts):
    """Deterministic 64-bit stream id from strings, numbers or arrays."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part, dtype=float).tobytes())
        else:
            h.update(repr(part).encode())
        h.update(b"|")
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Deterministic uniform and normal source for one ``(seed, stream_id)``."""

    def __init__(self, seed, stream=0):
        if seed < 0 or stream < 0:
            raise DomainError("seed and stream id must be non-negative")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self._bitgen = np.random.Philox(ss)
        self._ss = ss

    def uniform(self, size=None):
        """Uniform draws in the open interval (0, 1)."""
        shape = () if size is None else size
        n = int(np.prod(shape))
        raw = self._bitgen.random_raw(n)
        u = ((raw >> np.uint64(11)).astype(float) + 0.5) * _TWO_M53
        return u.reshape(shape) if size is not None else float(u[0])

    def normal(self, size=None):
        """Standard normal draws by inverse-CDF transform."""
        return ndtri(self.uniform(size))

    def categorical(self, weights, size):
        """Indices drawn with probabilities proportional to ``weights``."""
        w = np.asarray(weights, dtype=float)
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, self.uniform(size), side="right")
        return np.minimum(idx, w.size - 1)

    def generator(self):
        """Independent :class:`numpy.random.Generator` derived from this stream."""
        return np.random.Generator(np.random.Philox(self._ss.spawn(1)[0]))


def rng_stream(seed, stream=0):
    """Return the :class:`RngStream` for ``(seed, stream)``."""
    return RngStream(seed, stream)


def sobol_normals(n, d, seed, stream=0):
    """Scrambled Sobol points mapped to standard normals, shape ``(n, d)``.

    Each call is an independent randomized quasi-Monte Carlo replicate for
    a given ``(seed, stream)``.
    """
    if n < 1:
        raise DomainError("sample count must be positive")
    engine = qmc.Sobol(d, scramble=True, seed=rng_stream(seed, stream).generator())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        u = engine.random(n)
    return ndtri(np.clip(u, _TWO_M53, 1.0 - _TWO_M53))


def importance_estimate(ratio, sampler, n, seed, stream=0):
    """Importance-sampling estimate ``(1/n) sum g(x_i)/f(x_i)``.

    Parameters
    ----------
    ratio : callable
        Maps an array of samples to the integrand-over-proposal ratios.
    sampler : callable
        ``sampler(rng, n)`` draws ``n`` samples from the proposal.
    n : int
    seed, stream : int

    Returns
    -------
    McEstimate
    """
    if n < 1:
        raise DomainError("sample count must be positive")
    x = sampler(rng_stream(seed, stream), n)
    y = np.asarray(ratio(x), dtype=float)
    bad = ~np.isfinite(y)
    if np.any(bad):
        raise NumericError(f"non-finite ratio at sample {int(np.flatnonzero(bad)[0])}")
    return McEstimate.from_values(y, seed)


def error_estimate(y, region_mass=1.0):
    """First-order error ``M_A sqrt((mean(y^2) - mean(y)^2)/N)``."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise DomainError("error estimate needs at least two values")
    spread = max(float(np.mean(y * y) - np.mean(y) ** 2), 0.0)
    return float(region_mass * np.sqrt(spread / y.size))
