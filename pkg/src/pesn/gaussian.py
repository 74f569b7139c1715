"""Diagonal Gaussian primitives: value types, linear maps, seeded sampling.

Variances are stored as variances, never standard deviations. A variance of
exactly zero is legal everywhere and denotes a point mass; nothing in this
module divides by a variance without guarding.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Gaussian1D:
    """Scalar Gaussian with mean and variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)):
            raise ValueError("mean and variance must be finite")
        if self.variance < 0.0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


class DiagonalGaussian:
    """Gaussian vector with independent components.

    Attributes:
        mean: mean vector, shape (d,).
        variance: per-dimension variances, shape (d,), all >= 0.
    """

    __slots__ = ("mean", "variance")

    def __init__(self, mean, variance):
        mean = np.asarray(mean, dtype=float)
        variance = np.asarray(variance, dtype=float)
        if mean.ndim != 1 or variance.ndim != 1:
            raise ValueError("mean and variance must be 1-d")
        if mean.shape != variance.shape:
            raise ValueError(
                f"mean and variance lengths differ: {mean.shape} vs {variance.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(variance))):
            raise ValueError("mean and variance must be finite")
        if np.any(variance < 0.0):
            raise ValueError("all variances must be >= 0")
        self.mean = mean
        self.variance = variance

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def point_mass(cls, mean):
        """Degenerate Gaussian with zero variance at ``mean``."""
        mean = np.asarray(mean, dtype=float)
        return cls(mean, np.zeros_like(mean))

    @classmethod
    def isotropic(cls, mean, variance: float):
        mean = np.asarray(mean, dtype=float)
        return cls(mean, np.full_like(mean, float(variance)))

    def __repr__(self):
        return f"DiagonalGaussian(mean={self.mean!r}, variance={self.variance!r})"

    def __eq__(self, other):
        if not isinstance(other, DiagonalGaussian):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(
            self.variance, other.variance
        )


@dataclass(frozen=True)
class RngStream:
    """Named random stream over a counter-based generator.

    Identical ``(seed, stream_id)`` pairs yield identical sample sequences,
    independent of thread count or call interleaving, because every
    consumer builds a fresh Philox generator keyed by the pair.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.seed % 2**64, self.stream_id % 2**64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))

    def spawn(self, k: int) -> "RngStream":
        """Derived stream for sub-task ``k``; deterministic and distinct
        for distinct ``k`` under the same parent."""
        return RngStream(self.seed, (self.stream_id * 1_000_003 + k + 1) % 2**64)


def linear_transform(x: DiagonalGaussian, w, bias=None) -> DiagonalGaussian:
    """Push a diagonal Gaussian through ``y = W x + b``, keeping only the
    diagonal of the output covariance.

    Composition of two transforms matches a single transform with the
    matrix product exactly in the mean; the diagonal variances agree only
    when no row mixes correlated outputs (a diagonal approximation
    otherwise).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("W must be a matrix")
    if w.shape[1] != x.dim:
        raise ValueError(f"W has {w.shape[1]} columns, x has dim {x.dim}")
    if bias is None:
        bias = np.zeros(w.shape[0])
    bias = np.asarray(bias, dtype=float)
    if bias.shape != (w.shape[0],):
        raise ValueError(f"bias length {bias.shape} does not match {w.shape[0]} rows")
    mean = w @ x.mean + bias
    variance = (w * w) @ x.variance
    return DiagonalGaussian(mean, variance)


def gaussian_product(a: Gaussian1D, b: Gaussian1D):
    """Product of two scalar Gaussian densities.

    Returns ``(scale, c)`` such that ``N(z; a) * N(z; b) = scale * N(z; c)``
    pointwise. Used as an independent oracle for moment identities.
    """
    if a.variance <= 0.0 or b.variance <= 0.0:
        raise ValueError("gaussian_product requires strictly positive variances")
    pa, pb = 1.0 / a.variance, 1.0 / b.variance
    var_c = 1.0 / (pa + pb)
    mean_c = var_c * (pa * a.mean + pb * b.mean)
    s = a.variance + b.variance
    scale = np.exp(-0.5 * (a.mean - b.mean) ** 2 / s) / np.sqrt(2.0 * np.pi * s)
    return float(scale), Gaussian1D(float(mean_c), float(var_c))


def sample(x: DiagonalGaussian, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from ``x``; deterministic given ``rng``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = rng.generator()
    z = g.standard_normal((n, x.dim))
    return x.mean + z * np.sqrt(x.variance)
