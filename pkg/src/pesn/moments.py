"""Output moments of activations applied to Gaussian inputs.

Three interchangeable engines:

* ``mc``: Monte Carlo sampling of the input distribution.
* ``analytic``: closed forms for tanh (logistic-CDF mean, Gaussian-pdf
  variance approximation).
* ``spline``: Gaussian-weighted integrals of precomputed cubic-spline
  interpolants of f..f^4, plus analytic tail terms, giving mean/variance
  and optionally skewness/kurtosis.

All variances are variances, not standard deviations.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erf

from pesn._backend import kernel_module
from pesn.activations import Activation, ConstantTail, get_activation
from pesn.gaussian import RngStream
from pesn.splines import SplineTable, build_spline_table

logger = logging.getLogger(__name__)

_SQRT_PI = np.sqrt(np.pi)
_TWO_PI = 2.0 * np.pi

_MC_CHUNK = 1_000_000


@dataclass(frozen=True)
class MomentSet:
    """First moments of a transformed distribution.

    Skewness and kurtosis are standardized (kurtosis of a Gaussian is 3)
    and present only when a fourth-order engine pass produced them.
    """

    mean: float
    variance: float
    skewness: Optional[float] = None
    kurtosis: Optional[float] = None


def _endpoint_values(z, mu, var):
    """erf/exp building blocks at one integration endpoint.

    ``z`` is a scalar, possibly infinite; ``mu``/``var`` are arrays.
    Returns (e0, e1, e2, e3, e4) where e0 = erf(x), e1 = exp(-x^2),
    e2 = x e1, e3 = (1 + x^2) e1, e4 = x^3 e1 for x = (z - mu)/sqrt(2 var).
    """
    if np.isinf(z):
        sign = 1.0 if z > 0 else -1.0
        shape = np.broadcast(mu, var).shape
        zero = np.zeros(shape)
        return np.full(shape, sign), zero, zero, zero, zero
    x = (z - mu) / np.sqrt(2.0 * var)
    e1 = np.exp(-x * x)
    return erf(x), e1, x * e1, (1.0 + x * x) * e1, x**3 * e1


def gauss_partial_moment(k: int, z_lo, z_hi, mu, var):
    """Closed form of the k-th raw Gaussian moment over an interval.

    Computes ``(1/sqrt(2 pi var)) * int_{z_lo}^{z_hi} z^k exp(-(z-mu)^2 /
    (2 var)) dz`` for k in 0..4; endpoints may be infinite; vectorized
    over ``mu`` and ``var`` (both strictly positive).
    """
    if not 0 <= k <= 4:
        raise ValueError(f"k must be in 0..4, got {k}")
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0.0):
        raise ValueError("var must be > 0")
    lo0, lo1, lo2, lo3, lo4 = _endpoint_values(z_lo, mu, var)
    hi0, hi1, hi2, hi3, hi4 = _endpoint_values(z_hi, mu, var)
    de0 = hi0 - lo0
    d1 = lo1 - hi1
    d2 = lo2 - hi2
    d3 = lo3 - hi3
    d4 = lo4 - hi4
    m, v = mu, var
    if k == 0:
        return 0.5 * de0
    if k == 1:
        return np.sqrt(v / _TWO_PI) * d1 + 0.5 * m * de0
    if k == 2:
        return (
            0.5 * (v + m * m) * de0
            + (v / _SQRT_PI) * d2
            + m * np.sqrt(2.0 * v / np.pi) * d1
        )
    if k == 3:
        return (
            np.sqrt(2.0 * v**3 / np.pi) * d3
            + 0.5 * m * (3.0 * v + m * m) * de0
            + (3.0 * v * m / _SQRT_PI) * d2
            + 3.0 * m * m * np.sqrt(v / _TWO_PI) * d1
        )
    return (
        (1.5 * v * v + 3.0 * v * m * m + 0.5 * m**4) * de0
        + (2.0 * v * v / _SQRT_PI) * d4
        + 4.0 * m * v * np.sqrt(2.0 * v / np.pi) * d3
        + ((3.0 * v * v + 6.0 * v * m * m) / _SQRT_PI) * d2
        + 2.0 * m**3 * np.sqrt(2.0 * v / np.pi) * d1
    )


def segment_integral(k: int, z_lo: float, z_hi: float, mu: float, var: float) -> float:
    """Gaussian-weighted monomial integral over one mesh segment.

    ``k`` is the monomial degree (0..3); infinite endpoints are allowed;
    ``var`` must be strictly positive.
    """
    if not 0 <= k <= 3:
        raise ValueError(f"k must be in 0..3, got {k}")
    if var <= 0.0:
        raise ValueError("var must be > 0")
    if z_lo > z_hi:
        raise ValueError("requires z_lo <= z_hi")
    return float(gauss_partial_moment(k, z_lo, z_hi, mu, var))


def analytic_tanh_mean(mu, var):
    """Closed-form mean of tanh of a Gaussian via the logistic CDF."""
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var < 0.0):
        raise ValueError("var must be >= 0")
    out = 2.0 / (1.0 + np.exp(-mu / np.sqrt(3.0 * var / np.pi**2 + 0.25))) - 1.0
    return out if out.ndim else float(out)


def analytic_tanh_variance(mu, var):
    """Closed-form variance of tanh of a Gaussian.

    Uses a Gaussian-pdf fit to 1 - tanh^2; the result is clamped below at
    zero (near saturation the raw expression can dip slightly negative).
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var < 0.0):
        raise ValueError("var must be >= 0")
    t = 2.0 / np.pi + var
    raw = (
        1.0
        - (2.0 / np.sqrt(_TWO_PI * t)) * np.exp(-mu * mu / (2.0 * t))
        - np.square(analytic_tanh_mean(mu, var))
    )
    out = np.maximum(raw, 0.0)
    return out if out.ndim else float(out)


def _tail_contribution(table: SplineTable, power: int, mu, var):
    """Analytic tail integrals of f**power outside [a, b]."""
    mesh = table.mesh
    acc = np.zeros_like(mu)
    for tail, z_lo, z_hi in (
        (table.activation.left_tail, -np.inf, mesh.a),
        (table.activation.right_tail, mesh.b, np.inf),
    ):
        if isinstance(tail, ConstantTail):
            if tail.value != 0.0:
                acc += tail.value**power * gauss_partial_moment(0, z_lo, z_hi, mu, var)
        else:
            acc += gauss_partial_moment(power, z_lo, z_hi, mu, var)
    return acc


def spline_raw_moments(table: SplineTable, mu, var, backend: str = "auto"):
    """Raw output moments A_p = E[f(z)^p] for p = 1..max_power.

    ``mu`` and ``var`` are arrays with ``var > 0`` elementwise; returns an
    array of shape (max_power, len(mu)).
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    if mu.shape != var.shape:
        raise ValueError("mu and var must have matching shapes")
    if np.any(var <= 0.0):
        raise ValueError("var must be > 0 elementwise; zero-variance inputs "
                         "are handled by the spline_moments front ends")
    kernels = kernel_module(backend)
    out = kernels.spline_interior_raw_moments(table.mesh.nodes, table.coeffs, mu, var)
    for p in range(1, table.max_power + 1):
        out[p - 1] += _tail_contribution(table, p, mu, var)
    return out


def spline_moments_vec(table: SplineTable, mu, var, order: int = 2,
                       backend: str = "auto"):
    """Vectorized spline moments.

    Returns ``(mean, variance)`` for order 2 or ``(mean, variance, skew,
    kurtosis)`` for order 4, each shaped like ``mu``. Zero-variance
    elements short-circuit to the exact point-mass moments. The variance
    is clamped at zero; pre-clamp deficits are tiny (within the certified
    variance bound) and logged at debug level.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if order == 4 and table.max_power < 4:
        raise ValueError("order-4 moments need a table built with max_power=4")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    if np.any(var < 0.0):
        raise ValueError("var must be >= 0")

    mean = np.empty_like(mu)
    variance = np.zeros_like(mu)
    skew = np.zeros_like(mu)
    kurt = np.full_like(mu, 3.0)

    degenerate = var == 0.0
    if np.any(degenerate):
        mean[degenerate] = table.activation(mu[degenerate])
    live = ~degenerate
    if np.any(live):
        raw = spline_raw_moments(table, mu[live], var[live], backend=backend)
        a1 = raw[0]
        v_raw = raw[1] - a1 * a1
        deficit = np.minimum(v_raw, 0.0)
        if np.any(deficit < 0.0):
            logger.debug(
                "clamped %d negative spline variances (worst deficit %.3e)",
                int(np.sum(deficit < 0.0)), float(deficit.min()),
            )
        v = np.maximum(v_raw, 0.0)
        mean[live] = a1
        variance[live] = v
        if order == 4:
            with np.errstate(divide="ignore", invalid="ignore"):
                s = (raw[2] - 3.0 * a1 * v - a1**3) / v**1.5
                k = (raw[3] - 4.0 * a1 * raw[2] + 6.0 * a1 * a1 * raw[1] - 3.0 * a1**4) / (v * v)
            skew[live] = np.where(v > 0.0, s, np.nan)
            kurt[live] = np.where(v > 0.0, k, np.nan)

    if order == 2:
        return mean, variance
    return mean, variance, skew, kurt


def spline_moments(table: SplineTable, mu: float, var: float,
                   order: int = 2) -> MomentSet:
    """Spline-engine moments for a single scalar input Gaussian."""
    res = spline_moments_vec(table, [mu], [var], order=order)
    if order == 2:
        return MomentSet(float(res[0][0]), float(res[1][0]))
    return MomentSet(*(float(r[0]) for r in res))


def mc_reference_vec(activation: Activation, mu, var, n: int, rng: RngStream,
                     order: int = 2):
    """Monte-Carlo moments with standard errors, vectorized over elements.

    Returns a dict with arrays ``mean``, ``variance``, ``se_mean``,
    ``se_variance`` and, for order 4, ``skewness`` and ``kurtosis``.
    Sampling is chunked, so ``n`` may be large.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    sd = np.sqrt(var)
    g = rng.generator()
    n_el = mu.shape[0]
    sums = np.zeros((4, n_el))
    chunk = max(1, _MC_CHUNK // n_el)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = activation(mu + sd * g.standard_normal((m, n_el)))
        x2 = x * x
        sums[0] += x.sum(axis=0)
        sums[1] += x2.sum(axis=0)
        sums[2] += (x2 * x).sum(axis=0)
        sums[3] += (x2 * x2).sum(axis=0)
        done += m
    r1, r2, r3, r4 = sums / n
    mean = r1
    m2 = np.maximum(r2 - r1 * r1, 0.0)
    m3 = r3 - 3.0 * r1 * r2 + 2.0 * r1**3
    m4 = r4 - 4.0 * r1 * r3 + 6.0 * r1 * r1 * r2 - 3.0 * r1**4
    out = {
        "mean": mean,
        "variance": m2,
        "se_mean": np.sqrt(m2 / n),
        "se_variance": np.sqrt(np.maximum(m4 - m2 * m2, 0.0) / n),
    }
    if order == 4:
        with np.errstate(divide="ignore", invalid="ignore"):
            out["skewness"] = np.where(m2 > 0.0, m3 / m2**1.5, 0.0)
            out["kurtosis"] = np.where(m2 > 0.0, m4 / (m2 * m2), 3.0)
    return out


def mc_moments(activation: Activation, mu: float, var: float, n: int,
               rng: RngStream, order: int = 2) -> MomentSet:
    """Empirical moments of f applied to n Gaussian samples."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if var < 0.0:
        raise ValueError("var must be >= 0")
    if var == 0.0:
        fmu = float(activation(mu))
        return MomentSet(fmu, 0.0, 0.0, 3.0) if order == 4 else MomentSet(fmu, 0.0)
    ref = mc_reference_vec(activation, [mu], [var], n, rng, order=order)
    if order == 4:
        return MomentSet(float(ref["mean"][0]), float(ref["variance"][0]),
                         float(ref["skewness"][0]), float(ref["kurtosis"][0]))
    return MomentSet(float(ref["mean"][0]), float(ref["variance"][0]))


def moments(engine: str, activation, mu: float, var: float, *,
            table: Optional[SplineTable] = None, n: int = 10_000,
            rng: Optional[RngStream] = None, order: int = 2) -> MomentSet:
    """Uniform dispatch over the three engines.

    The analytic engine supports tanh only. The spline engine builds a
    default table ([-10, 10], 101 points) when none is supplied; pass a
    prebuilt table in hot paths.
    """
    if isinstance(activation, str):
        activation = get_activation(activation)
    if engine == "analytic":
        if activation.name != "tanh":
            raise ValueError("analytic engine supports only tanh")
        return MomentSet(analytic_tanh_mean(mu, var), analytic_tanh_variance(mu, var))
    if engine == "spline":
        if table is None:
            table = build_spline_table(activation, max_power=4 if order == 4 else 2)
        if table.activation.name != activation.name:
            raise ValueError("table was built for a different activation")
        return spline_moments(table, mu, var, order=order)
    if engine == "mc":
        if rng is None:
            raise ValueError("mc engine requires an RngStream")
        return mc_moments(activation, mu, var, n, rng, order=order)
    raise ValueError(f"unknown engine {engine!r}; expected mc, analytic or spline")
