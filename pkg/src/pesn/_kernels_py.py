"""Pure-NumPy implementation of the hot moment kernels.

This is the fallback backend used when the compiled extension is not
built. Signatures and results match ``pesn._kernels`` bit-for-bit apart
from floating-point summation order.
"""

import numpy as np
from scipy.special import erf

_SQRT_PI = np.sqrt(np.pi)
_TWO_PI = 2.0 * np.pi

# cap on the (elements x nodes) working set per chunk
_CHUNK_CELLS = 2_000_000


def spline_interior_raw_moments(nodes, coeffs, mu, var):
    """Gaussian-weighted integrals of per-segment cubics over the mesh.

    Parameters
    ----------
    nodes : (N,) mesh nodes, strictly increasing.
    coeffs : (P, N-1, 4) monomial coefficients ``c[p, j, k]`` of the
        interpolant of ``f**(p+1)`` on segment j.
    mu, var : (D,) input means and variances, ``var > 0`` elementwise.

    Returns
    -------
    (P, D) array: for each power p and element d, the integral of the
    piecewise polynomial against the Gaussian density over ``[a, b]``.
    """
    nodes = np.ascontiguousarray(nodes, dtype=float)
    coeffs = np.ascontiguousarray(coeffs, dtype=float)
    mu = np.ascontiguousarray(mu, dtype=float)
    var = np.ascontiguousarray(var, dtype=float)
    n_pow, n_seg, _ = coeffs.shape
    n_el = mu.shape[0]
    out = np.empty((n_pow, n_el))
    step = max(1, _CHUNK_CELLS // nodes.shape[0])
    for lo in range(0, n_el, step):
        hi = min(lo + step, n_el)
        _interior_chunk(nodes, coeffs, mu[lo:hi], var[lo:hi], out[:, lo:hi])
    return out


def _interior_chunk(nodes, coeffs, mu, var, out):
    m = mu[:, None]
    v = var[:, None]
    x = (nodes[None, :] - m) / np.sqrt(2.0 * v)
    e0 = erf(x)
    e1 = np.exp(-x * x)
    e2 = x * e1
    e3 = (1.0 + x * x) * e1
    de0 = e0[:, 1:] - e0[:, :-1]
    d1 = e1[:, :-1] - e1[:, 1:]
    d2 = e2[:, :-1] - e2[:, 1:]
    d3 = e3[:, :-1] - e3[:, 1:]

    i0 = 0.5 * de0
    i1 = np.sqrt(v / _TWO_PI) * d1 + 0.5 * m * de0
    i2 = (
        0.5 * (v + m * m) * de0
        + (v / _SQRT_PI) * d2
        + m * np.sqrt(2.0 * v / np.pi) * d1
    )
    i3 = (
        np.sqrt(2.0 * v**3 / np.pi) * d3
        + 0.5 * m * (3.0 * v + m * m) * de0
        + (3.0 * v * m / _SQRT_PI) * d2
        + 3.0 * m * m * np.sqrt(v / _TWO_PI) * d1
    )
    for p in range(coeffs.shape[0]):
        out[p] = (
            i0 @ coeffs[p, :, 0]
            + i1 @ coeffs[p, :, 1]
            + i2 @ coeffs[p, :, 2]
            + i3 @ coeffs[p, :, 3]
        )
