"""Certified error bounds for the spline moment engine.

The bound on the mean combines the classical cubic-spline interpolation
bound (1/16) tau^4 sup|f''''| over the mesh interval with the Gaussian
mass assigned to each tail, where the integrand is replaced by its tail
model. The variance bound follows from the triangle inequality applied
to E[f^2] - E[f]^2 and costs one extra bound evaluation for the f^2
interpolant.

Bounds are certified only for activations with a bounded fourth
derivative on [a, b]; for others (relu) the table stores NaN sups and the
bounds propagate NaN rather than pretending to certify anything.
"""

import numpy as np
from scipy.special import erf

from pesn.activations import tail_value
from pesn.splines import SplineTable


def _bound_for_power(table: SplineTable, power: int, mu, var):
    mesh = table.mesh
    act = table.activation
    sup4 = table.fourth_derivative_sup[power - 1]
    c1 = (mesh.tau**4 / 32.0) * sup4
    f = lambda z: float(np.asarray(act(z), dtype=float) ** power)
    c2 = 0.5 * abs(f(mesh.a) - tail_value(act.left_tail, mesh.a, power))
    c3 = 0.5 * abs(f(mesh.b) - tail_value(act.right_tail, mesh.b, power))
    den = np.sqrt(2.0 * var)
    erf_a = erf((mesh.a - mu) / den)
    erf_b = erf((mesh.b - mu) / den)
    return c1 * (erf_b - erf_a) + c2 * (erf_a + 1.0) + c3 * (1.0 - erf_b)


def mean_error_bound(table: SplineTable, mu, var):
    """Upper bound on |spline mean - true mean| at the given input.

    NaN when the activation carries no certified fourth-derivative sup.
    Vectorized over ``mu``/``var``; ``var`` must be strictly positive.
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0.0):
        raise ValueError("var must be > 0")
    out = _bound_for_power(table, 1, mu, var)
    return out if out.ndim else float(out)


def variance_error_bound(table: SplineTable, mu, var):
    """Upper bound on |spline variance - true variance|.

    Sum of the f^2 interpolation bound and twice the mean bound (the mean
    enters the variance squared, and the activation mean is bounded by 1
    in magnitude for the saturating activations this certifies).
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var <= 0.0):
        raise ValueError("var must be > 0")
    if table.max_power < 2:
        raise ValueError("variance bound needs a table with max_power >= 2")
    out = _bound_for_power(table, 2, mu, var) + 2.0 * _bound_for_power(table, 1, mu, var)
    return out if out.ndim else float(out)
