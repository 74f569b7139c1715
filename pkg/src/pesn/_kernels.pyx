# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled moment kernels; see ``pesn._kernels_py`` for the reference
implementation and docstrings."""

from libc.math cimport erf, exp, sqrt

import numpy as np

cdef double PI = 3.141592653589793238462643383279502884
cdef double SQRT_PI = sqrt(PI)


def spline_interior_raw_moments(object nodes_in, object coeffs_in, object mu_in, object var_in):
    cdef double[::1] nodes = np.ascontiguousarray(nodes_in, dtype=np.float64)
    cdef double[:, :, ::1] coeffs = np.ascontiguousarray(coeffs_in, dtype=np.float64)
    cdef double[::1] mu = np.ascontiguousarray(mu_in, dtype=np.float64)
    cdef double[::1] var = np.ascontiguousarray(var_in, dtype=np.float64)

    cdef Py_ssize_t n_nodes = nodes.shape[0]
    cdef Py_ssize_t n_pow = coeffs.shape[0]
    cdef Py_ssize_t n_el = mu.shape[0]
    out_arr = np.zeros((n_pow, n_el), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    cdef Py_ssize_t d, j, p
    cdef double m, v, inv_s
    cdef double k1, k2a, k2b, k2c, k3a, k3b, k3c, k3d
    cdef double x, e0a, e1a, e2a, e3a, e0b, e1b, e2b, e3b
    cdef double de0, d1, d2, d3, i0, i1, i2, i3

    with nogil:
        for d in range(n_el):
            m = mu[d]
            v = var[d]
            inv_s = 1.0 / sqrt(2.0 * v)
            k1 = sqrt(v / (2.0 * PI))
            k2a = 0.5 * (v + m * m)
            k2b = v / SQRT_PI
            k2c = m * sqrt(2.0 * v / PI)
            k3a = sqrt(2.0 * v * v * v / PI)
            k3b = 0.5 * m * (3.0 * v + m * m)
            k3c = 3.0 * v * m / SQRT_PI
            k3d = 3.0 * m * m * k1

            x = (nodes[0] - m) * inv_s
            e0a = erf(x)
            e1a = exp(-x * x)
            e2a = x * e1a
            e3a = (1.0 + x * x) * e1a
            for j in range(n_nodes - 1):
                x = (nodes[j + 1] - m) * inv_s
                e0b = erf(x)
                e1b = exp(-x * x)
                e2b = x * e1b
                e3b = (1.0 + x * x) * e1b

                de0 = e0b - e0a
                d1 = e1a - e1b
                d2 = e2a - e2b
                d3 = e3a - e3b
                i0 = 0.5 * de0
                i1 = k1 * d1 + 0.5 * m * de0
                i2 = k2a * de0 + k2b * d2 + k2c * d1
                i3 = k3a * d3 + k3b * de0 + k3c * d2 + k3d * d1
                for p in range(n_pow):
                    out[p, d] += (
                        coeffs[p, j, 0] * i0
                        + coeffs[p, j, 1] * i1
                        + coeffs[p, j, 2] * i2
                        + coeffs[p, j, 3] * i3
                    )
                e0a = e0b
                e1a = e1b
                e2a = e2b
                e3a = e3b
    return out_arr
