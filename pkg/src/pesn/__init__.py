"""Gaussian moment propagation through activation functions and
probabilistic echo state networks.

The hot spline kernel has a compiled (Cython) implementation with a
pure-NumPy fallback; ``pesn.BACKEND`` reports which one was selected at
import.
"""

from pesn._backend import BACKEND, available_backends
from pesn.activations import (
    ACTIVATIONS,
    Activation,
    ConstantTail,
    LinearTail,
    get_activation,
)
from pesn.bounds import mean_error_bound, variance_error_bound
from pesn.gaussian import (
    DiagonalGaussian,
    Gaussian1D,
    RngStream,
    gaussian_product,
    linear_transform,
    sample,
)
from pesn.moments import (
    MomentSet,
    analytic_tanh_mean,
    analytic_tanh_variance,
    mc_moments,
    moments,
    segment_integral,
    spline_moments,
    spline_moments_vec,
)
from pesn.splines import (
    Mesh,
    SplineTable,
    build_spline_table,
    load_table,
    mesh_points_for_bound,
    save_table,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATIONS",
    "Activation",
    "BACKEND",
    "ConstantTail",
    "DiagonalGaussian",
    "Gaussian1D",
    "LinearTail",
    "Mesh",
    "MomentSet",
    "RngStream",
    "SplineTable",
    "analytic_tanh_mean",
    "analytic_tanh_variance",
    "available_backends",
    "build_spline_table",
    "gaussian_product",
    "get_activation",
    "linear_transform",
    "load_table",
    "mc_moments",
    "mean_error_bound",
    "mesh_points_for_bound",
    "moments",
    "sample",
    "save_table",
    "segment_integral",
    "spline_moments",
    "spline_moments_vec",
    "variance_error_bound",
]
