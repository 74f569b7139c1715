"""Cubic spline tables for activation powers.

A table holds, for one activation and one mesh, the per-segment cubic
coefficients of natural-spline interpolants of f, f^2 (and optionally
f^3, f^4), together with numerically estimated sup norms of the fourth
derivatives of f and f^2. The coefficients are stored in the global
monomial basis, i.e. on segment j the interpolant of f**p is
``sum_k coeffs[p-1, j, k] * z**k``, which is the form the closed-form
Gaussian integrals consume.
"""

import io
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from pesn.activations import Activation, get_activation

_FORMAT_TAG = "pesn-spline-table"
_FORMAT_VERSION = 1

# dense evaluation grid for the fourth-derivative sup estimate
_SUP_GRID_POINTS = 100_001
# finite-difference step for the fourth derivative; balances the O(h^2)
# truncation error against eps/h^4 roundoff amplification
_SUP_FD_STEP = 5e-3


@dataclass(frozen=True)
class Mesh:
    """Sorted interpolation nodes on ``[a, b]``."""

    a: float
    b: float
    n_points: int
    nodes: np.ndarray
    tau: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("mesh requires a < b")
        if self.n_points != len(self.nodes):
            raise ValueError("n_points does not match node count")
        if self.nodes[0] != self.a or self.nodes[-1] != self.b:
            raise ValueError("nodes must start at a and end at b")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")

    @classmethod
    def uniform(cls, a: float, b: float, n_points: int) -> "Mesh":
        nodes = np.linspace(a, b, n_points)
        return cls(float(a), float(b), n_points, nodes, float(np.max(np.diff(nodes))))


@dataclass(frozen=True)
class SplineTable:
    """Precomputed interpolants of activation powers on a shared mesh.

    ``coeffs`` has shape (max_power, n_points - 1, 4) and
    ``fourth_derivative_sup`` holds estimated sup norms of the fourth
    derivatives of f and f^2 on [a, b] (NaN for activations without a
    bounded fourth derivative; bounds are then not certified).
    """

    activation: Activation
    mesh: Mesh
    coeffs: np.ndarray
    fourth_derivative_sup: np.ndarray
    max_power: int
    end_condition: str = "natural"

    def power_coeffs(self, power: int) -> np.ndarray:
        if not 1 <= power <= self.max_power:
            raise ValueError(f"table holds powers 1..{self.max_power}, got {power}")
        return self.coeffs[power - 1]

    @property
    def certified(self) -> bool:
        return bool(np.all(np.isfinite(self.fourth_derivative_sup)))


def _fd_end_slope(f, z0: float, direction: int) -> float:
    """One-sided 5-point finite-difference slope at an interval end."""
    h = direction * 1e-4 * max(1.0, abs(z0))
    zs = z0 + h * np.arange(5)
    w = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
    return float(w @ f(zs) / h)


def _monomial_coeffs(cs: CubicSpline, nodes: np.ndarray) -> np.ndarray:
    """Convert scipy's local (z - z_j) coefficients to global monomials."""
    d3, d2, d1, d0 = cs.c
    t = nodes[:-1]
    out = np.empty((len(t), 4))
    out[:, 3] = d3
    out[:, 2] = d2 - 3.0 * d3 * t
    out[:, 1] = d1 - 2.0 * d2 * t + 3.0 * d3 * t * t
    out[:, 0] = d0 - d1 * t + d2 * t * t - d3 * t**3
    return out


def estimate_fourth_derivative_sup(f, a: float, b: float) -> float:
    """Estimated sup of |f''''| on [a, b] by dense finite differencing.

    The estimate is approximate (grid max plus FD truncation); for the
    activations used here it is accurate to a few parts in 1e4, and any
    overestimate only loosens the certified bounds conservatively.
    """
    h = _SUP_FD_STEP
    z = np.linspace(a, b, _SUP_GRID_POINTS)
    acc = np.zeros_like(z)
    for shift, w in zip((-2.0, -1.0, 0.0, 1.0, 2.0), (1.0, -4.0, 6.0, -4.0, 1.0)):
        acc += w * f(z + shift * h)
    # 0.1% inflation keeps the estimate conservative against the O(h^2)
    # truncation of the central difference at the peak
    return float(np.max(np.abs(acc)) / h**4) * 1.001


def build_spline_table(
    activation,
    a: float = -10.0,
    b: float = 10.0,
    n_points: int = 101,
    max_power: int = 2,
    end_condition: str = "natural",
) -> SplineTable:
    """Interpolate f**p for p = 1..max_power on a uniform mesh.

    ``end_condition`` is ``natural`` (zero second derivative at a and b,
    the default) or ``clamped`` (finite-difference end slopes, which makes
    the spline reproduce cubic polynomials exactly).
    """
    if isinstance(activation, str):
        activation = get_activation(activation)
    if not a < b:
        raise ValueError("requires a < b")
    if n_points < 4:
        raise ValueError("n_points must be >= 4")
    if not 1 <= max_power <= 4:
        raise ValueError("max_power must be in 1..4")
    if end_condition not in ("natural", "clamped"):
        raise ValueError(f"unknown end condition {end_condition!r}")

    mesh = Mesh.uniform(a, b, n_points)
    coeffs = np.empty((max_power, n_points - 1, 4))
    for p in range(1, max_power + 1):
        fp = lambda z, _p=p: np.asarray(activation(z), dtype=float) ** _p
        if end_condition == "natural":
            bc = "natural"
        else:
            bc = ((1, _fd_end_slope(fp, a, +1)), (1, _fd_end_slope(fp, b, -1)))
        cs = CubicSpline(mesh.nodes, fp(mesh.nodes), bc_type=bc)
        coeffs[p - 1] = _monomial_coeffs(cs, mesh.nodes)

    sup = np.full(2, np.nan)
    if activation.smooth:
        sup[0] = estimate_fourth_derivative_sup(activation, a, b)
        sup[1] = estimate_fourth_derivative_sup(
            lambda z: np.asarray(activation(z), dtype=float) ** 2, a, b
        )
    return SplineTable(activation, mesh, coeffs, sup, max_power, end_condition)


def evaluate_spline(table: SplineTable, z, power: int = 1) -> np.ndarray:
    """Evaluate the stored interpolant of f**power inside [a, b]."""
    z = np.asarray(z, dtype=float)
    c = table.power_coeffs(power)
    j = np.clip(
        np.searchsorted(table.mesh.nodes, z, side="right") - 1, 0, len(c) - 1
    )
    return c[j, 0] + z * (c[j, 1] + z * (c[j, 2] + z * c[j, 3]))


def mesh_points_for_bound(activation, a: float, b: float, target: float) -> int:
    """Smallest uniform mesh size whose interior bound term stays below
    ``target`` (tail terms depend only on [a, b], not on the mesh)."""
    if isinstance(activation, str):
        activation = get_activation(activation)
    if target <= 0:
        raise ValueError("target must be positive")
    if not activation.smooth:
        raise ValueError(f"bounds are not certified for {activation.name}")
    sup = estimate_fourth_derivative_sup(activation, a, b)
    tau = (16.0 * target / sup) ** 0.25
    return max(4, int(np.ceil((b - a) / tau)) + 1)


def save_table(table: SplineTable, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(table_to_text(table))


def load_table(path) -> SplineTable:
    with open(path, "r", encoding="ascii") as fh:
        return table_from_text(fh.read())


def table_to_text(table: SplineTable) -> str:
    """Versioned plain-text serialization with full decimal precision."""
    out = io.StringIO()
    out.write(f"{_FORMAT_TAG} v{_FORMAT_VERSION}\n")
    out.write(f"activation {table.activation.name}\n")
    out.write(f"end_condition {table.end_condition}\n")
    out.write(f"max_power {table.max_power}\n")
    out.write(f"n_points {table.mesh.n_points}\n")
    out.write("sup4 " + " ".join(repr(float(v)) for v in table.fourth_derivative_sup) + "\n")
    out.write("nodes " + " ".join(repr(float(v)) for v in table.mesh.nodes) + "\n")
    for p in range(1, table.max_power + 1):
        out.write(f"power {p}\n")
        for row in table.coeffs[p - 1]:
            out.write(" ".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue()


def table_from_text(text: str) -> SplineTable:
    lines = text.strip().splitlines()
    header = lines[0].split()
    if header[0] != _FORMAT_TAG or header[1] != f"v{_FORMAT_VERSION}":
        raise ValueError(f"unrecognized table header: {lines[0]!r}")
    fields = {}
    idx = 1
    while not lines[idx].startswith("power "):
        key, _, value = lines[idx].partition(" ")
        fields[key] = value
        idx += 1
    activation = get_activation(fields["activation"])
    max_power = int(fields["max_power"])
    n_points = int(fields["n_points"])
    sup = np.array([float(v) for v in fields["sup4"].split()])
    nodes = np.array([float(v) for v in fields["nodes"].split()])
    if len(nodes) != n_points:
        raise ValueError("node count does not match header")
    mesh = Mesh(float(nodes[0]), float(nodes[-1]), n_points, nodes,
                float(np.max(np.diff(nodes))))
    coeffs = np.empty((max_power, n_points - 1, 4))
    for p in range(1, max_power + 1):
        if lines[idx] != f"power {p}":
            raise ValueError(f"expected 'power {p}', got {lines[idx]!r}")
        idx += 1
        for j in range(n_points - 1):
            coeffs[p - 1, j] = [float(v) for v in lines[idx].split()]
            idx += 1
    return SplineTable(activation, mesh, coeffs, sup, max_power,
                       fields["end_condition"])
