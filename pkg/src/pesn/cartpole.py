"""Cart-pole ground-truth data generation.

Frictionless cart with a uniform-rod pole, angle measured from upright
(theta = 0 up, theta = pi hanging). Trajectories are integrated with
classic RK4 and packaged as regression datasets whose targets are the
next-step velocity pair [x_dot, omega].
"""

from dataclasses import asdict, dataclass

import numpy as np

from pesn.errors import DivergenceError
from pesn.gaussian import RngStream
from pesn.reservoir import Dataset

STATE_LABELS = ("x", "theta", "x_dot", "omega")


@dataclass(frozen=True)
class CartPoleState:
    x: float
    theta: float
    x_dot: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.theta, self.x_dot, self.omega])

    @classmethod
    def from_array(cls, a) -> "CartPoleState":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class CartPoleParams:
    """Physical constants; conventional benchmark values by default."""

    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.81
    dt: float = 0.02
    force_limit: float = 10.0

    def __post_init__(self):
        if min(self.cart_mass, self.pole_mass, self.half_length, self.dt) <= 0.0:
            raise ValueError("masses, half_length and dt must be > 0")


def cartpole_derivative(state, u: float, params: CartPoleParams) -> np.ndarray:
    """Time derivative (x_dot, omega, x_ddot, omega_dot)."""
    _, theta, x_dot, omega = state
    m_total = params.cart_mass + params.pole_mass
    ml = params.pole_mass * params.half_length
    sin_t, cos_t = np.sin(theta), np.cos(theta)

    tmp = (u + ml * omega * omega * sin_t) / m_total
    omega_dot = (params.gravity * sin_t - cos_t * tmp) / (
        params.half_length * (4.0 / 3.0 - params.pole_mass * cos_t * cos_t / m_total)
    )
    x_ddot = tmp - ml * omega_dot * cos_t / m_total
    return np.array([x_dot, omega, x_ddot, omega_dot])


def mechanical_energy(state, params: CartPoleParams) -> float:
    """Kinetic plus potential energy (conserved when u = 0)."""
    _, theta, x_dot, omega = state
    m, l = params.pole_mass, params.half_length
    kinetic = (
        0.5 * (params.cart_mass + m) * x_dot**2
        + m * l * x_dot * omega * np.cos(theta)
        + (2.0 / 3.0) * m * l**2 * omega**2
    )
    return float(kinetic + m * params.gravity * l * np.cos(theta))


def rk4_step(state, u: float, params: CartPoleParams, dt: float) -> np.ndarray:
    k1 = cartpole_derivative(state, u, params)
    k2 = cartpole_derivative(state + 0.5 * dt * k1, u, params)
    k3 = cartpole_derivative(state + 0.5 * dt * k2, u, params)
    k4 = cartpole_derivative(state + dt * k3, u, params)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step(state, u: float, params: CartPoleParams, dt: float) -> np.ndarray:
    return state + dt * cartpole_derivative(state, u, params)


_INTEGRATORS = {"rk4": rk4_step, "euler": euler_step}


def cartpole_rollout(s0, controls, params: CartPoleParams,
                     integrator: str = "rk4") -> np.ndarray:
    """Integrate the controlled system; returns states (len(controls)+1, 4).

    The control is held constant over each step. Raises
    :class:`DivergenceError` with the offending step index when the state
    leaves the finite range.
    """
    try:
        step = _INTEGRATORS[integrator]
    except KeyError:
        raise ValueError(f"unknown integrator {integrator!r}") from None
    s0 = s0.as_array() if isinstance(s0, CartPoleState) else np.asarray(s0, float)
    states = np.empty((len(controls) + 1, 4))
    states[0] = s0
    for k, u in enumerate(controls):
        if not np.isfinite(u):
            raise DivergenceError(k, f"non-finite control at step {k}")
        states[k + 1] = step(states[k], float(u), params, params.dt)
        if not np.all(np.isfinite(states[k + 1])):
            raise DivergenceError(k)
    return states


def excitation_signal(n_steps: int, kind: str, amplitude: float,
                      rng: RngStream, params: CartPoleParams) -> np.ndarray:
    """Persistently exciting control signal, clipped to the force limit."""
    g = rng.generator()
    t = np.arange(n_steps) * params.dt
    if kind == "sum-of-sines":
        freqs = 2.0 * np.pi * g.uniform(0.1, 1.0, 5)
        phases = g.uniform(0.0, 2.0 * np.pi, 5)
        u = (amplitude / 5.0) * np.sum(
            np.sin(np.outer(t, freqs) + phases), axis=1
        )
    elif kind == "filtered-noise":
        white = g.standard_normal(n_steps)
        u = np.empty(n_steps)
        acc = 0.0
        for k in range(n_steps):
            acc = 0.95 * acc + 0.05 * white[k]
            u[k] = acc
        scale = np.std(u)
        if scale > 0.0:
            u *= 0.5 * amplitude / scale
    else:
        raise ValueError(f"unknown excitation {kind!r}")
    return np.clip(u, -params.force_limit, params.force_limit)


def make_dataset(n_steps: int, excitation: str = "sum-of-sines",
                 rng: RngStream | None = None,
                 params: CartPoleParams | None = None,
                 amplitude: float = 5.0,
                 washout: int = 100, n_train: int | None = None,
                 n_test: int = 300) -> Dataset:
    """Simulate from the hanging equilibrium and package for regression.

    Inputs are ``[x, theta, x_dot, omega, u]`` at step k; targets are the
    velocity pair ``[x_dot, omega]`` at step k+1. Generation parameters
    land in the dataset metadata so the file is reproducible.
    """
    rng = RngStream(0) if rng is None else rng
    params = CartPoleParams() if params is None else params
    if n_train is None:
        n_train = n_steps - washout - n_test
    if washout + n_train + n_test != n_steps:
        raise ValueError("washout + n_train + n_test must equal n_steps")
    if n_train < 1:
        raise ValueError("n_steps leaves no training rows after washout and test")

    controls = excitation_signal(n_steps, excitation, amplitude, rng, params)
    s0 = CartPoleState(0.0, np.pi, 0.0, 0.0)
    states = cartpole_rollout(s0, controls, params)

    inputs = np.hstack([states[:-1], controls[:, None]])
    targets = states[1:, 2:4]
    meta = {
        "system": "cartpole",
        "integrator": "rk4",
        "excitation": excitation,
        "amplitude": amplitude,
        "seed": rng.seed,
        "stream_id": rng.stream_id,
        "params": asdict(params),
        "units": {"x": "m", "theta": "rad", "x_dot": "m/s", "omega": "rad/s",
                  "u": "N"},
    }
    return Dataset(inputs, targets, washout, n_train, n_test, meta)
