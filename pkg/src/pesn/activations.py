"""Activation functions with tail descriptors.

A tail descriptor states how the function behaves outside a compact
interval: either approximately constant or approximately the identity.
Tails are what let Gaussian expectations over the whole real line be
completed analytically once the interior is handled by a spline.
"""

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np


@dataclass(frozen=True)
class ConstantTail:
    value: float


@dataclass(frozen=True)
class LinearTail:
    """Tail where f(z) ~ z."""


Tail = Union[ConstantTail, LinearTail]


@dataclass(frozen=True)
class Activation:
    """Scalar activation plus tail behaviour.

    ``smooth`` marks functions with a bounded fourth derivative on compact
    sets; spline error bounds are only certified for those.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    left_tail: Tail
    right_tail: Tail
    smooth: bool = True

    def __call__(self, z):
        return self.fn(z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _swish(z):
    z = np.asarray(z, dtype=float)
    return z * _sigmoid(z)


def _relu(z):
    return np.maximum(np.asarray(z, dtype=float), 0.0)


TANH = Activation("tanh", np.tanh, ConstantTail(-1.0), ConstantTail(1.0))
SIGMOID = Activation("sigmoid", _sigmoid, ConstantTail(0.0), ConstantTail(1.0))
SWISH = Activation("swish", _swish, ConstantTail(0.0), LinearTail())
RELU = Activation("relu", _relu, ConstantTail(0.0), LinearTail(), smooth=False)

ACTIVATIONS = {a.name: a for a in (TANH, SIGMOID, SWISH, RELU)}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}"
        ) from None


def tail_value(tail: Tail, z: float, power: int = 1) -> float:
    """Value of the tail model of f**power at location ``z``."""
    if isinstance(tail, ConstantTail):
        return tail.value**power
    return float(z) ** power
