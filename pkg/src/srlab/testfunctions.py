"""Piecewise-linear test functions vanishing at both ends of [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class TestFunction:
    """Node values ``phi(t_0..t_N)`` with ``phi(0) = phi(1) = 0``.

    The derivative is piecewise constant, ``(phi_{i+1} - phi_i) / h`` on cell ``i``.
    """

    __test__ = False  # not a pytest class

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] < 2:
            raise ValueError("need at least two node values")
        v[0] = 0.0
        v[-1] = 0.0
        self.values = v

    @property
    def N(self) -> int:
        return self.values.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def derivative(self) -> np.ndarray:
        return np.diff(self.values) / self.h

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    @classmethod
    def from_interior(cls, interior) -> "TestFunction":
        return cls(np.concatenate([[0.0], np.asarray(interior, float), [0.0]]))

    def norm(self, p: float) -> float:
        """Discrete ``L_p`` norm of the node values (rectangle rule; endpoints are zero)."""
        return node_norm(self.values, p, self.h)

    def derivative_norm(self, p: float) -> float:
        return cell_norm(self.derivative, p, self.h)

    def scaled(self, s: float) -> "TestFunction":
        return TestFunction(s * self.values)


def cell_norm(v, p: float, h: float) -> float:
    v = np.abs(np.asarray(v, float))
    if v.size == 0:
        return 0.0
    if np.isinf(p):
        return float(v.max())
    return float((h * np.sum(v ** p)) ** (1.0 / p))


def node_norm(values, p: float, h: float) -> float:
    return cell_norm(np.asarray(values, float)[1:-1], p, h)


def hat(N: int, center: float = 0.5, width: float = 0.5) -> TestFunction:
    t = np.linspace(0.0, 1.0, N + 1)
    return TestFunction(np.maximum(0.0, 1.0 - np.abs(t - center) / width))


def sine(N: int, m: int = 1) -> TestFunction:
    t = np.linspace(0.0, 1.0, N + 1)
    return TestFunction(np.sin(m * np.pi * t))


def random_smooth(N: int, seed: int, modes: int = 8, decay: float = 1.0) -> TestFunction:
    """Seeded sine series ``sum a_m sin(m pi t) / m^decay``; the same seed gives the same function on any grid."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=modes)
    t = np.linspace(0.0, 1.0, N + 1)
    m = np.arange(1, modes + 1)
    return TestFunction(np.sin(np.pi * np.outer(t, m)) @ (a / m ** decay))


def from_spec(spec: str, N: int) -> TestFunction:
    """Named family: ``hat``, ``sine-<m>`` or ``random-<seed>``."""
    if spec == "hat":
        return hat(N)
    if spec.startswith("sine-"):
        return sine(N, int(spec.split("-", 1)[1]))
    if spec.startswith("random-"):
        return random_smooth(N, int(spec.split("-", 1)[1]))
    raise ValueError(f"unknown test-function family {spec!r}")
