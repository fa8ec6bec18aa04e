r"""Seeded families of smooth, compactly supported test functions.

Each member is a :math:`C^\infty` bump

.. math::

    \eta(t) = \exp\Big(-\frac{1}{1 - s^2}\Big) \big(1 + c \sin(2\pi k t / T)\big),
    \qquad s = \frac{2t - (a + b)}{b - a},

supported on :math:`[a, b] \subset (0, T)`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Bump:
    a: float
    b: float
    c: float = 0.0
    k: int = 1
    T: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.a < self.b <= self.T):
            raise ValueError(f"need 0 <= a < b <= T, got [{self.a}, {self.b}]")

    def _core(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = 0.5 * (self.b - self.a)
        s = (t - 0.5 * (self.a + self.b)) / h
        inside = np.abs(s) < 1.0
        e = np.zeros_like(t)
        de = np.zeros_like(t)
        si = s[inside]
        q = 1.0 - si**2
        e[inside] = np.exp(-1.0 / q)
        # d/dt exp(-1/(1 - s^2)) = exp(...) * (-2 s / (1 - s^2)^2) / h
        de[inside] = e[inside] * (-2.0 * si / q**2) / h
        return e, de, inside

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        e, _, _ = self._core(np.atleast_1d(t))
        w = 2.0 * math.pi * self.k / self.T
        out = e * (1.0 + self.c * np.sin(w * np.atleast_1d(t)))
        return out.reshape(t.shape) if t.ndim else float(out[0])

    def derivative(self, t):
        t = np.asarray(t, dtype=np.float64)
        tt = np.atleast_1d(t)
        e, de, _ = self._core(tt)
        w = 2.0 * math.pi * self.k / self.T
        out = de * (1.0 + self.c * np.sin(w * tt)) + e * self.c * w * np.cos(w * tt)
        return out.reshape(t.shape) if t.ndim else float(out[0])


def bump_family(seed: int, count: int, T: float = 1.0) -> list[Bump]:
    """Draw ``count`` bumps with supports inside :math:`[0.05 T, 0.95 T]`."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        a = rng.uniform(0.05, 0.35) * T
        b = rng.uniform(0.65, 0.95) * T
        c = rng.uniform(-0.5, 0.5)
        k = int(rng.integers(1, 4))
        out.append(Bump(a, b, c, k, T))
    return out
