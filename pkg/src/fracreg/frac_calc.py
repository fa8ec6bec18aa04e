r"""Riemann-Liouville fractional integrals and derivatives on uniform grids.

Grid functions are read as their piecewise-linear interpolants and extended by
zero outside :math:`[0, T]`. The left integral

.. math::

    I_{0+}^\beta v(t) = \frac{1}{\Gamma(\beta)} \int_0^t (t - s)^{\beta - 1} v(s) \,\mathrm{d}s

is then integrated exactly against the kernel (product integration), and the
left derivative :math:`D_{0+}^\alpha = D I_{0+}^{1 - \alpha}` of a function
vanishing at :math:`t = 0` reduces to the classical L1 formula. Right-sided
operators are obtained by the reflection :math:`t \mapsto T - t`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gamma as _gamma

from fracreg.errors import InitialValueError, NonFiniteError, OrderError


@dataclass(frozen=True)
class FractionalOrder:
    """A validated fractional order in :math:`(0, 1)`."""

    value: float

    def __post_init__(self) -> None:
        v = float(self.value)
        if not (0.0 < v < 1.0):
            raise OrderError(f"fractional order must lie in (0, 1), got {v!r}")
        object.__setattr__(self, "value", v)

    @classmethod
    def model(cls, value: float) -> FractionalOrder:
        """Order of the diffusion model, restricted to :math:`0.5 < \\alpha < 1`."""
        v = float(value)
        if not (0.5 < v < 1.0):
            raise OrderError(f"model order must satisfy 0.5 < alpha < 1, got {v!r}")
        return cls(v)

    def __float__(self) -> float:
        return self.value


def as_order(beta: float | FractionalOrder) -> float:
    return FractionalOrder(float(beta)).value


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid :math:`t_n = n \\tau`, :math:`n = 0, \\dots, N` on :math:`[0, T]`."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"duration must be positive, got {self.T!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"need at least 2 intervals, got {self.N!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = self.tau * np.arange(self.N + 1, dtype=np.float64)
        t[-1] = self.T
        return t

    def refine(self, factor: int = 2) -> TimeGrid:
        return TimeGrid(self.T, self.N * factor)


@dataclass(frozen=True)
class GridFn:
    """Samples of a function at the nodes of a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.N + 1,):
            raise ValueError(
                f"expected {self.grid.N + 1} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("grid function contains non-finite samples")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn) -> GridFn:
        return cls(grid, np.broadcast_to(fn(grid.nodes), (grid.N + 1,)))

    @classmethod
    def zeros(cls, grid: TimeGrid) -> GridFn:
        return cls(grid, np.zeros(grid.N + 1))

    def reversed(self) -> GridFn:
        return GridFn(self.grid, self.values[::-1])

    def __add__(self, other: GridFn) -> GridFn:
        return GridFn(self.grid, self.values + _values(other, self.grid))

    def __sub__(self, other: GridFn) -> GridFn:
        return GridFn(self.grid, self.values - _values(other, self.grid))

    def __mul__(self, c: float) -> GridFn:
        return GridFn(self.grid, float(c) * self.values)

    __rmul__ = __mul__


def _values(v, grid: TimeGrid) -> np.ndarray:
    if isinstance(v, GridFn):
        if v.grid != grid:
            raise ValueError("grid functions live on different grids")
        return v.values
    return np.asarray(v, dtype=np.float64)


# {{{ grid quadrature


def inner(u: GridFn, v: GridFn) -> float:
    """Trapezoidal :math:`L^2(0, T)` inner product."""
    return float(trapezoid(u.values * _values(v, u.grid), dx=u.grid.tau))


def l2_norm(v: GridFn) -> float:
    return math.sqrt(max(inner(v, v), 0.0))


# }}}


# {{{ weights


def _forward_difference(m: np.ndarray, p: float) -> np.ndarray:
    # (m + 1)^p - m^p without cancellation for large m
    out = np.ones_like(m, dtype=np.float64)
    pos = m > 0
    mm = m[pos].astype(np.float64)
    out[pos] = mm**p * np.expm1(p * np.log1p(1.0 / mm))
    return out


@lru_cache(maxsize=64)
def integral_weights(beta: float, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Product-integration weights for :math:`I_{0+}^\\beta` on ``N`` steps.

    Returns ``(a, a0)`` such that, with :math:`c = \\tau^\\beta / \\Gamma(\\beta + 2)`,

    .. math::

        I_{0+}^\\beta v(t_n) = c \\Big( a_0[n] v_0 + \\sum_{j = 1}^{n} a[n - j] v_j \\Big).
    """
    p = beta + 1.0
    m = np.arange(N, dtype=np.int64)
    d = _forward_difference(m, p)
    a = np.empty(N)
    a[0] = 1.0
    a[1:] = d[1:] - d[:-1]

    n = np.arange(N + 1, dtype=np.float64)
    a0 = np.zeros(N + 1)
    a0[1] = beta
    nn = n[2:]
    # (n - 1)^p - (n - p) n^beta = n^p [(1 - 1/n)^p - 1 + p/n]
    a0[2:] = nn**p * (np.expm1(p * np.log1p(-1.0 / nn)) + p / nn)

    a.setflags(write=False)
    a0.setflags(write=False)
    return a, a0


@lru_cache(maxsize=64)
def l1_weights(alpha: float, N: int) -> np.ndarray:
    """L1 weights :math:`b_j = (j + 1)^{1 - \\alpha} - j^{1 - \\alpha}`, ``j < N``."""
    b = _forward_difference(np.arange(N, dtype=np.int64), 1.0 - alpha)
    b.setflags(write=False)
    return b


# }}}


def _check_finite(v: GridFn) -> None:
    if not np.all(np.isfinite(v.values)):
        raise NonFiniteError("grid function contains non-finite samples")


def frac_integral_left(v: GridFn, beta: float | FractionalOrder) -> GridFn:
    """Left fractional integral :math:`I_{0+}^\\beta v` at the grid nodes."""
    beta = as_order(beta)
    _check_finite(v)
    grid = v.grid
    N = grid.N
    a, a0 = integral_weights(beta, N)

    x = v.values
    out = np.zeros(N + 1)
    out[1:] = np.convolve(a, x[1:])[:N] + a0[1:] * x[0]
    out *= grid.tau**beta / _gamma(beta + 2.0)

    return GridFn(grid, out)


def frac_integral_right(v: GridFn, beta: float | FractionalOrder) -> GridFn:
    """Right fractional integral :math:`I_{T-}^\\beta v` at the grid nodes."""
    return frac_integral_left(v.reversed(), beta).reversed()


def frac_deriv_left(
    v: GridFn, alpha: float | FractionalOrder, *, atol: float = 1.0e-12
) -> GridFn:
    """L1 approximation of :math:`D_{0+}^\\alpha v` for :math:`v(0) = 0`.

    The value at :math:`t_0` is set to zero by convention.

    :raises InitialValueError: if :math:`|v(0)|` exceeds
        ``atol * max(1, max |v|)``.
    """
    alpha = as_order(alpha)
    _check_finite(v)
    x = v.values
    if abs(x[0]) > atol * max(1.0, float(np.max(np.abs(x)))):
        raise InitialValueError(
            f"left derivative needs v(0) = 0, got v(0) = {x[0]:.3e}"
        )

    grid = v.grid
    N = grid.N
    b = l1_weights(alpha, N)
    out = np.zeros(N + 1)
    out[1:] = np.convolve(b, np.diff(x))[:N]
    out *= grid.tau ** (-alpha) / _gamma(2.0 - alpha)

    return GridFn(grid, out)


def frac_deriv_right(
    v: GridFn, alpha: float | FractionalOrder, *, atol: float = 1.0e-12
) -> GridFn:
    """L1 approximation of :math:`D_{T-}^\\alpha v` for :math:`v(T) = 0`."""
    try:
        return frac_deriv_left(v.reversed(), alpha, atol=atol).reversed()
    except InitialValueError as exc:
        raise InitialValueError(
            f"right derivative needs v(T) = 0, got v(T) = {v.values[-1]:.3e}"
        ) from exc


def monomial_frac_integral(mu: float, beta: float, t):
    r"""Closed form :math:`I_{0+}^\beta t^\mu = \frac{\Gamma(\mu + 1)}{\Gamma(\mu + \beta + 1)} t^{\mu + \beta}`.

    Accepts :math:`\beta \in (0, 1]` and :math:`\mu > -1`.
    """
    if not mu > -1.0:
        raise ValueError(f"monomial exponent must exceed -1, got {mu!r}")
    if not (0.0 < beta <= 1.0):
        raise OrderError(f"order must lie in (0, 1], got {beta!r}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0):
        raise ValueError("monomial rule needs t >= 0")

    c = math.exp(math.lgamma(mu + 1.0) - math.lgamma(mu + beta + 1.0))
    out = c * t ** (mu + beta)
    return float(out) if out.ndim == 0 else out
