r"""Solvers for the scalar fractional relaxation equation

.. math::

    D_{0+}^\alpha (y - y_0) + \lambda y = g \quad \text{in } (0, T),
    \qquad \lambda > 0.

Three solvers are provided:

* :func:`solve_ml_oracle`, the variation-of-constants formula

  .. math::

      y(t) = y_0 E_\alpha(-\lambda t^\alpha)
        + \int_0^t (t - s)^{\alpha - 1} E_{\alpha, \alpha}(-\lambda (t - s)^\alpha) g(s) \,\mathrm{d}s,

  exact for power-law sources and product-integrated for sampled ones;
* :func:`solve_l1`, the implicit L1 scheme;
* :func:`solve_l1_corrected`, which removes the leading singular term
  :math:`S(t) = \sigma t^\alpha`, :math:`\sigma = (g(0) - \lambda y_0) / \Gamma(1 + \alpha)`,
  analytically and applies the L1 scheme to the remainder.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from fracreg.errors import HypothesisError, OrderError, ResolutionError
from fracreg.frac_calc import FractionalOrder, GridFn, TimeGrid, l1_weights, l2_norm
from fracreg.sobolev_norms import derivative, sobolev_norm
from fracreg.special_fn import Z_MAX, mittag_leffler

#: Errors at or below this level are reported as exact.
EXACT_TOL = 1.0e-12

_GAUSS_POINTS = 8


# {{{ problem description


@dataclass(frozen=True)
class PowerSource:
    r"""Source :math:`g(t) = \sum_i a_i t^{\mu_i}` with :math:`\mu_i \ge 0`."""

    terms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        terms = tuple((float(a), float(mu)) for a, mu in self.terms)
        for _, mu in terms:
            if not mu >= 0.0:
                raise ValueError(f"power-law exponents must be >= 0, got {mu!r}")
        object.__setattr__(self, "terms", terms)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros_like(t)
        for a, mu in self.terms:
            out = out + a * t**mu
        return out

    @property
    def value_at_zero(self) -> float:
        return math.fsum(a for a, mu in self.terms if mu == 0.0)

    @property
    def time_regularity(self) -> float:
        """Largest Sobolev order (capped at 4) the source is known to have."""
        s = 4.0
        for a, mu in self.terms:
            if a != 0.0 and mu != int(mu):
                # t^mu lies in H^s(0, T) exactly for s < mu + 1/2
                s = min(s, mu + 0.5 - 1.0e-9)
        return s


Source = GridFn | PowerSource | Callable


@dataclass(frozen=True)
class ModeProblem:
    """One instance of the modal equation with data ``(alpha, lam, y0, g)``.

    ``g0`` is the value :math:`g(0)`; it is derived from ``g`` when omitted.
    ``g_regularity`` declares the time Sobolev order of ``g`` for the a-priori
    estimate audits; power-law sources infer it.
    """

    alpha: float
    lam: float
    y0: float
    g: Source
    g0: float | None = None
    g_regularity: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", FractionalOrder.model(self.alpha).value)
        if not (np.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError(f"lambda must be positive, got {self.lam!r}")
        if not np.isfinite(self.y0):
            raise ValueError(f"y0 must be finite, got {self.y0!r}")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "y0", float(self.y0))

        if self.g0 is None:
            if isinstance(self.g, GridFn):
                g0 = float(self.g.values[0])
            elif isinstance(self.g, PowerSource):
                g0 = self.g.value_at_zero
            else:
                g0 = float(np.asarray(self.g(np.zeros(1)), dtype=np.float64).ravel()[0])
            object.__setattr__(self, "g0", g0)
        else:
            object.__setattr__(self, "g0", float(self.g0))

        if self.g_regularity is None:
            reg = self.g.time_regularity if isinstance(self.g, PowerSource) else 0.0
            object.__setattr__(self, "g_regularity", reg)

    def sample(self, grid: TimeGrid) -> GridFn:
        if isinstance(self.g, GridFn):
            if self.g.grid != grid:
                raise ValueError("sampled source lives on a different grid")
            return self.g
        return GridFn.from_callable(grid, self.g)

    @property
    def is_compatible(self) -> bool:
        return self.g0 == self.lam * self.y0

    def singular_part(self) -> SingularPart:
        return SingularPart(
            (self.g0 - self.lam * self.y0) / math.gamma(1.0 + self.alpha), self.alpha
        )


@dataclass(frozen=True)
class SingularPart:
    r"""Closed form :math:`S(t) = \sigma t^\alpha`."""

    coefficient: float
    alpha: float

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = self.coefficient * t**self.alpha
        return float(out) if out.ndim == 0 else out

    def on(self, grid: TimeGrid) -> GridFn:
        return GridFn(grid, self(grid.nodes))


# }}}


# {{{ Mittag-Leffler oracle


def _z_max(lam: float, T: float, alpha: float) -> float:
    return max(Z_MAX, 1.01 * lam * T**alpha)


@lru_cache(maxsize=32)
def _kernel_weights(
    alpha: float, lam: float, T: float, N: int
) -> tuple[np.ndarray, np.ndarray]:
    r"""Weights of :math:`\int_0^{t_n} K(t_n - s) g(s) \,\mathrm{d}s` for linear ``g``.

    With :math:`K(r) = r^{\alpha - 1} E_{\alpha,\alpha}(-\lambda r^\alpha)` the
    integral equals :math:`\sum_m A_m g_{n - m} + B_m g_{n - m - 1}`.
    """
    tau = T / N
    zmax = _z_max(lam, T, alpha)
    A = np.empty(N)
    B = np.empty(N)

    # first cell: exact moments of the kernel
    z = -lam * tau**alpha
    e1 = mittag_leffler(z, alpha, alpha + 1.0, z_max=zmax)
    e2 = mittag_leffler(z, alpha, alpha + 2.0, z_max=zmax)
    P0 = tau**alpha * e1
    P1 = tau ** (alpha + 1.0) * (e1 - e2)
    A[0] = P0 - P1 / tau
    B[0] = P1 / tau

    if N > 1:
        x, w = leggauss(_GAUSS_POINTS)
        theta = 0.5 * (x + 1.0)
        w = 0.5 * w
        m = np.arange(1, N, dtype=np.float64)
        r = tau * (m[:, None] + theta[None, :])
        K = r ** (alpha - 1.0) * mittag_leffler(
            -lam * r**alpha, alpha, alpha, z_max=zmax
        )
        A[1:] = tau * (K @ (w * (1.0 - theta)))
        B[1:] = tau * (K @ (w * theta))

    A.setflags(write=False)
    B.setflags(write=False)
    return A, B


def solve_ml_oracle(p: ModeProblem, grid: TimeGrid) -> GridFn:
    """Reference solution from the Mittag-Leffler representation."""
    a, lam = p.alpha, p.lam
    t = grid.nodes
    zmax = _z_max(lam, grid.T, a)
    z = -lam * t**a

    y = p.y0 * mittag_leffler(z, a, 1.0, z_max=zmax)
    if isinstance(p.g, PowerSource):
        for c, mu in p.g.terms:
            if c == 0.0:
                continue
            y = y + c * math.gamma(mu + 1.0) * t ** (a + mu) * mittag_leffler(
                z, a, a + mu + 1.0, z_max=zmax
            )
        return GridFn(grid, y)

    g = p.sample(grid).values
    if not np.any(g):
        return GridFn(grid, y)
    A, B = _kernel_weights(a, lam, grid.T, grid.N)
    conv = np.zeros(grid.N + 1)
    conv[1:] = np.convolve(A, g[1:])[: grid.N] + np.convolve(B, g[:-1])[: grid.N]
    return GridFn(grid, y + conv)


# }}}


# {{{ L1 schemes


def _l1_core(rhs: np.ndarray, alpha: float, lam: float, grid: TimeGrid) -> np.ndarray:
    # solves D^alpha v + lam v = rhs with v(0) = 0 by implicit L1 stepping
    N = grid.N
    b = l1_weights(alpha, N)
    c = grid.tau ** (-alpha) / math.gamma(2.0 - alpha)
    denom = c * b[0] + lam

    v = np.zeros(N + 1)
    dv = np.zeros(N)
    for n in range(1, N + 1):
        hist = float(np.dot(b[1:n], dv[n - 2 :: -1])) if n > 1 else 0.0
        v[n] = (rhs[n] + c * (b[0] * v[n - 1] - hist)) / denom
        dv[n - 1] = v[n] - v[n - 1]
    return v


def solve_l1(p: ModeProblem, grid: TimeGrid) -> GridFn:
    """Implicit L1 scheme with :math:`y_0` imposed at :math:`t = 0`."""
    g = p.sample(grid).values
    v = _l1_core(g - p.lam * p.y0, p.alpha, p.lam, grid)
    return GridFn(grid, p.y0 + v)


def solve_l1_corrected(p: ModeProblem, grid: TimeGrid) -> tuple[GridFn, SingularPart]:
    r"""L1 scheme for :math:`w = y - y_0 - S`, returning :math:`y` and :math:`S`.

    The remainder solves
    :math:`D^\alpha w + \lambda w = g - \lambda y_0 - \sigma (\Gamma(1 + \alpha) + \lambda t^\alpha)`,
    using :math:`D^\alpha t^\alpha = \Gamma(1 + \alpha)` exactly.
    """
    S = p.singular_part()
    sigma = S.coefficient
    t = grid.nodes
    g = p.sample(grid).values

    rhs = (g - p.lam * p.y0) - sigma * (math.gamma(1.0 + p.alpha) + p.lam * t**p.alpha)
    w = _l1_core(rhs, p.alpha, p.lam, grid)
    return GridFn(grid, p.y0 + (S(t) + w)), S


def _corrected_field(p: ModeProblem, grid: TimeGrid) -> GridFn:
    return solve_l1_corrected(p, grid)[0]


SOLVERS: dict[str, Callable[[ModeProblem, TimeGrid], GridFn]] = {
    "oracle": solve_ml_oracle,
    "l1": solve_l1,
    "l1_corrected": _corrected_field,
}


def solve(p: ModeProblem, grid: TimeGrid, solver: str = "l1") -> GridFn:
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise ValueError(
            f"unknown solver {solver!r}; expected one of {sorted(SOLVERS)}"
        ) from None
    return fn(p, grid)


# }}}


# {{{ convergence


def _order(e_coarse: float, e_fine: float) -> float | str:
    if e_coarse <= EXACT_TOL and e_fine <= EXACT_TOL:
        return "exact"
    if e_fine <= 0.0:
        return math.inf
    return math.log2(e_coarse / e_fine)


@dataclass(frozen=True)
class ConvergenceTable:
    """Errors against a reference on successively doubled grids."""

    solver: str
    sizes: tuple[int, ...]
    err_inf: tuple[float, ...]
    err_l2: tuple[float, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if len(self.sizes) < 2:
            raise ValueError("need at least two grid levels")
        if not (len(self.sizes) == len(self.err_inf) == len(self.err_l2)):
            raise ValueError("sizes and errors must have equal length")
        for a, b in zip(self.sizes, self.sizes[1:]):
            if b != 2 * a:
                raise ValueError(f"grid sizes must double, got {self.sizes}")
        if not all(np.isfinite(self.err_inf)) or not all(np.isfinite(self.err_l2)):
            raise ValueError("errors must be finite")

    @property
    def orders_inf(self) -> tuple[float | str, ...]:
        return tuple(_order(a, b) for a, b in zip(self.err_inf, self.err_inf[1:]))

    @property
    def orders_l2(self) -> tuple[float | str, ...]:
        return tuple(_order(a, b) for a, b in zip(self.err_l2, self.err_l2[1:]))

    @property
    def is_exact(self) -> bool:
        return max(self.err_inf) <= EXACT_TOL

    def fitted_order(self, norm: str = "inf") -> float | str:
        """Least-squares slope of :math:`-\\log_2 e` against :math:`\\log_2 N`."""
        e = np.asarray(self.err_inf if norm == "inf" else self.err_l2)
        if np.all(e <= EXACT_TOL):
            return "exact"
        x = np.log2(np.asarray(self.sizes, dtype=np.float64))
        slope = np.polyfit(x, np.log2(np.maximum(e, 1.0e-300)), 1)[0]
        return float(-slope)

    def is_monotone(self, norm: str = "inf") -> bool:
        """Strictly decreasing errors; a table at round-off level counts as monotone."""
        e = self.err_inf if norm == "inf" else self.err_l2
        if max(e) <= EXACT_TOL:
            return True
        return all(b < a for a, b in zip(e, e[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["solver", "N", "err_inf", "err_l2", "order_inf", "order_l2"])
        oi = ("",) + self.orders_inf
        ol = ("",) + self.orders_l2
        for i, n in enumerate(self.sizes):
            writer.writerow(
                [
                    self.solver,
                    n,
                    _fmt(self.err_inf[i]),
                    _fmt(self.err_l2[i]),
                    _fmt(oi[i]),
                    _fmt(ol[i]),
                ]
            )
        return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def reference_solution(p: ModeProblem, grid: TimeGrid, refine: int = 4) -> GridFn:
    """Oracle on ``grid``; sampled sources are integrated on a finer grid."""
    if isinstance(p.g, PowerSource):
        return solve_ml_oracle(p, grid)
    if isinstance(p.g, GridFn):
        raise ValueError("a sampled source cannot be refined; pass a callable")
    fine = solve_ml_oracle(p, grid.refine(refine))
    return GridFn(grid, fine.values[::refine])


def estimate_order(
    solver: str,
    p: ModeProblem,
    base_N: int,
    levels: int,
    *,
    T: float = 1.0,
    oracle_refine: int = 4,
) -> ConvergenceTable:
    """Run ``solver`` on ``N = base_N * 2**i`` and measure errors at its nodes."""
    if levels < 3:
        raise ValueError(f"need at least 3 levels, got {levels}")
    if isinstance(p.g, GridFn):
        raise ValueError("order estimation needs a source that can be resampled")

    finest = TimeGrid(T, base_N * 2 ** (levels - 1))
    ref = reference_solution(p, finest, oracle_refine).values

    sizes, einf, el2 = [], [], []
    for i in range(levels):
        grid = TimeGrid(T, base_N * 2**i)
        y = solve(p, grid, solver)
        stride = finest.N // grid.N
        err = GridFn(grid, y.values - ref[::stride])
        sizes.append(grid.N)
        einf.append(float(np.max(np.abs(err.values))))
        el2.append(l2_norm(err))

    return ConvergenceTable(
        solver,
        tuple(sizes),
        tuple(einf),
        tuple(el2),
        meta={"alpha": p.alpha, "lambda": p.lam, "y0": p.y0, "T": T},
    )


def estimate_singular_exponent(
    y: GridFn, y0: float, window: int | tuple[int, int]
) -> float:
    r"""Slope of :math:`\log |y(t_n) - y_0|` against :math:`\log t_n` near zero.

    ``window`` is either a node count (nodes ``1..window``) or a half-open
    node range ``(start, stop)`` with ``start >= 1``.
    """
    start, stop = (1, int(window) + 1) if np.isscalar(window) else map(int, window)
    N = y.grid.N
    if start < 1 or stop - start < 2:
        raise ResolutionError(f"invalid fitting window [{start}, {stop})")
    if stop - 1 > N // 8:
        raise ResolutionError(
            f"window must lie within the first N/8 = {N // 8} nodes, got stop={stop}"
        )

    d = np.abs(y.values[start:stop] - y0)
    if np.any(d == 0.0):
        raise ResolutionError("y - y0 vanishes inside the fitting window")
    t = y.grid.nodes[start:stop]
    return float(np.polyfit(np.log(t), np.log(d), 1)[0])


# }}}


# {{{ a-priori estimate audits


#: Time regularity of ``g`` each estimate assumes, as a function of alpha.
ODE_HYPOTHESES: dict[str, Callable[[float], float]] = {
    "ode-1-1": lambda a: 0.0,
    "ode-1-2": lambda a: 0.0,
    "ode-1-3": lambda a: 0.0,
    "ode-1-4": lambda a: 1.0 - a,
    "ode-2-1": lambda a: 1.0,
    "ode-2-2": lambda a: 1.0,
    "ode-2-3": lambda a: 1.0,
    "ode-2-4": lambda a: 2.0 - a,
}


def h2_norm(v: GridFn) -> float:
    """:math:`H^2(0, T)` norm through one finite-difference derivative."""
    return math.sqrt(l2_norm(v) ** 2 + sobolev_norm(derivative(v), 1.0) ** 2)


def check_ode_hypothesis(estimate: str, p: ModeProblem) -> None:
    if estimate not in ODE_HYPOTHESES:
        raise ValueError(f"unknown estimate {estimate!r}")
    need = ODE_HYPOTHESES[estimate](p.alpha)
    if p.g_regularity < need:
        raise HypothesisError(
            f"{estimate} needs g in H^{need:g}(0,T); declared order is {p.g_regularity:g}"
        )
    if estimate == "ode-2-4" and not p.alpha > 0.75:
        raise OrderError(f"{estimate} needs 0.75 < alpha < 1, got {p.alpha:g}")


def ode_estimate(estimate: str, p: ModeProblem, y: GridFn) -> tuple[float, float]:
    """Return ``(lhs, rhs)`` of one a-priori estimate for solution ``y``."""
    check_ode_hypothesis(estimate, p)
    a, lam, y0 = p.alpha, p.lam, abs(p.y0)
    sl = math.sqrt(lam)
    g = p.sample(y.grid)
    jump = abs(p.g0 - lam * p.y0)
    w = y - p.singular_part().on(y.grid)

    def nrm(v: GridFn, s: float) -> float:
        return sobolev_norm(v, s)

    if estimate == "ode-1-1":
        return nrm(y, a / 2) + sl * l2_norm(y), l2_norm(g) / sl + y0
    if estimate == "ode-1-2":
        return nrm(y, a) + sl * nrm(y, a / 2), l2_norm(g) + sl * y0
    if estimate == "ode-1-3":
        return lam * l2_norm(y), l2_norm(g) + sl * y0
    if estimate == "ode-1-4":
        return nrm(y, 1.0), nrm(g, 1.0 - a) + lam * y0
    if estimate == "ode-2-1":
        return (
            nrm(w, 1.0 + a / 2) + sl * nrm(y, 1.0),
            nrm(g, 1.0) / sl + y0 + sl * jump,
        )
    if estimate == "ode-2-2":
        return (
            nrm(w, 1.0 + a) + sl * nrm(w, 1.0 + a / 2),
            nrm(g, 1.0) + y0 + lam * jump,
        )
    if estimate == "ode-2-3":
        return lam * nrm(y, 1.0), nrm(g, 1.0) + sl * y0 + lam * jump
    # ode-2-4
    return h2_norm(w), nrm(g, 2.0 - a) + y0 + lam * jump


# }}}
