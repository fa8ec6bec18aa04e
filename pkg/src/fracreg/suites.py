r"""Numerical identity suites for the fractional operators.

Every suite returns a :class:`SuiteResult` with the largest measured
discrepancy and the tolerance it is held to. Randomized suites draw from
seeded families, so results are reproducible.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.special import erfc

from fracreg.frac_calc import (
    GridFn,
    TimeGrid,
    frac_deriv_left,
    frac_deriv_right,
    frac_integral_left,
    frac_integral_right,
    inner,
    l2_norm,
    monomial_frac_integral,
)
from fracreg.sobolev_norms import hbeta_seminorm_fourier
from fracreg.special_fn import OVERLAP, ml_asymptotic, ml_series
from fracreg.testfns import Bump, bump_family

ALPHAS = (0.6, 0.75, 0.9)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    discrepancy: float
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "details": self.details,
        }


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1.0e-300)


def _rel_l2(u: np.ndarray, v: np.ndarray, grid: TimeGrid) -> float:
    return l2_norm(GridFn(grid, u - v)) / max(l2_norm(GridFn(grid, v)), 1.0e-300)


# {{{ monomial anchor


def monomial_errors(mu: float, beta: float, N: int, T: float = 1.0) -> float:
    """Max relative node error of discrete :math:`I^\\beta t^\\mu` over ``n >= N/8``."""
    grid = TimeGrid(T, N)
    t = grid.nodes
    got = frac_integral_left(GridFn(grid, t**mu), beta).values
    exact = monomial_frac_integral(mu, beta, t)
    s = slice(N // 8, None)
    return float(np.max(np.abs(got[s] - exact[s]) / np.abs(exact[s])))


def suite_monomial(alphas=ALPHAS, N: int = 4096, tol: float = 1.0e-3) -> SuiteResult:
    rows = {}
    worst = 0.0
    ok = True
    for a in alphas:
        for mu in (0.0, 1.0, a):
            for beta in (0.25, 0.5, 1.0 - a):
                e_c = monomial_errors(mu, beta, N // 2)
                e_f = monomial_errors(mu, beta, N)
                exact = e_f <= 1.0e-12
                order = math.inf if exact else math.log2(max(e_c, 1.0e-300) / e_f)
                good = e_f <= tol and (exact or order >= 1.0)
                ok &= good
                worst = max(worst, e_f)
                rows[f"alpha={a:g},mu={mu:g},beta={beta:g}"] = {
                    "error": e_f,
                    "order": "exact" if exact else order,
                    "passed": good,
                }
    return SuiteResult("monomial", ok, worst, tol, rows)


# }}}


# {{{ adjoint and semigroup


def _random_poly(rng: np.random.Generator, T: float) -> Callable:
    c = rng.uniform(-1.0, 1.0, size=4)
    return lambda t: np.polynomial.polynomial.polyval(t / T, c)


def suite_adjoint(
    seed: int = 0, N: int = 4096, count: int = 10, tol: float = 1.0e-3, betas=(0.1, 0.9)
) -> SuiteResult:
    """Polynomial pairs with orders drawn uniformly from ``betas = (lo, hi)``."""
    rng = np.random.default_rng(seed)
    grid = TimeGrid(1.0, N)
    worst = 0.0
    for _ in range(count):
        u = GridFn.from_callable(grid, _random_poly(rng, grid.T))
        v = GridFn.from_callable(grid, _random_poly(rng, grid.T))
        beta = float(rng.uniform(*betas))
        lhs = inner(frac_integral_left(u, beta), v)
        rhs = inner(u, frac_integral_right(v, beta))
        scale = l2_norm(frac_integral_left(u, beta)) * l2_norm(v)
        worst = max(worst, abs(lhs - rhs) / max(scale, 1.0e-300))
    return SuiteResult("adjoint", worst <= tol, worst, tol, {"N": N, "pairs": count})


def suite_semigroup(N: int = 4096, tol: float = 1.0e-3) -> SuiteResult:
    grid = TimeGrid(1.0, N)
    t = grid.nodes
    rows = {}
    worst = 0.0
    for mu in (0.0, 0.5, 1.0, 2.0):
        for beta, gam in ((0.25, 0.25), (0.3, 0.5), (0.5, 0.4), (0.2, 0.7)):
            v = GridFn(grid, t**mu)
            two = frac_integral_left(frac_integral_left(v, gam), beta).values
            one = frac_integral_left(v, beta + gam).values
            e = _rel_l2(two, one, grid)
            worst = max(worst, e)
            rows[f"mu={mu:g},beta={beta:g},gamma={gam:g}"] = e
    return SuiteResult("semigroup", worst <= tol, worst, tol, rows)


# }}}


# {{{ derivative identities


def suite_ibp(seed: int = 0, alpha: float = 0.75, N: int = 4096, count: int = 10, tol: float = 1.0e-2) -> SuiteResult:
    r""":math:`(D_{0+}^\alpha v, \varphi) = (D_{0+}^{\alpha/2} v, D_{T-}^{\alpha/2} \varphi)`."""
    grid = TimeGrid(1.0, N)
    fam = bump_family(seed, 2 * count, grid.T)
    worst = 0.0
    rows = []
    for v_fn, phi_fn in zip(fam[::2], fam[1::2]):
        v = GridFn.from_callable(grid, v_fn)
        phi = GridFn.from_callable(grid, phi_fn)
        lhs = inner(frac_deriv_left(v, alpha), phi)
        rhs = inner(frac_deriv_left(v, alpha / 2), frac_deriv_right(phi, alpha / 2))
        e = _rel(lhs, rhs)
        rows.append(e)
        worst = max(worst, e)
    return SuiteResult("ibp", worst <= tol, worst, tol, {"alpha": alpha, "errors": rows})


def coercivity_ratio(v: GridFn, alpha: float) -> float:
    r"""Ratio of :math:`(D_{0+}^{\alpha/2} v, D_{T-}^{\alpha/2} v)` to :math:`|v|^2_{H^{\alpha/2}(\mathbb{R})}`."""
    b = alpha / 2
    pair = inner(frac_deriv_left(v, b), frac_deriv_right(v, b))
    return pair / hbeta_seminorm_fourier(v, b) ** 2


def suite_coercivity(seed: int = 0, alphas=ALPHAS, N: int = 8192, count: int = 10, tol: float = 0.05) -> SuiteResult:
    grid = TimeGrid(1.0, N)
    fam = bump_family(seed, count, grid.T)
    worst = 0.0
    rows = {}
    for a in alphas:
        target = math.cos(a * math.pi / 2)
        ratios = [coercivity_ratio(GridFn.from_callable(grid, f), a) for f in fam]
        dev = max(abs(r / target - 1.0) for r in ratios)
        worst = max(worst, dev)
        rows[f"alpha={a:g}"] = {"cos": target, "ratios": ratios, "max_rel_dev": dev}
    return SuiteResult("coercivity", worst <= tol, worst, tol, rows)


# }}}


# {{{ Fourier symbol in weak form


@dataclass(frozen=True)
class GaussianTest:
    r"""Test function :math:`\varphi(\xi) = e^{-a (\xi - \xi_0)^2 / 2}`."""

    a: float = 1.0
    xi0: float = 1.0

    def __call__(self, xi):
        return np.exp(-self.a * (np.asarray(xi) - self.xi0) ** 2 / 2.0)

    def transform(self, x):
        r""":math:`\mathcal{F}\varphi(x) = a^{-1/2} e^{-x^2 / (2a)} e^{-i x \xi_0}`."""
        x = np.asarray(x, dtype=np.float64)
        return np.exp(-(x**2) / (2.0 * self.a) - 1j * x * self.xi0) / math.sqrt(self.a)


def symbol_lhs(v: Bump, beta: float, phi: GaussianTest, X: float, N: int) -> tuple[complex, float]:
    r""":math:`\int_0^X I_+^\beta v \, \mathcal{F}\varphi` and a bound on the tail beyond ``X``.

    ``v`` must be supported in :math:`[0, 1]`. For :math:`x \ge 1`,
    :math:`|I_+^\beta v(x)| \le \|v\|_{L^1} (x - 1)^{\beta - 1} / \Gamma(\beta)`.
    """
    grid = TimeGrid(X, N)
    t = grid.nodes
    Iv = frac_integral_left(GridFn(grid, v(t)), beta).values
    integrand = Iv * phi.transform(t)
    w = np.full(t.size, grid.tau)
    w[[0, -1]] *= 0.5
    value = complex(np.sum(w * integrand))

    l1 = quad(v, v.a, v.b, limit=200)[0]
    tail = (
        abs(l1) * (X - 1.0) ** (beta - 1.0) / math.gamma(beta)
        * math.sqrt(math.pi / 2.0) * erfc(X / math.sqrt(2.0 * phi.a))
    )  # fmt: skip
    return value, float(tail)


def _fourier_of_bump(v: Bump, xi: float, nodes: np.ndarray, weights: np.ndarray) -> complex:
    return complex(np.sum(weights * np.exp(-1j * nodes * xi) * v(nodes))) / math.sqrt(2.0 * math.pi)


def symbol_rhs(v: Bump, beta: float, phi: GaussianTest, panels: int = 64) -> complex:
    r""":math:`\int (i\xi)^{-\beta} \mathcal{F}v(\xi) \varphi(\xi) \, d\xi` with an algebraic-weight rule."""
    x, w = leggauss(16)
    h = (v.b - v.a) / panels
    left = v.a + h * np.arange(panels)
    nodes = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * w, panels)

    def g(xi: float) -> complex:
        # both half-lines folded onto xi > 0; (i xi)^{-beta} = |xi|^{-beta} e^{-+ i pi beta / 2}
        plus = np.exp(-0.5j * math.pi * beta) * _fourier_of_bump(v, xi, nodes, weights) * phi(xi)
        minus = np.exp(0.5j * math.pi * beta) * _fourier_of_bump(v, -xi, nodes, weights) * phi(-xi)
        return plus + minus

    upper = abs(phi.xi0) + 40.0 / math.sqrt(phi.a)
    kw = dict(weight="alg", wvar=(-beta, 0.0), limit=400, epsabs=1.0e-14, epsrel=1.0e-12)
    re = quad(lambda s: g(s).real, 0.0, upper, **kw)[0]
    im = quad(lambda s: g(s).imag, 0.0, upper, **kw)[0]
    return complex(re, im)


def suite_symbol(betas=(0.3, 0.5, 0.7), tol: float = 1.0e-4, X: float = 16.0, N: int = 2**15) -> SuiteResult:
    v = Bump(0.0, 1.0, 0.3, 1, 1.0)
    phi = GaussianTest(1.0, 1.0)
    rows = {}
    worst = 0.0
    for beta in betas:
        lhs, tail = symbol_lhs(v, beta, phi, X, N)
        rhs = symbol_rhs(v, beta, phi)
        e = abs(lhs - rhs) / abs(rhs)
        worst = max(worst, e)
        rows[f"beta={beta:g}"] = {
            "lhs": [lhs.real, lhs.imag],
            "rhs": [rhs.real, rhs.imag],
            "rel_error": e,
            "tail_bound": tail,
        }
    return SuiteResult("symbol", worst <= tol, worst, tol, rows)


# }}}


def suite_ml_branches(alphas=(0.75, 0.9, 1.0), betas=(1.0, 1.5), tol: float = 1.0e-7) -> SuiteResult:
    z = -np.linspace(OVERLAP[0], OVERLAP[1], 41)
    worst = 0.0
    rows = {}
    for a in alphas:
        for b in betas:
            s, _ = ml_series(z, a, b)
            g = ml_asymptotic(z, a, b)
            e = float(np.max(np.abs(s - g) / np.abs(s)))
            worst = max(worst, e)
            rows[f"alpha={a:g},beta={b:g}"] = e
    return SuiteResult("ml_branches", worst <= tol, worst, tol, rows)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "monomial": lambda seed: suite_monomial(),
    "adjoint": lambda seed: suite_adjoint(seed),
    "semigroup": lambda seed: suite_semigroup(),
    "ibp": lambda seed: suite_ibp(seed),
    "coercivity": lambda seed: suite_coercivity(seed),
    "symbol": lambda seed: suite_symbol(),
    "ml_branches": lambda seed: suite_ml_branches(),
}


def run_suites(seed: int = 0, names=None, workers: int = 1) -> list[SuiteResult]:
    names = list(SUITES) if names is None else list(names)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda n: SUITES[n](seed), names))
    return [SUITES[n](seed) for n in names]
