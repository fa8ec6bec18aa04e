r"""Gamma and two-parameter Mittag-Leffler functions on the nonpositive axis.

The Mittag-Leffler function

.. math::

    E_{\alpha, \beta}(z) = \sum_{k = 0}^\infty \frac{z^k}{\Gamma(\alpha k + \beta)}

is evaluated for real :math:`z \le 0` by two branches:

* the power series, for :math:`|z| < Z_{switch}` and only while the alternating
  sum is well conditioned;
* for larger arguments, the first two terms of the asymptotic expansion plus
  the exact remainder :math:`z^{-2} E_{\alpha, \beta - 2\alpha}(z)`, the latter
  obtained by inverting its Laplace transform on a parabolic contour
  (Weideman and Trefethen, 2007).

For :math:`0 < \alpha < 1` the transform :math:`s^{\alpha - \beta} / (s^\alpha - z)`
has no poles on the principal sheet, so the inversion needs no residue terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, rgamma

from fracreg.errors import MittagLefflerAccuracyError

#: Largest :math:`|z|` accepted by :func:`mittag_leffler` unless overridden.
Z_MAX = 1.0e4
#: Series branch is used strictly below this magnitude.
Z_SWITCH = 5.0
#: Band in which both branches are evaluated and compared.
OVERLAP = (4.0, 6.0)
#: Relative disagreement tolerated inside :data:`OVERLAP`.
OVERLAP_RTOL = 1.0e-7

# series is abandoned once sum(|terms|) / |sum| * eps exceeds this
_SERIES_COND_TOL = 1.0e-11
_CONTOUR_NODES = 24
_ASYMPTOTIC_TERMS = 2


def gamma(x: float) -> float:
    """Gamma function for positive real arguments."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"gamma is only defined here for x > 0, got {x!r}")
    if x > 171.0:
        raise OverflowError(f"gamma({x!r}) overflows double precision")

    return math.gamma(x)


@dataclass(frozen=True)
class MLParams:
    """Parameters :math:`(\\alpha, \\beta)` of a Mittag-Leffler function."""

    alpha: float
    beta: float = 1.0
    z_max: float = Z_MAX

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        if not self.z_max > 0.0:
            raise ValueError(f"z_max must be positive, got {self.z_max!r}")

    def __call__(self, z):
        return mittag_leffler(z, self.alpha, self.beta, z_max=self.z_max)


# {{{ branches


def ml_series(z, alpha: float, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Sum the power series; return values and a condition estimate.

    The condition estimate is ``sum(|terms|) / |sum|``; multiplied by machine
    epsilon it bounds the relative rounding error of the alternating sum.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    r = np.abs(z)
    rmax = float(r.max(initial=0.0))

    # stop once r^k / Gamma(alpha k + beta) < 1e-18 past the peak term
    kmax = 1
    if rmax > 0.0:
        lr = math.log(rmax)
        k = 1
        while True:
            lt = k * lr - gammaln(alpha * k + beta)
            if lt < -41.5 and k * alpha > rmax ** (1.0 / alpha) + 1.0:
                break
            k += 1
            if k > 20000:
                break
        kmax = k

    ks = np.arange(kmax + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(r)[:, None]
        logmag = np.where(ks[None, :] == 0.0, 0.0, ks[None, :] * logr)
    logmag = logmag - gammaln(alpha * ks + beta)
    mag = np.exp(logmag)
    mag[:, 0] = rgamma(beta)
    sign = np.where(z[:, None] < 0.0, (-1.0) ** ks[None, :], 1.0)
    terms = sign * mag

    total = np.sum(terms, axis=1)
    absum = np.sum(np.abs(terms), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(total != 0.0, absum / np.abs(total), np.inf)

    return total, cond


def _contour(z: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    # parabola s(u) = mu (1 + iu)^2 with the optimal step of Weideman-Trefethen
    n = _CONTOUR_NODES
    h = 3.0 / n
    mu = math.pi * n / 12.0
    u = h * np.arange(n + 1)
    s = mu * (1.0 + 1.0j * u) ** 2
    ds = 2.0j * mu * (1.0 + 1.0j * u)

    x = -z[:, None]
    g = np.exp(s) * s ** (alpha - beta) / (s**alpha + x) * ds
    w = np.ones(n + 1)
    w[0] = 0.5

    return (h / math.pi) * np.sum(w * g.imag, axis=1)


def ml_asymptotic(z, alpha: float, beta: float) -> np.ndarray:
    """Large-argument branch: truncated asymptotic sum plus exact remainder.

    Uses the identity
    :math:`E_{\\alpha,\\beta}(z) = -\\sum_{k=1}^{m} z^{-k} / \\Gamma(\\beta - \\alpha k)
    + z^{-m} E_{\\alpha, \\beta - m\\alpha}(z)` with the remainder evaluated by
    contour inversion. Valid for any :math:`z < 0`.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if np.any(z >= 0.0):
        raise ValueError("the asymptotic branch requires z < 0")

    m = _ASYMPTOTIC_TERMS
    out = np.zeros_like(z)
    for k in range(1, m + 1):
        out -= z ** (-k) * rgamma(beta - alpha * k)

    return out + z ** (-m) * _contour(z, alpha, beta - m * alpha)


# }}}


def mittag_leffler(z, alpha: float, beta: float = 1.0, *, z_max: float = Z_MAX):
    """Evaluate :math:`E_{\\alpha,\\beta}(z)` for real :math:`-z_{max} \\le z \\le 0`.

    Returns a float for scalar input and an array otherwise.

    :raises ValueError: for :math:`\\alpha \\notin (0, 1]`, :math:`\\beta \\le 0`,
        positive arguments or :math:`|z| > z_{max}`.
    :raises MittagLefflerAccuracyError: if both branches are available in the
        overlap band and differ by more than :data:`OVERLAP_RTOL`.
    """
    alpha = float(alpha)
    beta = float(beta)
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta!r}")

    scalar = np.ndim(z) == 0
    zz = np.asarray(z, dtype=np.float64).ravel()
    if np.any(np.isnan(zz)):
        raise ValueError("Mittag-Leffler argument contains NaN")
    if np.any(zz > 0.0):
        raise ValueError("only nonpositive arguments are supported")
    if np.any(-zz > z_max):
        raise ValueError(f"|z| exceeds z_max = {z_max:g}")

    out = np.empty_like(zz)
    if alpha == 1.0 and beta == 1.0:
        out[:] = np.exp(zz)
        return float(out[0]) if scalar else out.reshape(np.shape(z))

    r = -zz
    small = r < Z_SWITCH
    use_series = np.zeros_like(small)
    if np.any(small):
        vals, cond = ml_series(zz[small], alpha, beta)
        ok = cond * np.finfo(np.float64).eps < _SERIES_COND_TOL
        idx = np.flatnonzero(small)
        out[idx[ok]] = vals[ok]
        use_series[idx[ok]] = True

    rest = ~use_series
    if np.any(rest):
        out[rest] = ml_asymptotic(zz[rest], alpha, beta)

    # cross-check in the overlap band wherever the series is trustworthy
    band = (r >= OVERLAP[0]) & (r <= OVERLAP[1])
    if np.any(band):
        sv, cond = ml_series(zz[band], alpha, beta)
        ok = cond * np.finfo(np.float64).eps < _SERIES_COND_TOL
        if np.any(ok):
            av = ml_asymptotic(zz[band][ok], alpha, beta)
            err = np.abs(av - sv[ok]) / np.maximum(np.abs(sv[ok]), 1.0e-300)
            if np.any(err > OVERLAP_RTOL):
                raise MittagLefflerAccuracyError(
                    f"branch disagreement {err.max():.3e} for alpha={alpha}, "
                    f"beta={beta} exceeds {OVERLAP_RTOL:.1e}"
                )

    return float(out[0]) if scalar else out.reshape(np.shape(z))
