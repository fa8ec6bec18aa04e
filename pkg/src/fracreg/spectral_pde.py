r"""Eigenfunction expansion solver for time-fractional diffusion

.. math::

    \partial_t^\alpha (u - u_0) - \Delta u = f \quad \text{in } \Omega \times (0, T),
    \qquad u = 0 \text{ on } \partial\Omega,

on an interval or a rectangle with Dirichlet sine eigenfunctions. Writing
:math:`u(t) = \sum_k c_k(t) \phi_k` reduces the problem to the modal equations

.. math::

    D_{0+}^\alpha (c_k - c_k(0)) + \lambda_k c_k = f_k,
    \qquad c_k(0) = (u_0, \phi_k), \quad f_k(t) = (f(\cdot, t), \phi_k),

which are solved independently by :mod:`fracreg.fode`. Modes are numbered
from 1.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.polynomial.legendre import leggauss

from fracreg.errors import (
    HypothesisError,
    OrderError,
    OutOfDomainError,
    QuadratureResolutionWarning,
    SolverError,
)
from fracreg.fode import (
    SOLVERS,
    ConvergenceTable,
    ModeProblem,
    PowerSource,
    estimate_singular_exponent,
    h2_norm,
    ode_estimate,
    reference_solution,
    solve,
)
from fracreg.frac_calc import (
    FractionalOrder,
    GridFn,
    TimeGrid,
    frac_integral_left,
    inner,
    l2_norm,
)
from fracreg.report import (
    ESTIMATE_IDS,
    EstimateRecord,
    RegularityReport,
    is_stable,
    safe_ratio,
)
from fracreg.sobolev_norms import vector_hbeta_norm

_GAUSS_POINTS = 8
#: Coefficient change under quadrature refinement that triggers a warning.
PROJECTION_RTOL = 1.0e-6
#: Singular coefficients below this fraction of the largest one count as zero.
SIGMA_RTOL = 1.0e-10


# {{{ domain and basis


@dataclass(frozen=True)
class SpatialDomain:
    """An interval :math:`(0, L)` or a rectangle :math:`(0, L_x) \\times (0, L_y)`."""

    kind: str
    lengths: tuple[float, ...]
    M: int = 64

    def __post_init__(self) -> None:
        expected = {"interval": 1, "rectangle": 2}
        if self.kind not in expected:
            raise ValueError(f"unsupported domain kind {self.kind!r}")
        lengths = tuple(float(x) for x in self.lengths)
        if len(lengths) != expected[self.kind]:
            raise ValueError(f"{self.kind} needs {expected[self.kind]} lengths")
        if not all(np.isfinite(x) and x > 0.0 for x in lengths):
            raise ValueError(f"lengths must be positive, got {lengths}")
        if int(self.M) != self.M or self.M < 64:
            raise ValueError(f"quadrature resolution M must be >= 64, got {self.M!r}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "M", int(self.M))

    @classmethod
    def interval(cls, L: float = 1.0, M: int = 64) -> SpatialDomain:
        return cls("interval", (L,), M)

    @classmethod
    def rectangle(cls, Lx: float = 1.0, Ly: float = 1.0, M: int = 64) -> SpatialDomain:
        return cls("rectangle", (Lx, Ly), M)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if x.shape != (self.dim,):
            return False
        return bool(np.all((x >= 0.0) & (x <= np.asarray(self.lengths))))

    def quadrature(self, M: int | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """Composite Gauss-Legendre nodes and weights along each axis."""
        M = self.M if M is None else M
        x, w = leggauss(_GAUSS_POINTS)
        out = []
        for L in self.lengths:
            h = L / M
            left = h * np.arange(M)
            nodes = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
            weights = np.tile(0.5 * h * w, M)
            out.append((nodes, weights))
        return out

    def refine(self, factor: int = 2) -> SpatialDomain:
        return replace(self, M=self.M * factor)


def _sine_table(x: np.ndarray, L: float, kmax: int) -> np.ndarray:
    k = np.arange(1, kmax + 1)
    return math.sqrt(2.0 / L) * np.sin(np.pi * np.outer(x, k) / L)


@dataclass(frozen=True)
class EigenBasis:
    r"""Dirichlet eigenpairs :math:`-\Delta \phi_k = \lambda_k \phi_k`, sorted by eigenvalue.

    ``indices[k]`` holds the sine indices of mode ``k`` (one per axis).
    """

    domain: SpatialDomain
    indices: tuple[tuple[int, ...], ...]
    eigenvalues: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        lam = np.array(self.eigenvalues, dtype=np.float64)
        if lam.shape != (len(self.indices),):
            raise ValueError("one eigenvalue per mode is required")
        if np.any(lam <= 0.0) or np.any(np.diff(lam) < 0.0):
            raise ValueError("eigenvalues must be positive and nondecreasing")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def K(self) -> int:
        return len(self.indices)

    def _axis_max(self, axis: int) -> int:
        return max(ix[axis] for ix in self.indices)

    def tables(self, points: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Per-axis sine tables ``S[a][p, i - 1] = phi_i(points[a][p])``."""
        return [
            _sine_table(np.asarray(p, dtype=np.float64), L, self._axis_max(a))
            for a, (p, L) in enumerate(zip(points, self.domain.lengths))
        ]

    def evaluate(self, x) -> np.ndarray:
        """Mode values at points ``x`` of shape ``(n, dim)``; returns ``(n, K)``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.domain.dim)
        tabs = self.tables([x[:, a] for a in range(self.domain.dim)])
        out = np.ones((x.shape[0], self.K))
        for k, ix in enumerate(self.indices):
            for a, i in enumerate(ix):
                out[:, k] *= tabs[a][:, i - 1]
        return out


def build_basis(domain: SpatialDomain, K: int) -> EigenBasis:
    """First ``K`` Dirichlet eigenpairs; ties are broken lexicographically."""
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    K = int(K)

    if domain.kind == "interval":
        (L,) = domain.lengths
        idx = tuple((k,) for k in range(1, K + 1))
        lam = np.array([(k * math.pi / L) ** 2 for k in range(1, K + 1)])
        return EigenBasis(domain, idx, lam)

    if domain.kind == "rectangle":
        Lx, Ly = domain.lengths
        cand = [
            ((i * math.pi / Lx) ** 2 + (j * math.pi / Ly) ** 2, i, j)
            for i in range(1, K + 1)
            for j in range(1, K + 1)
        ]
        cand.sort()
        chosen = cand[:K]
        return EigenBasis(
            domain,
            tuple((i, j) for _, i, j in chosen),
            np.array([lam for lam, _, _ in chosen]),
        )

    raise ValueError(f"unsupported domain kind {domain.kind!r}")


# }}}


# {{{ projection


def _project_once(fn: Callable, basis: EigenBasis, M: int, t=None) -> np.ndarray:
    quad = basis.domain.quadrature(M)
    tabs = basis.tables([nodes for nodes, _ in quad])
    extra = () if t is None else (np.asarray(t, dtype=np.float64),)

    if basis.domain.dim == 1:
        (x, w), (S,) = quad[0], tabs
        if t is None:
            F = np.broadcast_to(np.asarray(fn(x), dtype=np.float64), x.shape)
            return S.T @ (w * F)
        F = np.broadcast_to(
            np.asarray(fn(x[:, None], extra[0][None, :]), dtype=np.float64),
            (x.size, extra[0].size),
        )
        C = S.T @ (w[:, None] * F)
        return C[[i - 1 for (i,) in basis.indices]]

    (x, wx), (y, wy) = quad
    Sx, Sy = tabs
    ii = np.array([i - 1 for i, _ in basis.indices])
    jj = np.array([j - 1 for _, j in basis.indices])
    Ax = Sx * wx[:, None]
    Ay = Sy * wy[:, None]
    if t is None:
        F = np.broadcast_to(
            np.asarray(fn(x[:, None], y[None, :]), dtype=np.float64), (x.size, y.size)
        )
        C = Ax.T @ F @ Ay
        return C[ii, jj]

    tt = extra[0]
    out = np.empty((basis.K, tt.size))
    chunk = 8
    for s in range(0, tt.size, chunk):
        tc = tt[s : s + chunk]
        F = np.broadcast_to(
            np.asarray(fn(x[:, None, None], y[None, :, None], tc[None, None, :]), dtype=np.float64),
            (x.size, y.size, tc.size),
        )
        C = np.einsum("pi,pqs,qj->ijs", Ax, F, Ay, optimize=True)
        out[:, s : s + chunk] = C[ii, jj, :]
    return out


def integrate(fn: Callable, domain: SpatialDomain) -> float:
    """Integral of ``fn`` over the domain by the composite Gauss rule."""
    quad = domain.quadrature()
    if domain.dim == 1:
        (x, w), = quad
        return float(np.sum(w * np.broadcast_to(fn(x), x.shape)))
    (x, wx), (y, wy) = quad
    F = np.broadcast_to(fn(x[:, None], y[None, :]), (x.size, y.size))
    return float(wx @ F @ wy)


def project(fn: Callable, basis: EigenBasis, *, check: bool = True) -> np.ndarray:
    r"""Coefficients :math:`(fn, \phi_k)_{L^2(\Omega)}` by composite Gauss quadrature.

    With ``check`` set, the projection is repeated with twice the panels and a
    :class:`QuadratureResolutionWarning` is emitted if any coefficient moves by
    more than :data:`PROJECTION_RTOL` (relative to the largest one).
    """
    c = _project_once(fn, basis, basis.domain.M)
    if not np.all(np.isfinite(c)):
        raise ValueError("projection produced non-finite coefficients")
    if check:
        _check_projection(c, _project_once(fn, basis, 2 * basis.domain.M))
    return c


def _check_projection(c: np.ndarray, c2: np.ndarray) -> None:
    scale = max(float(np.max(np.abs(c2), initial=0.0)), 1.0e-300)
    change = float(np.max(np.abs(c2 - c), initial=0.0))
    if change > PROJECTION_RTOL * max(scale, 1.0) and change > PROJECTION_RTOL * scale:
        warnings.warn(
            f"projection changed by {change:.2e} under quadrature refinement; "
            "increase M",
            QuadratureResolutionWarning,
            stacklevel=3,
        )


def project_in_time(
    fn: Callable, basis: EigenBasis, t, *, check: bool = True
) -> np.ndarray:
    """Modal loads :math:`f_k(t)`; returns an array of shape ``(K, len(t))``.

    The refinement check is only performed at the first and last time.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    C = _project_once(fn, basis, basis.domain.M, t)
    if not np.all(np.isfinite(C)):
        raise ValueError("modal load contains non-finite values")
    if check:
        ends = t[[0, -1]]
        _check_projection(C[:, [0, -1]], _project_once(fn, basis, 2 * basis.domain.M, ends))
    return C


# }}}


# {{{ problem and field


SpatialData = Callable | Sequence[float] | np.ndarray


@dataclass(frozen=True)
class ProblemSpec:
    """A full problem instance.

    ``u0`` is a callable of the spatial coordinates or a sequence of ``K``
    modal coefficients. ``f`` is a callable of ``(*x, t)``, ``None`` for zero
    force, or an array of modal loads of shape ``(K, N + 1)``. The
    ``*_regularity`` fields declare the data smoothness assumed by the
    estimate audits (time order of ``f``, spatial order of ``u0`` and of
    :math:`f(\\cdot, 0)`).
    """

    domain: SpatialDomain
    alpha: float
    T: float
    K: int
    N: int
    u0: SpatialData
    f: Any = None
    solver: str = "oracle"
    f_time_regularity: float = 0.0
    u0_regularity: float = 1.0
    f0_regularity: float = 0.0
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", FractionalOrder.model(self.alpha).value)
        if not (np.isfinite(self.T) and self.T > 0.0):
            raise ValueError(f"T must be positive, got {self.T!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {sorted(SOLVERS)}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError(f"workers must be a positive integer, got {self.workers!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "N", int(self.N))
        if callable(self.u0):
            _check_boundary(self.u0, self.domain)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)

    @property
    def time_regularity(self) -> float:
        return math.inf if self.f is None else self.f_time_regularity

    @property
    def initial_force_regularity(self) -> float:
        return math.inf if self.f is None else self.f0_regularity

    def with_(self, **changes) -> ProblemSpec:
        return replace(self, **changes)


def _check_boundary(u0: Callable, domain: SpatialDomain) -> None:
    # H^1_0 data must vanish on the boundary
    s = np.linspace(0.0, 1.0, 33)
    if domain.dim == 1:
        (L,) = domain.lengths
        bnd = np.asarray(u0(np.array([0.0, L])), dtype=np.float64)
        inner_vals = np.asarray(u0(L * s), dtype=np.float64)
    else:
        Lx, Ly = domain.lengths
        xs = np.concatenate([Lx * s, Lx * s, np.zeros_like(s), np.full_like(s, Lx)])
        ys = np.concatenate([np.zeros_like(s), np.full_like(s, Ly), Ly * s, Ly * s])
        bnd = np.asarray(u0(xs, ys), dtype=np.float64)
        inner_vals = np.asarray(u0(*np.meshgrid(Lx * s, Ly * s)), dtype=np.float64)
    scale = max(float(np.max(np.abs(inner_vals), initial=0.0)), 1.0)
    if np.any(~np.isfinite(bnd)) or np.max(np.abs(bnd)) > 1.0e-8 * scale:
        raise ValueError("u0 must vanish on the boundary (H^1_0 data)")


@dataclass(frozen=True)
class SpectralField:
    """Truncated expansion :math:`\\sum_{k \\le K} c_k(t) \\phi_k`."""

    basis: EigenBasis
    grid: TimeGrid
    coefficients: tuple[GridFn, ...]
    initial: np.ndarray = field(repr=False)
    loads: np.ndarray = field(repr=False)
    alpha: float = 0.75
    solver: str = "oracle"

    def __post_init__(self) -> None:
        if len(self.coefficients) != self.basis.K:
            raise ValueError("coefficient count must match the basis")
        init = np.array(self.initial, dtype=np.float64)
        loads = np.array(self.loads, dtype=np.float64)
        if init.shape != (self.basis.K,) or loads.shape != (self.basis.K, self.grid.N + 1):
            raise ValueError("initial data or loads have the wrong shape")
        init.setflags(write=False)
        loads.setflags(write=False)
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "loads", loads)

    @property
    def values(self) -> np.ndarray:
        """Modal coefficients as an array of shape ``(K, N + 1)``."""
        return np.array([c.values for c in self.coefficients])

    def l2_in_space(self) -> np.ndarray:
        """:math:`\\|u(t_n)\\|_{L^2(\\Omega)}` by Parseval."""
        return np.sqrt(np.sum(self.values**2, axis=0))

    def tail_indicator(self) -> float:
        """Largest :math:`|c_K|` relative to the largest coefficient overall."""
        v = np.abs(self.values)
        top = float(v.max(initial=0.0))
        return 0.0 if top == 0.0 else float(v[-1].max()) / top


def _initial_coefficients(spec: ProblemSpec, basis: EigenBasis) -> np.ndarray:
    if callable(spec.u0):
        return project(spec.u0, basis)
    c0 = np.asarray(spec.u0, dtype=np.float64)
    if c0.shape != (basis.K,):
        raise ValueError(f"expected {basis.K} initial coefficients, got {c0.shape}")
    return c0


def _modal_loads(spec: ProblemSpec, basis: EigenBasis, grid: TimeGrid) -> np.ndarray:
    if spec.f is None:
        return np.zeros((basis.K, grid.N + 1))
    if callable(spec.f):
        return project_in_time(spec.f, basis, grid.nodes)
    F = np.asarray(spec.f, dtype=np.float64)
    if F.shape != (basis.K, grid.N + 1):
        raise ValueError(f"modal loads must have shape {(basis.K, grid.N + 1)}, got {F.shape}")
    return F


def mode_problems(spec: ProblemSpec, basis: EigenBasis, c0, loads) -> list[ModeProblem]:
    grid = spec.grid
    return [
        ModeProblem(
            spec.alpha,
            float(lam),
            float(c0[k]),
            GridFn(grid, loads[k]),
            g0=float(loads[k, 0]),
            g_regularity=spec.time_regularity,
        )
        for k, lam in enumerate(basis.eigenvalues)
    ]


def _parallel_map(fn, items, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def solve_field(spec: ProblemSpec, solver: str | None = None) -> SpectralField:
    """Project the data, solve every modal equation and assemble the field."""
    solver = spec.solver if solver is None else solver
    basis = build_basis(spec.domain, spec.K)
    grid = spec.grid
    c0 = _initial_coefficients(spec, basis)
    loads = _modal_loads(spec, basis, grid)

    if callable(spec.u0):
        # Bessel's inequality under the domain quadrature
        norm2 = integrate(lambda *x: np.asarray(spec.u0(*x), dtype=np.float64) ** 2, spec.domain)
        if float(np.sum(c0**2)) > norm2 * (1.0 + 1.0e-8) + 1.0e-14:
            raise ValueError("initial coefficients violate Bessel's inequality")

    problems = mode_problems(spec, basis, c0, loads)

    def run(k: int):
        try:
            return solve(problems[k], grid, solver), None
        except Exception as exc:  # noqa: BLE001 - aggregated below
            return None, exc

    results = _parallel_map(run, list(range(basis.K)), spec.workers)
    failed = [(k + 1, exc) for k, (_, exc) in enumerate(results) if exc is not None]
    if failed:
        detail = "; ".join(f"mode {k}: {exc}" for k, exc in failed)
        raise SolverError(f"{len(failed)} modal solve(s) failed: {detail}")

    return SpectralField(
        basis,
        grid,
        tuple(y for y, _ in results),
        c0,
        loads,
        alpha=spec.alpha,
        solver=solver,
    )


# }}}


# {{{ singular field and evaluation


@dataclass(frozen=True)
class SingularField:
    r"""Closed form :math:`S(x, t) = \sum_k \sigma_k t^\alpha \phi_k(x)`."""

    basis: EigenBasis
    sigma: np.ndarray
    alpha: float

    def coefficient(self, k: int, grid: TimeGrid) -> GridFn:
        return GridFn(grid, self.sigma[k] * grid.nodes**self.alpha)

    def evaluate(self, x, t: float) -> float:
        phi = self.basis.evaluate(_point(self.basis.domain, x))[0]
        return float(np.dot(self.sigma, phi) * t**self.alpha)

    def significant(self) -> np.ndarray:
        """Mask of modes whose singular coefficient is numerically nonzero."""
        s = np.abs(self.sigma)
        top = float(s.max(initial=0.0))
        return s > SIGMA_RTOL * top if top > 0.0 else np.zeros_like(s, dtype=bool)


def singular_field(field: SpectralField, spec: ProblemSpec) -> SingularField:
    r""":math:`\sigma_k = (f_k(0) - \lambda_k c_k(0)) / \Gamma(1 + \alpha)`."""
    f0 = field.loads[:, 0]
    if not np.all(np.isfinite(f0)):
        raise ValueError("initial force f(., 0) is not available")
    sigma = (f0 - field.basis.eigenvalues * field.initial) / math.gamma(1.0 + spec.alpha)
    return SingularField(field.basis, sigma, spec.alpha)


def _point(domain: SpatialDomain, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if not domain.contains(x):
        raise OutOfDomainError(f"point {x.tolist()} is outside the domain")
    return x.reshape(1, -1)


def evaluate_field(field: SpectralField, x, t: float) -> float:
    """:math:`u(x, t)` with linear interpolation in time between nodes."""
    t = float(t)
    if not (0.0 <= t <= field.grid.T):
        raise OutOfDomainError(f"time {t} is outside [0, {field.grid.T}]")
    phi = field.basis.evaluate(_point(field.basis.domain, x))[0]
    ck = np.array([np.interp(t, field.grid.nodes, c.values) for c in field.coefficients])
    return float(np.dot(ck, phi))


def sample_field(field: SpectralField, points: np.ndarray) -> np.ndarray:
    """Field values on ``points`` (shape ``(n, dim)``) at every node: ``(N + 1, n)``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, field.basis.domain.dim)
    for p in pts:
        _point(field.basis.domain, p)
    return field.values.T @ field.basis.evaluate(pts).T


# }}}


# {{{ weak residual


def weak_residual(
    field: SpectralField,
    spec: ProblemSpec,
    test: tuple[int, Callable],
    *,
    relative: bool = False,
) -> float:
    r"""Modal weak-form residual for the test function :math:`\eta(t) \phi_j(x)`.

    The fractional term uses the integration-by-parts form
    :math:`(D_{0+}^\alpha w, \eta) = -(I_{0+}^{1 - \alpha} w, \eta')`, valid
    for :math:`\eta` compactly supported in :math:`(0, T)`. ``j`` is 1-based.
    With ``relative`` the residual is divided by the largest of the three
    pairings.
    """
    j, eta = test
    if not (1 <= j <= field.basis.K):
        raise ValueError(f"mode index must lie in 1..{field.basis.K}, got {j}")
    grid = field.grid
    t = grid.nodes
    e = GridFn(grid, eta(t))
    if hasattr(eta, "derivative"):
        de = GridFn(grid, eta.derivative(t))
    else:
        de = GridFn(grid, np.gradient(e.values, grid.tau, edge_order=2))

    c = field.coefficients[j - 1]
    w = GridFn(grid, c.values - c.values[0])
    frac = -inner(frac_integral_left(w, 1.0 - spec.alpha), de)
    react = field.basis.eigenvalues[j - 1] * inner(c, e)
    load = inner(GridFn(grid, field.loads[j - 1]), e)

    res = abs(frac + react - load)
    if not relative:
        return res
    scale = max(abs(frac), abs(react), abs(load))
    return 0.0 if scale == 0.0 else res / scale


# }}}


# {{{ regularity report


def _check_esti_hypothesis(estimate: str, spec: ProblemSpec) -> None:
    a = spec.alpha
    ft, f0r, u0r = spec.time_regularity, spec.initial_force_regularity, spec.u0_regularity
    need = {
        "esti-u-1": (0.0, 0.0, 1.0),
        "esti-u-2": (1.0 - a, 0.0, 2.0),
        "esti-u-3": (1.0, 2.0, 4.0),
        "esti-u-4": (2.0 - a, 2.0, 4.0),
    }[estimate]
    if estimate == "esti-u-4" and not a > 0.75:
        raise OrderError(f"{estimate} needs 0.75 < alpha < 1, got {a:g}")
    labels = ("f in time", "f(0) in space", "u0 in space")
    for (have, req), label in zip(zip((ft, f0r, u0r), need), labels):
        if have < req:
            raise HypothesisError(
                f"{estimate} needs {label} of Sobolev order {req:g}; declared {have:g}"
            )


def _esti_terms(estimate: str, field: SpectralField, spec: ProblemSpec) -> tuple[dict, float]:
    a = spec.alpha
    lam = field.basis.eigenvalues
    grid = field.grid
    c = list(field.coefficients)
    f = [GridFn(grid, row) for row in field.loads]
    ones = np.ones_like(lam)
    c0 = field.initial
    S = singular_field(field, spec)
    w = [ck - S.coefficient(k, grid) for k, ck in enumerate(c)]
    workers = spec.workers

    def vn(coeffs, weights, s):
        return vector_hbeta_norm(coeffs, weights, s, workers=workers)

    def spectral(v, p):
        return math.sqrt(math.fsum(lam**p * v**2))

    f0_h2 = spectral(field.loads[:, 0], 2)

    if estimate == "esti-u-1":
        terms = {
            "u:H^a(L2)": vn(c, ones, a),
            "u:H^a/2(H1)": vn(c, lam, a / 2),
            "u:L2(H2)": vn(c, lam**2, 0.0),
        }
        rhs = vn(f, ones, 0.0) + spectral(c0, 1)
    elif estimate == "esti-u-2":
        terms = {"u:H1(L2)": vn(c, ones, 1.0)}
        rhs = vn(f, ones, 1.0 - a) + spectral(c0, 2)
    elif estimate == "esti-u-3":
        terms = {
            "u-S:H^1+a(L2)": vn(w, ones, 1.0 + a),
            "u-S:H^1+a/2(H1)": vn(w, lam, 1.0 + a / 2),
            "u:H1(H2)": vn(c, lam**2, 1.0),
        }
        rhs = vn(f, ones, 1.0) + f0_h2 + spectral(c0, 4)
    else:
        terms = {"u-S:H2(L2)": math.sqrt(math.fsum(h2_norm(wk) ** 2 for wk in w))}
        rhs = vn(f, ones, 2.0 - a) + f0_h2 + spectral(c0, 4)
    return terms, rhs


def _diagnostics(estimate: str, field: SpectralField, spec: ProblemSpec) -> dict:
    # norms of u itself where the estimate controls only u - S
    a = spec.alpha
    ones = np.ones(field.basis.K)
    if estimate == "esti-u-3":
        return {"u:H^1+a(L2)": vector_hbeta_norm(list(field.coefficients), ones, 1.0 + a)}
    if estimate == "esti-u-4":
        return {"u:H2(L2)": math.sqrt(math.fsum(h2_norm(c) ** 2 for c in field.coefficients))}
    return {}


def _ode_terms(estimate: str, field: SpectralField, spec: ProblemSpec) -> tuple[dict, float]:
    # worst observed constant over the modes
    basis = field.basis
    problems = mode_problems(spec, basis, field.initial, field.loads)
    # modes carrying only projection round-off would report noise ratios
    size = np.maximum(np.abs(field.initial), np.max(np.abs(field.loads), axis=1))
    active = size > 1.0e-12 * max(float(size.max()), 1.0e-300)
    best = (0.0, 0.0, 0.0, 0)
    for k, (p, y) in enumerate(zip(problems, field.coefficients)):
        if not active[k]:
            continue
        lhs, rhs = ode_estimate(estimate, p, y)
        r = safe_ratio(lhs, rhs)
        if r > best[0]:
            best = (r, lhs, rhs, k + 1)
    _, lhs, rhs, k = best
    return {"lhs": lhs, "mode": float(k)}, rhs


def _evaluate(estimate: str, field: SpectralField, spec: ProblemSpec) -> tuple[float, float, dict]:
    if estimate.startswith("esti-u"):
        terms, rhs = _esti_terms(estimate, field, spec)
        lhs = math.fsum(terms.values())
        terms.update(_diagnostics(estimate, field, spec))
    else:
        terms, rhs = _ode_terms(estimate, field, spec)
        lhs = terms.pop("lhs")
    return lhs, rhs, terms


def regularity_report(
    field: SpectralField,
    spec: ProblemSpec,
    estimates: Sequence[str] = ("esti-u-1",),
    *,
    refine: bool = True,
    meta: dict | None = None,
) -> RegularityReport:
    """Observed constants of the requested estimates.

    With ``refine`` the problem is solved again with ``2N`` time steps and
    ``2K`` modes, and each ratio is flagged stable when it changes by at most
    15%.
    """
    for e in estimates:
        if e not in ESTIMATE_IDS:
            raise ValueError(f"unknown estimate id {e!r}")
        if e.startswith("esti-u"):
            _check_esti_hypothesis(e, spec)

    fine_field = None
    fine_spec = spec.with_(N=2 * spec.N, K=2 * spec.K) if refine else None
    if refine:
        if not callable(spec.u0) or not (spec.f is None or callable(spec.f)):
            raise ValueError("refinement needs closed-form u0 and f")
        fine_field = solve_field(fine_spec, field.solver)

    records = []
    for e in estimates:
        lhs, rhs, terms = _evaluate(e, field, spec)
        ratio = safe_ratio(lhs, rhs)
        packed = {k: (v,) for k, v in terms.items()}
        stable = ratio_f = None
        if fine_field is not None:
            lhs_f, rhs_f, terms_f = _evaluate(e, fine_field, fine_spec)
            ratio_f = safe_ratio(lhs_f, rhs_f)
            floor = 1.0e-10 * max(rhs, rhs_f, 1.0)
            stable = is_stable(lhs, lhs_f, floor) and is_stable(ratio, ratio_f, 1.0e-10)
            if lhs <= floor and lhs_f <= floor:
                stable = True
            packed = {k: (terms[k], terms_f[k]) for k in terms}
        records.append(EstimateRecord(e, lhs, rhs, ratio, stable, ratio_f, packed))

    info = {
        "alpha": spec.alpha,
        "T": spec.T,
        "N": spec.N,
        "K": spec.K,
        "solver": field.solver,
        "tail_indicator": field.tail_indicator(),
    }
    info.update(meta or {})
    return RegularityReport(tuple(records), info)


# }}}


# {{{ convergence of whole fields


class _ModalSource:
    """Callable :math:`t \\mapsto f_k(t)` backed by a shared projection cache."""

    def __init__(self, spec: ProblemSpec, basis: EigenBasis, cache: dict, k: int):
        self.spec, self.basis, self.cache, self.k = spec, basis, cache, k

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        key = (t.size, float(t[0]), float(t[-1]))
        if key not in self.cache:
            self.cache[key] = project_in_time(self.spec.f, self.basis, t, check=False)
        return self.cache[key][self.k]


def modal_problems_resampleable(spec: ProblemSpec) -> tuple[EigenBasis, list[ModeProblem]]:
    """Mode problems whose sources can be evaluated on any time grid."""
    basis = build_basis(spec.domain, spec.K)
    c0 = _initial_coefficients(spec, basis)
    if spec.f is None:
        f0 = np.zeros(basis.K)
        sources = [PowerSource(()) for _ in range(basis.K)]
    elif callable(spec.f):
        cache: dict = {}
        f0 = project_in_time(spec.f, basis, [0.0], check=False)[:, 0]
        sources = [_ModalSource(spec, basis, cache, k) for k in range(basis.K)]
    else:
        raise ValueError("convergence studies need a closed-form or zero force")
    problems = [
        ModeProblem(spec.alpha, float(lam), float(c0[k]), sources[k], g0=float(f0[k]))
        for k, lam in enumerate(basis.eigenvalues)
    ]
    return basis, problems


def field_convergence(
    spec: ProblemSpec, solver: str, base_N: int, levels: int, *, oracle_refine: int = 4
) -> ConvergenceTable:
    r"""Errors of ``solver`` against the oracle in :math:`L^\infty(0,T; L^2(\Omega))`
    and :math:`L^2(0, T; L^2(\Omega))`, on ``N = base_N * 2**i``.
    """
    if levels < 3:
        raise ValueError(f"need at least 3 levels, got {levels}")
    _, problems = modal_problems_resampleable(spec)
    T = spec.T
    finest = TimeGrid(T, base_N * 2 ** (levels - 1))
    refs = [reference_solution(p, finest, oracle_refine).values for p in problems]

    sizes, einf, el2 = [], [], []
    for i in range(levels):
        grid = TimeGrid(T, base_N * 2**i)
        stride = finest.N // grid.N
        sq = np.zeros(grid.N + 1)
        for p, ref in zip(problems, refs):
            y = solve(p, grid, solver).values
            sq += (y - ref[::stride]) ** 2
        err = np.sqrt(sq)
        sizes.append(grid.N)
        einf.append(float(err.max()))
        el2.append(l2_norm(GridFn(grid, err)))

    return ConvergenceTable(
        solver,
        tuple(sizes),
        tuple(einf),
        tuple(el2),
        meta={"alpha": spec.alpha, "T": T, "K": spec.K},
    )


def _singular_horizon(lam: float, alpha: float, smallness: float) -> float:
    # time up to which lam t^alpha <= smallness
    return (smallness / lam) ** (1.0 / alpha)


def singular_exponents(
    field: SpectralField,
    spec: ProblemSpec,
    window: int | tuple[int, int] | None = None,
    *,
    smallness: float = 0.03,
    min_nodes: int = 16,
) -> dict[int, float]:
    r"""Fitted exponent of :math:`c_k - c_k(0)` for modes with :math:`\sigma_k \ne 0`.

    Without ``window`` the fit for mode ``k`` uses the nodes where
    :math:`\lambda_k t^\alpha \le` ``smallness``, beyond which the next term
    of the expansion bends the power law. When the field grid has fewer than
    ``min_nodes`` such nodes, the mode is re-solved with the same solver on a
    short interval resolving that range (this needs closed-form data).
    """
    S = singular_field(field, spec)
    grid = field.grid
    local = None
    out = {}
    for k in np.flatnonzero(S.significant()):
        lam = float(field.basis.eigenvalues[k])
        c = field.coefficients[k]
        if window is not None:
            out[int(k) + 1] = estimate_singular_exponent(c, float(c.values[0]), window)
            continue

        t_star = _singular_horizon(lam, spec.alpha, smallness)
        n = min(grid.N // 8, math.floor(t_star / grid.tau))
        if n >= min_nodes:
            out[int(k) + 1] = estimate_singular_exponent(c, float(c.values[0]), n)
            continue

        if local is None:
            _, local = modal_problems_resampleable(spec)
        sub = TimeGrid(8.0 * t_star, 8 * min_nodes)
        y = solve(local[k], sub, field.solver)
        out[int(k) + 1] = estimate_singular_exponent(y, float(y.values[0]), min_nodes)
    return out


# }}}
