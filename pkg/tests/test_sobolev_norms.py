from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracreg.errors import ResolutionError
from fracreg.frac_calc import GridFn, TimeGrid, frac_deriv_left, frac_integral_left, l2_norm
from fracreg.sobolev_norms import (
    ZeroExtension,
    derivative,
    hbeta_seminorm_fourier,
    slobodeckij_norm,
    slobodeckij_seminorm,
    sobolev_norm,
    vector_hbeta_norm,
)
from fracreg.suites import suite_coercivity
from fracreg.testfns import Bump, bump_family


def sampled(fn, N, T=1.0):
    g = TimeGrid(T, N)
    return GridFn.from_callable(g, fn)


def singular_power(gamma_, N):
    """t^{-gamma} with node 0 replaced by the first-cell average."""
    g = TimeGrid(1.0, N)
    v = np.empty(N + 1)
    v[1:] = g.nodes[1:] ** -gamma_
    v[0] = g.tau**-gamma_ / (1.0 - gamma_)
    return GridFn(g, v)


class TestZeroExtension:
    def test_layout(self):
        v = sampled(np.sin, 100)
        z = ZeroExtension(v, 4)
        assert z.length == 512
        assert z.length & (z.length - 1) == 0
        assert np.array_equal(z.padded[:101], v.values)
        assert not np.any(z.padded[101:])

    def test_pad_factor(self):
        with pytest.raises(ValueError):
            ZeroExtension(sampled(np.sin, 100), 2)

    def test_endpoint_ratio(self):
        assert ZeroExtension(sampled(lambda t: t, 100)).endpoint_ratio() == pytest.approx(1.0)


class TestFourierSeminorm:
    def test_zero(self):
        assert hbeta_seminorm_fourier(GridFn.zeros(TimeGrid(1.0, 128)), 0.5) == 0.0

    def test_resolution(self):
        with pytest.raises(ResolutionError):
            hbeta_seminorm_fourier(GridFn.zeros(TimeGrid(1.0, 32)), 0.5)

    @pytest.mark.parametrize("beta", [0.0, 1.2])
    def test_order(self, beta):
        with pytest.raises(ValueError):
            hbeta_seminorm_fourier(GridFn.zeros(TimeGrid(1.0, 128)), beta)

    def test_endpoint_warning(self):
        with pytest.warns(RuntimeWarning):
            hbeta_seminorm_fourier(sampled(lambda t: t, 128), 0.3)

    def test_no_warning_for_bump(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            hbeta_seminorm_fourier(sampled(Bump(0.2, 0.8), 128), 0.3)

    @pytest.mark.parametrize("beta", [0.25, 0.375, 0.45])
    def test_matches_derivative_norm(self, beta):
        # |v|_{H^beta(R)} = ||D_+^beta v||_{L^2(R)}; the derivative of the zero
        # extension has a slow tail beyond T, so evaluate it on a long window
        T, X, N = 1.0, 8.0, 8192
        v = Bump(0.2, 0.75, 0.3, 2, T)
        win = TimeGrid(X, int(N * X / T))
        d = frac_deriv_left(GridFn.from_callable(win, lambda t: np.where(t <= T, v(np.minimum(t, T)), 0.0)), beta)
        ref = l2_norm(d)
        got = hbeta_seminorm_fourier(sampled(v, N), beta)
        assert got == pytest.approx(ref, rel=2e-2)

    def test_unit_order_is_derivative_norm(self):
        b = Bump(0.1, 0.9)
        fn = lambda t: np.sin(2 * np.pi * t) * b(t)  # noqa: E731
        v = sampled(fn, 4096)
        fd = l2_norm(derivative(v))
        assert hbeta_seminorm_fourier(v, 1.0) == pytest.approx(fd, rel=1e-2)

    def test_scaling(self):
        # |v(./T)|_{H^beta} scales like T^{1/2 - beta}
        b1, b2 = Bump(0.2, 0.8, T=1.0), Bump(0.4, 1.6, T=2.0)
        s1 = hbeta_seminorm_fourier(sampled(b1, 2048), 0.4)
        s2 = hbeta_seminorm_fourier(sampled(lambda t: b1(t / 2.0), 4096, T=2.0), 0.4)
        assert s2 == pytest.approx(s1 * 2.0 ** (0.5 - 0.4), rel=1e-3)
        assert b2.b == 1.6


class TestSlobodeckij:
    def test_constant(self):
        v = sampled(lambda t: 3.0 + 0 * t, 128)
        assert slobodeckij_seminorm(v, 0.4) == 0.0
        assert slobodeckij_norm(v, 0.4) == pytest.approx(l2_norm(v), rel=1e-15)

    @pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
    def test_linear_closed_form(self, beta):
        # int_0^1 int_0^1 |s - t|^{1 - 2 beta} ds dt = 2 / ((2 - 2 beta)(3 - 2 beta))
        exact = 2.0 / ((2.0 - 2.0 * beta) * (3.0 - 2.0 * beta))
        errs = []
        for N in (64, 256, 1024):
            g = TimeGrid(1.0, N)
            errs.append(abs(slobodeckij_seminorm(GridFn(g, g.nodes), beta) ** 2 / exact - 1.0))
        assert errs[-1] <= 5e-3
        # interpolating the lag energy between lags costs tau^{2 - 2 beta}; other terms are O(tau) or better
        rates = np.log(np.array(errs[:-1]) / np.array(errs[1:])) / np.log(4.0)
        assert np.all(rates >= min(2.0 - 2.0 * beta, 1.0) - 0.15)

    def test_quadratic_against_dblquad(self):
        from scipy.integrate import dblquad

        beta = 0.3

        def integrand(s, t):
            return (s + t) ** 2 * abs(s - t) ** (1.0 - 2.0 * beta)  # (s^2 - t^2)^2 / |s - t|^{1 + 2 beta}

        half, _ = dblquad(integrand, 0.0, 1.0, 0.0, lambda t: t, epsabs=1e-12)
        g = TimeGrid(1.0, 1024)
        got = slobodeckij_seminorm(GridFn(g, g.nodes**2), beta) ** 2
        assert got == pytest.approx(2.0 * half, rel=2e-3)

    def test_resolution(self):
        with pytest.raises(ResolutionError):
            slobodeckij_norm(GridFn.zeros(TimeGrid(1.0, 32)), 0.3)

    @pytest.mark.parametrize("beta", [0.0, 1.0])
    def test_order(self, beta):
        with pytest.raises(ValueError):
            slobodeckij_seminorm(GridFn.zeros(TimeGrid(1.0, 128)), beta)

    def test_singular_member_is_stable(self):
        # t^{-0.2} belongs to H^{0.2}(0, 1)
        a = slobodeckij_norm(singular_power(0.2, 2048), 0.2)
        b = slobodeckij_norm(singular_power(0.2, 4096), 0.2)
        assert abs(b / a - 1.0) <= 0.1

    def test_power_nonmember_diverges(self):
        # t^{1/4} lies in H^s only for s < 3/4
        norms = [slobodeckij_norm(sampled(lambda t: t**0.25, N), 0.9) for N in (512, 1024, 2048, 4096)]
        assert all(b > 1.05 * a for a, b in zip(norms, norms[1:]))

    @pytest.mark.parametrize("alpha", [0.6, 0.75])
    def test_model_power_diverges_above_threshold(self, alpha):
        # t^alpha lies in H^s only for s < alpha + 1/2
        s = alpha + 0.8
        norms = [sobolev_norm(sampled(lambda t: t**alpha, N), s) for N in (512, 1024, 2048, 4096)]
        assert all(b > 1.1 * a for a, b in zip(norms, norms[1:]))

    def test_member_below_threshold_converges(self):
        alpha = 0.75
        norms = [sobolev_norm(sampled(lambda t: t**alpha, N), alpha + 0.2) for N in (1024, 2048, 4096)]
        assert abs(norms[2] / norms[1] - 1.0) < abs(norms[1] / norms[0] - 1.0)
        assert abs(norms[2] / norms[1] - 1.0) <= 0.05


class TestSobolevNorm:
    def test_l2(self):
        v = sampled(np.cos, 256)
        assert sobolev_norm(v, 0.0) == l2_norm(v)

    def test_h1(self):
        v = sampled(np.sin, 2048)
        exact = math.sqrt(0.5 - math.sin(2) / 4 + 0.5 + math.sin(2) / 4)  # ||sin||^2 + ||cos||^2 on (0, 1)
        assert sobolev_norm(v, 1.0) == pytest.approx(exact, rel=1e-6)

    def test_fourier_method(self):
        v = sampled(Bump(0.2, 0.8), 2048)
        a = sobolev_norm(v, 0.3, method="fourier")
        b = sobolev_norm(v, 0.3)
        assert 0 < a < b

    @pytest.mark.parametrize(("s", "method"), [(-0.1, "slobodeckij"), (2.0, "slobodeckij"), (0.5, "spline")])
    def test_rejects(self, s, method):
        with pytest.raises(ValueError):
            sobolev_norm(sampled(np.sin, 128), s, method=method)


class TestVectorNorm:
    def test_zero(self):
        g = TimeGrid(1.0, 128)
        assert vector_hbeta_norm([GridFn.zeros(g)] * 3, [1.0, 2.0, 3.0], 0.4) == 0.0

    def test_single_mode(self):
        v = sampled(lambda t: t**0.7, 256)
        assert vector_hbeta_norm([v], [1.0], 0.3) == slobodeckij_norm(v, 0.3)

    def test_two_modes_root_sum_square(self):
        g = TimeGrid(1.0, 512)
        a, b = GridFn(g, g.nodes**0.75), GridFn(g, g.nodes**2)
        lam = [math.pi**2, 4 * math.pi**2]
        got = vector_hbeta_norm([a, b], lam, 0.35)
        ref = math.sqrt(lam[0] * slobodeckij_norm(a, 0.35) ** 2 + lam[1] * slobodeckij_norm(b, 0.35) ** 2)
        assert got == pytest.approx(ref, rel=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            vector_hbeta_norm([sampled(np.sin, 128)], [1.0, 2.0], 0.3)

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            vector_hbeta_norm([sampled(np.sin, 128)], [-1.0], 0.3)

    def test_parallel_is_bitwise_serial(self):
        rng = np.random.default_rng(1)
        g = TimeGrid(1.0, 256)
        coeffs = [GridFn(g, np.cumsum(rng.normal(size=257)) / 16) for _ in range(9)]
        w = rng.uniform(0, 5, size=9)
        assert vector_hbeta_norm(coeffs, w, 0.4, workers=4) == vector_hbeta_norm(coeffs, w, 0.4)

    @pytest.mark.parametrize("method", ["slobodeckij", "fourier"])
    def test_method_switch(self, method):
        v = sampled(Bump(0.1, 0.9), 256)
        assert vector_hbeta_norm([v], [1.0], 0.3, method=method) == pytest.approx(sobolev_norm(v, 0.3, method=method))


class TestEquivalences:
    def test_derivative_norm_equivalence(self):
        fam = bump_family(5, 20)
        for a in (0.6, 0.75, 0.9):
            ratios = {}
            for N in (2048, 4096):
                g = TimeGrid(1.0, N)
                ratios[N] = np.array(
                    [l2_norm(frac_deriv_left(GridFn.from_callable(g, f), a / 2)) / slobodeckij_norm(GridFn.from_callable(g, f), a / 2) for f in fam]
                )
            assert np.all((ratios[4096] >= 0.2) & (ratios[4096] <= 5.0))
            assert np.max(np.abs(ratios[4096] / ratios[2048] - 1.0)) <= 0.1

    def test_coercivity(self):
        r = suite_coercivity(seed=0)
        assert r.passed, r

    def test_smoothing(self):
        rng = np.random.default_rng(2)
        beta = 0.4
        out = {}
        for N in (1024, 2048):
            rng = np.random.default_rng(2)
            g = TimeGrid(1.0, N)
            r = []
            for _ in range(10):
                c = rng.normal(size=5)
                h = GridFn.from_callable(g, lambda t, c=c: np.polynomial.legendre.legval(2 * t - 1, c))
                Ih = frac_integral_left(h, beta)
                assert Ih.values[0] == 0.0
                r.append(slobodeckij_norm(Ih, beta) / l2_norm(h))
            out[N] = np.array(r)
        assert np.all(out[2048] < 10.0)
        assert np.max(np.abs(out[2048] / out[1024] - 1.0)) <= 0.1

    def test_slobodeckij_fourier_constant(self):
        fam = bump_family(9, 20)
        g = TimeGrid(1.0, 2048)
        for beta in (0.3, 0.6):
            r = np.array([slobodeckij_seminorm(GridFn.from_callable(g, f), beta) / hbeta_seminorm_fourier(GridFn.from_callable(g, f), beta) for f in fam])
            assert r.max() / r.min() <= 1.5


@given(st.floats(0.05, 0.95), st.floats(-10.0, 10.0).filter(lambda c: c == 0 or abs(c) > 1e-100))
def test_seminorms_are_homogeneous(beta, c):
    v = sampled(Bump(0.2, 0.7, 0.2), 128)
    for fn in (slobodeckij_seminorm, hbeta_seminorm_fourier):
        assert fn(c * v, beta) == pytest.approx(abs(c) * fn(v, beta), rel=1e-12)


@given(st.floats(0.05, 0.95), st.floats(-5.0, 5.0))
def test_slobodeckij_shift_invariant(beta, c):
    g = TimeGrid(1.0, 128)
    v = GridFn(g, np.sin(5 * g.nodes))
    w = GridFn(g, v.values + c)
    assert slobodeckij_seminorm(w, beta) == pytest.approx(slobodeckij_seminorm(v, beta), rel=1e-9)
