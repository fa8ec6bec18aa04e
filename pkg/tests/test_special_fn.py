from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracreg.errors import MittagLefflerAccuracyError
from fracreg.special_fn import (
    OVERLAP,
    Z_SWITCH,
    MLParams,
    gamma,
    ml_asymptotic,
    ml_series,
    mittag_leffler,
)

# E_{alpha,beta}(z) from the defining series in mpmath at 60+ digits,
# precision grown with |z|^{1/alpha} to absorb cancellation
ML_ORACLE = [
    ((-1.0, 0.5, 1.0), 0.427583576155807),
    ((-1.0, 0.75, 1.0), 0.39310830281575406),
    ((-3.0, 0.75, 0.75), 0.037918187563107109),
    ((-4.5, 0.6, 1.0), 0.10598026464026232),
    ((-7.0, 0.9, 0.9), 0.0037514423124251291),
    ((-12.0, 0.75, 1.0), 0.025085777706384878),
    ((-20.0, 0.8, 0.8), 0.00049582520959208669),
    ((-30.0, 0.9, 1.0), 0.0037137076984598521),
    ((-2.5, 0.6, 1.6), 0.32363331703953209),
]


class TestGamma:
    def test_known_values(self):
        assert gamma(1.0) == 1.0
        assert gamma(0.5) == pytest.approx(1.7724538509055159, rel=1e-15)

    @pytest.mark.parametrize("x", [1e-3, 0.3, 1.75, 7.5, 33.3, 120.0, 170.0])
    def test_against_mpmath(self, x):
        ref = float(mpmath.gamma(mpmath.mpf(x)))
        assert gamma(x) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("x", [0.0, -1.0, -0.5])
    def test_domain(self, x):
        with pytest.raises(ValueError):
            gamma(x)

    def test_overflow(self):
        with pytest.raises(OverflowError):
            gamma(172.0)


class TestMittagLeffler:
    def test_exponential(self):
        assert mittag_leffler(-1.0, 1.0, 1.0) == pytest.approx(0.36787944117144233, rel=1e-14)

    def test_origin(self):
        assert mittag_leffler(0.0, 0.75) == 1.0
        assert mittag_leffler(0.0, 0.75, 2.5) == pytest.approx(1.0 / math.gamma(2.5), rel=1e-15)

    def test_erfc_closed_form(self):
        # E_{1/2}(-x) = exp(x^2) erfc(x)
        ref = float(mpmath.e * mpmath.erfc(1))
        assert mittag_leffler(-1.0, 0.5) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize(("args", "ref"), ML_ORACLE)
    def test_series_oracle(self, args, ref):
        z, a, b = args
        assert mittag_leffler(z, a, b) == pytest.approx(ref, rel=1e-9)

    def test_exponential_across_branches(self):
        z = -np.linspace(0.0, 40.0, 81)
        assert np.allclose(mittag_leffler(z, 1.0), np.exp(z), rtol=1e-12, atol=0)

    def test_array_shape(self):
        z = -np.arange(12.0).reshape(3, 4)
        assert mittag_leffler(z, 0.7).shape == (3, 4)

    @pytest.mark.parametrize(
        ("kwargs", "exc"),
        [
            ({"z": -1.0, "alpha": 0.0}, ValueError),
            ({"z": -1.0, "alpha": 1.2}, ValueError),
            ({"z": -1.0, "alpha": 0.5, "beta": 0.0}, ValueError),
            ({"z": 1.0, "alpha": 0.5}, ValueError),
            ({"z": -2e4, "alpha": 0.5}, ValueError),
            ({"z": float("nan"), "alpha": 0.5}, ValueError),
        ],
    )
    def test_rejects(self, kwargs, exc):
        with pytest.raises(exc):
            mittag_leffler(**kwargs)

    def test_z_max_configurable(self):
        assert np.isfinite(mittag_leffler(-2e4, 0.8, z_max=1e5))

    def test_params(self):
        with pytest.raises(ValueError):
            MLParams(alpha=-0.1, beta=1.0)
        assert MLParams(alpha=0.5, beta=1.0).alpha == 0.5

    def test_accuracy_error_type(self):
        assert issubclass(MittagLefflerAccuracyError, ArithmeticError)


class TestBranches:
    def test_switch_inside_overlap(self):
        assert OVERLAP[0] < Z_SWITCH < OVERLAP[1]

    @pytest.mark.parametrize("alpha", [0.75, 0.8, 0.9, 1.0])
    @pytest.mark.parametrize("beta", [0.75, 1.0, 1.75])
    def test_agree_on_overlap(self, alpha, beta):
        z = -np.linspace(*OVERLAP, 41)
        s, _ = ml_series(z, alpha, beta)
        g = ml_asymptotic(z, alpha, beta)
        assert np.max(np.abs(s - g) / np.abs(s)) <= 1e-7

    @pytest.mark.parametrize("alpha", [0.55, 0.6, 0.7])
    def test_asymptotic_matches_oracle_where_series_degrades(self, alpha):
        z = -np.linspace(*OVERLAP, 5)
        got = ml_asymptotic(z, alpha, 1.0)
        mpmath.mp.dps = 80
        ref = [float(mpmath.nsum(lambda k: mpmath.mpf(x) ** k / mpmath.gamma(alpha * k + 1), [0, mpmath.inf])) for x in z]
        mpmath.mp.dps = 15
        assert np.allclose(got, ref, rtol=1e-9, atol=0)

    def test_asymptotic_rejects_origin(self):
        with pytest.raises(ValueError):
            ml_asymptotic(np.array([0.0]), 0.7, 1.0)


@given(
    alpha=st.floats(0.3, 1.0),
    z1=st.floats(0.0, 200.0),
    dz=st.floats(1e-3, 50.0),
)
def test_monotone_in_unit_interval(alpha, z1, dz):
    e1 = mittag_leffler(-z1, alpha)
    e2 = mittag_leffler(-(z1 + dz), alpha)
    assert 0.0 < e2 <= e1 <= 1.0


@given(
    alpha=st.floats(0.3, 1.0),
    beta=st.floats(0.3, 2.0),
    z=st.floats(-60.0, 0.0),
)
def test_recurrence(alpha, beta, z):
    lhs = mittag_leffler(z, alpha, beta)
    rhs = z * mittag_leffler(z, alpha, alpha + beta) + 1.0 / math.gamma(beta)
    scale = max(abs(lhs), 1.0 / math.gamma(beta))
    assert abs(lhs - rhs) <= 1e-8 * scale
