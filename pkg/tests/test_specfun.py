import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from nsvt import specfun
from nsvt.errors import ConvergenceError, DomainError
from nsvt.specfun import SeriesAccuracy


class TestLogGamma:
    def test_unit(self):
        assert specfun.log_gamma(1.0) == 0.0

    def test_half(self):
        assert specfun.log_gamma(0.5) == pytest.approx(math.log(math.sqrt(math.pi)), rel=1e-14)

    def test_factorial(self):
        assert specfun.log_gamma(10.0) == pytest.approx(math.log(math.factorial(9)), rel=1e-14)

    def test_array_matches_scalar(self):
        x = np.array([0.3, 2.5, 170.0])
        np.testing.assert_allclose(specfun.log_gamma(x), [math.lgamma(v) for v in x], rtol=1e-14)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            specfun.log_gamma(bad)


class TestHyp2F1:
    def test_zero_argument(self):
        assert specfun.gauss_2f1(2, 3, 5, 0.0)[0] == 1.0

    def test_log_identity(self):
        value, log_value = specfun.gauss_2f1(1, 1, 2, 0.5)
        assert value == pytest.approx(-math.log(0.5) / 0.5, rel=1e-12)
        assert log_value == pytest.approx(math.log(value), rel=1e-14)

    def test_power_identity(self):
        # 2F1(a, b; b; z) = (1 - z)^(-a)
        value, _ = specfun.gauss_2f1(2.5, 4, 4, 0.3)
        assert value == pytest.approx(0.7**-2.5, rel=1e-12)

    def test_listed_decimal_value_is_not_the_identity(self):
        # The quoted decimal 2.4397501... does not equal 0.7^-2.5 = 2.43924...;
        # the identity wins and the decimal is a typo.
        value, _ = specfun.gauss_2f1(2.5, 4, 4, 0.3)
        assert abs(value - 2.4397501) > 1e-4
        assert value == pytest.approx(2.4392420599, abs=1e-9)

    @pytest.mark.parametrize("z", [0.91, 0.99, 0.999999])
    def test_euler_branch_matches_mpmath(self, z):
        a, b, c = 3.0, 3.5, 2.5
        expected = float(mpmath.log(mpmath.hyp2f1(a, b, c, z)))
        la, sg = specfun.log_hyp2f1(a, b, c, z)
        assert sg == 1.0
        assert float(la) == pytest.approx(expected, rel=1e-11)

    def test_negative_partial_sum_falls_back_to_raw_series(self):
        # c - a < 0 makes the Euler-transformed series alternate in sign.
        a, b, c = 4.0, 0.5, 1.5
        z = 0.95
        expected = float(mpmath.hyp2f1(a, b, c, z))
        value, _ = specfun.gauss_2f1(a, b, c, z)
        assert value == pytest.approx(expected, rel=1e-9)

    def test_log_form_survives_overflow(self):
        la, _ = specfun.log_hyp2f1(400.0, 400.0, 2.0, 0.9999)
        expected = float(mpmath.log(mpmath.hyp2f1(400, 400, 2, 0.9999)))
        assert np.isfinite(la)
        assert float(la) == pytest.approx(expected, rel=1e-9)

    def test_vectorized_shape(self):
        z = np.linspace(0, 0.95, 12).reshape(3, 4)
        la, sg = specfun.log_hyp2f1(1.5, 2.0, 3.0, z)
        assert la.shape == (3, 4) and sg.shape == (3, 4)
        np.testing.assert_allclose(np.exp(la), special.hyp2f1(1.5, 2.0, 3.0, z), rtol=1e-12)

    @pytest.mark.parametrize("z", [1.0, 1.2, -0.1, float("nan")])
    def test_domain(self, z):
        with pytest.raises(DomainError):
            specfun.log_hyp2f1(1, 1, 2, z)

    def test_nonpositive_c(self):
        with pytest.raises(DomainError):
            specfun.log_hyp2f1(1, 1, 0, 0.5)

    def test_term_cap(self):
        with pytest.raises(ConvergenceError) as info:
            specfun.log_hyp2f1(1, 1, 2, 0.8, SeriesAccuracy(1e-12, 5))
        assert info.value.partial is not None and info.value.partial > 1

    @given(
        a=st.floats(0.2, 8),
        b=st.floats(0.2, 8),
        c=st.floats(0.3, 8),
        z=st.floats(0.0, 0.97),
    )
    def test_against_mpmath(self, a, b, c, z):
        expected = mpmath.hyp2f1(a, b, c, z)
        la, sg = specfun.log_hyp2f1(a, b, c, z)
        got = float(sg) * math.exp(float(la))
        assert got == pytest.approx(float(expected), rel=1e-9, abs=1e-300)

    @given(a=st.floats(0.2, 6), b=st.floats(0.2, 6), c=st.floats(0.3, 6), z=st.floats(0.0, 0.95))
    def test_symmetric_in_numerator_parameters(self, a, b, c, z):
        l1, _ = specfun.log_hyp2f1(a, b, c, z)
        l2, _ = specfun.log_hyp2f1(b, a, c, z)
        assert float(l1) == pytest.approx(float(l2), rel=1e-11, abs=1e-13)


class TestHyp1F1:
    def test_zero_argument(self):
        assert specfun.kummer_1f1(3, 7, 0.0) == 1.0

    def test_exponential_identity(self):
        assert specfun.kummer_1f1(2, 2, 1.5) == pytest.approx(math.exp(1.5), rel=1e-13)

    def test_expm1_identity(self):
        assert specfun.kummer_1f1(1, 2, 1.0) == pytest.approx(math.e - 1, rel=1e-13)

    def test_large_argument_in_logs(self):
        la, _ = specfun.log_hyp1f1(0.5, 1.5, 900.0)
        assert float(la) == pytest.approx(float(mpmath.log(mpmath.hyp1f1(0.5, 1.5, 900))), rel=1e-11)

    @given(a=st.floats(0.1, 10), b=st.floats(0.1, 10), z=st.floats(0.0, 30))
    def test_against_scipy(self, a, b, z):
        assert specfun.kummer_1f1(a, b, z) == pytest.approx(special.hyp1f1(a, b, z), rel=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            specfun.log_hyp1f1(1, 0, 1.0)
        with pytest.raises(DomainError):
            specfun.log_hyp1f1(1, 1, -1.0)


class TestBesselI:
    def test_zero(self):
        assert specfun.bessel_i(0, 0.0) == 1.0

    def test_half_integer_closed_form(self):
        expected = math.sqrt(2 / math.pi) * math.sinh(1.0)
        assert specfun.bessel_i(0.5, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_integral_representation(self):
        # I_n(x) = (1/pi) int_0^pi exp(x cos t) cos(n t) dt for integer n
        value, _ = integrate.quad(lambda t: math.exp(3.0 * math.cos(t)) * math.cos(2 * t), 0, math.pi,
                                  epsabs=0, epsrel=1e-13, limit=200)
        assert specfun.bessel_i(2.0, 3.0) == pytest.approx(value / math.pi, rel=1e-11)

    @pytest.mark.parametrize("nu", [-0.5, 0.0, 1.5, 40.0])
    @pytest.mark.parametrize("x", [49.9, 50.0, 2000.0, 4e5])
    def test_large_argument_in_logs(self, nu, x):
        expected = float(mpmath.log(mpmath.besseli(nu, x)))
        assert float(specfun.log_bessel_i(nu, x)) == pytest.approx(expected, rel=1e-13)

    def test_beyond_scaled_range(self):
        # scipy's scaled function gives up here; the asymptotic branch takes over
        x = 4e10
        mpmath.mp.dps = 30
        try:
            expected = float(mpmath.log(mpmath.besseli(2.0, x)))
        finally:
            mpmath.mp.dps = 15
        assert float(specfun.log_bessel_i(2.0, x)) == pytest.approx(expected, rel=1e-15)

    @given(nu=st.floats(-0.9, 10), x=st.floats(1e-6, 200))
    def test_against_scipy(self, nu, x):
        assert specfun.bessel_i(nu, x) == pytest.approx(special.iv(nu, x), rel=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            specfun.log_bessel_i(-1.0, 1.0)
        with pytest.raises(DomainError):
            specfun.log_bessel_i(1.0, -1.0)


class TestLaguerre:
    def test_degree_zero(self):
        assert specfun.laguerre(0, 2.3, 5.0) == 1.0

    def test_degree_one(self):
        assert specfun.laguerre(1, 2.0, 0.5) == pytest.approx(2.5)

    def test_rodrigues_formula(self):
        # L_n^a(x) = x^-a e^x / n! d^n/dx^n (e^-x x^(n+a)), differentiated symbolically
        n, a, x = 2, 1.0, 1.0
        f = lambda s: mpmath.exp(-s) * s ** (n + a)  # noqa: E731
        expected = x**-a * math.exp(x) / math.factorial(n) * float(mpmath.diff(f, x, n))
        assert specfun.laguerre(n, a, x) == pytest.approx(expected, rel=1e-12)

    @given(n=st.integers(0, 12), a=st.floats(-0.9, 6), x=st.floats(-20, 20))
    def test_against_scipy(self, n, a, x):
        expected = special.eval_genlaguerre(n, a, x)
        assert specfun.laguerre(n, a, x) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_negative_degree(self):
        with pytest.raises(DomainError):
            specfun.laguerre(-1, 1.0, 1.0)


class TestNegBin:
    def test_zero_count(self):
        assert specfun.negbin_pmf(0, 2.0, 0.5) == pytest.approx(0.25, rel=1e-14)

    def test_sums_to_one_and_mean(self):
        phi, r = 3.0, 0.4
        u = np.arange(400)
        pmf = specfun.negbin_pmf(u, phi, r)
        assert math.fsum(pmf) == pytest.approx(1.0, abs=1e-10)
        assert math.fsum(u * pmf) == pytest.approx(phi * r / (1 - r), rel=1e-10)

    @given(phi=st.floats(0.1, 20), r=st.floats(0.01, 0.95), u=st.integers(0, 200))
    def test_against_scipy(self, phi, r, u):
        from scipy import stats

        expected = stats.nbinom.logpmf(u, phi, 1 - r)
        assert specfun.log_negbin_pmf(u, phi, r) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            specfun.negbin_pmf(0, 0.0, 0.5)
        with pytest.raises(DomainError):
            specfun.negbin_pmf(0, 1.0, 1.0)


def test_accuracy_validation():
    with pytest.raises(DomainError):
        SeriesAccuracy(rel_tol=0)
    with pytest.raises(DomainError):
        SeriesAccuracy(max_terms=0)
