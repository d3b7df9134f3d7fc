import math

import numpy as np
import pytest

from mobimeta.quadrature import (
    DEFAULT_SPEC,
    QuadratureError,
    QuadratureSpec,
    integrate_1d,
    integrate_nd,
    lambert_w0,
    lambert_w0_exp,
    upper_incomplete_gamma,
)


def bisect_lambert(x, lo=0.0, hi=10.0):
    """Independent oracle: bisection on w*exp(w) - x = 0."""
    f = lambda w: w * math.exp(w) - x
    while f(hi) < 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestLambertW:
    def test_trivial_points(self):
        assert lambert_w0(0.0) == pytest.approx(0.0, abs=1e-15)
        assert lambert_w0(math.e) == pytest.approx(1.0, rel=1e-14)

    def test_unity_against_bisection(self):
        # bisection oracle gives 0.5671432904097838
        assert lambert_w0(1.0) == pytest.approx(bisect_lambert(1.0), abs=1e-12)
        assert lambert_w0(1.0) == pytest.approx(0.5671432904, abs=1e-9)

    def test_round_trip_log_grid(self):
        x = np.geomspace(1e-6, 1e6, 1000)
        w = lambert_w0(x)
        assert np.all(np.abs(w * np.exp(w) - x) / x <= 1e-12)

    def test_branch_point(self):
        assert lambert_w0(-math.exp(-1.0)) == pytest.approx(-1.0, abs=1e-7)
        with pytest.raises(ValueError):
            lambert_w0(-0.5)

    def test_matches_scipy(self):
        from scipy.special import lambertw

        x = np.geomspace(1e-3, 1e3, 50)
        assert np.allclose(lambert_w0(x), lambertw(x).real, rtol=1e-13)

    def test_log_space_variant(self):
        # moderate y agrees with the direct branch
        for y in (-3.0, 0.0, 1.0, 5.0, 50.0):
            assert lambert_w0_exp(y) == pytest.approx(lambert_w0(math.exp(y)), rel=1e-13)
        # huge y, where exp(y) overflows: check w + log w = y instead
        for y in (800.0, 1e4, 1e8):
            w = lambert_w0_exp(y)
            assert w + math.log(w) == pytest.approx(y, rel=1e-14)


class TestUpperIncompleteGamma:
    def test_exact_antiderivative_a1(self):
        for z in (0.1, 1.0, 5.0):
            assert upper_incomplete_gamma(1.0, z) == pytest.approx(math.exp(-z), rel=1e-13)

    def test_complete_gamma_limit(self):
        assert upper_incomplete_gamma(2.5, 1e-12) == pytest.approx(
            math.gamma(2.5), rel=1e-9
        )

    def test_negative_a_against_quadrature(self):
        # independent oracle: adaptive quadrature of the defining integral
        val = integrate_1d(lambda t: t ** (-2.0) * math.exp(-t), 1.0, math.inf)
        assert upper_incomplete_gamma(-1.0, 1.0) == pytest.approx(val, abs=1e-10)
        assert upper_incomplete_gamma(-1.0, 1.0) == pytest.approx(0.148496, abs=1e-5)

    @pytest.mark.parametrize("a", [-1.5, -1.0, -0.5, 0.5, 1.5])
    @pytest.mark.parametrize("z", [0.1, 1.0, 10.0])
    def test_recurrence_consistency(self, a, z):
        lhs = upper_incomplete_gamma(a + 1.0, z)
        rhs = a * upper_incomplete_gamma(a, z) + z**a * math.exp(-z)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-300)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            upper_incomplete_gamma(-1.0, 0.0)


class TestIntegrate1D:
    def test_exponential_tail(self):
        assert integrate_1d(lambda t: math.exp(-t), 0.0, math.inf) == pytest.approx(
            1.0, abs=1e-10
        )

    def test_half_angle_identity(self):
        val = integrate_1d(lambda t: math.sqrt(2.0 - 2.0 * math.cos(t)), 0.0, math.pi)
        assert val == pytest.approx(4.0, abs=1e-10)

    def test_rayleigh_normalization(self):
        lam = 1.0
        val = integrate_1d(
            lambda r: 2 * math.pi * lam * r * math.exp(-lam * math.pi * r * r),
            0.0,
            math.inf,
        )
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_exponential_transform(self):
        spec = QuadratureSpec(transform="exponential")
        val = integrate_1d(lambda t: math.exp(-t * t), 0.0, math.inf, spec)
        assert val == pytest.approx(math.sqrt(math.pi) / 2.0, abs=1e-10)

    def test_deterministic(self):
        f = lambda t: math.exp(-0.3 * t) * math.sin(t) ** 2
        a = integrate_1d(f, 0.0, math.inf)
        b = integrate_1d(f, 0.0, math.inf)
        assert a == b  # bit-identical

    def test_nonconvergence_raises(self):
        rng = np.random.default_rng(0)
        noisy = lambda t: float(rng.standard_normal())
        with pytest.raises(QuadratureError):
            integrate_1d(noisy, 0.0, 1.0, QuadratureSpec(abs_tol=1e-12, rel_tol=1e-12))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(abs_tol=0.0)
        with pytest.raises(ValueError):
            QuadratureSpec(max_depth=0)
        with pytest.raises(ValueError):
            QuadratureSpec(transform="fourier")


class TestIntegrateND:
    def test_unit_square(self):
        assert integrate_nd(lambda x, y: 1.0, [(0, 1), (0, 1)]) == pytest.approx(1.0, abs=1e-8)

    def test_product_xy(self):
        assert integrate_nd(lambda x, y: x * y, [(0, 1), (0, 1)]) == pytest.approx(
            0.25, abs=1e-8
        )

    def test_gaussian_product_matches_1d_composition(self):
        # oracle: compose integrate_1d twice
        g = lambda t: math.exp(-t * t)
        one_d = integrate_1d(g, 0.0, math.inf)
        two_d = integrate_nd(
            lambda x, y: g(x) * g(y), [(0.0, math.inf), (0.0, math.inf)]
        )
        assert two_d == pytest.approx(one_d * one_d, abs=1e-8)

    def test_callable_bounds(self):
        # area of the triangle 0 <= y <= x <= 1
        val = integrate_nd(lambda x, y: 1.0, [(0.0, 1.0), (0.0, lambda x: x)])
        assert val == pytest.approx(0.5, abs=1e-8)

    def test_dimension_guard(self):
        with pytest.raises(ValueError):
            integrate_nd(lambda *a: 1.0, [(0, 1)] * 5)
