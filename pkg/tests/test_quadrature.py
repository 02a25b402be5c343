import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circspace.errors import EvaluationFailure, InvalidArgument
from circspace.quadrature import (
    ContourSpec,
    chebyshev_derivative,
    chebyshev_fit,
    chebyshev_fit_adaptive,
    contour_derivative,
    contour_derivative_adaptive,
    gauss_legendre,
)


class TestGaussLegendre:
    def test_single_point_is_midpoint(self):
        r = gauss_legendre(1, (0.0, 2.0))
        assert r.nodes[0] == pytest.approx(1.0, abs=1e-15)
        assert r.weights[0] == pytest.approx(2.0, abs=1e-15)

    def test_two_point_rule(self):
        r = gauss_legendre(2, (-1.0, 1.0))
        np.testing.assert_allclose(r.nodes, [-0.5773502691896258, 0.5773502691896258], atol=1e-16)
        np.testing.assert_allclose(r.weights, [1.0, 1.0], atol=1e-15)

    def test_cubic_exactness_with_two_points(self):
        r = gauss_legendre(2, (0.0, 1.0))
        assert abs(r.integrate(lambda x: x**2) - 1 / 3) <= 1e-15

    @pytest.mark.parametrize("n", [0, -3])
    def test_rejects_nonpositive_size(self, n):
        with pytest.raises(InvalidArgument):
            gauss_legendre(n, (0, 1))

    @pytest.mark.parametrize("interval", [(1.0, 1.0), (2.0, 0.0)])
    def test_rejects_empty_interval(self, interval):
        with pytest.raises(InvalidArgument):
            gauss_legendre(4, interval)

    @pytest.mark.parametrize("n", [1, 2, 5, 17, 64, 200, 1000])
    def test_rule_structure(self, n):
        r = gauss_legendre(n, (-0.5, 2.5))
        assert np.all(np.diff(r.nodes) > 0)
        assert np.all(r.weights > 0)
        assert np.all((r.nodes > -0.5) & (r.nodes < 2.5))
        assert abs(r.weights.sum() - 3.0) <= 1e-14 * 3.0

    @pytest.mark.parametrize("n", [3, 8, 20, 50])
    def test_exact_up_to_degree_2n_minus_1(self, n):
        r = gauss_legendre(n, (0.0, 1.0))
        for deg in (2 * n - 2, 2 * n - 1):
            assert r.integrate(lambda x: x**deg) == pytest.approx(1.0 / (deg + 1), rel=1e-13)

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(min_value=2, max_value=200),
        coef=st.lists(st.floats(-1, 1), min_size=4, max_size=4),
        a=st.floats(-3, 3),
        width=st.floats(0.1, 5),
    )
    def test_random_cubics(self, n, coef, a, width):
        b = a + width
        r = gauss_legendre(n, (a, b))
        p = np.polynomial.Polynomial(coef)
        P = p.integ()
        exact = P(b) - P(a)
        scale = max(1.0, float(np.sum(np.abs(coef))) * max(abs(a), abs(b)) ** 3 * width)
        assert abs(r.integrate(p) - exact) <= 1e-13 * scale


class TestChebyshev:
    def test_constant(self):
        c = chebyshev_fit(lambda x: 3.5, (2.0, 7.0), 9).coefficients
        assert c[0] == pytest.approx(3.5, abs=1e-15)
        assert np.max(np.abs(c[1:])) <= 1e-15

    def test_identity_on_reference_interval(self):
        c = chebyshev_fit(lambda x: x, (-1.0, 1.0), 6).coefficients
        np.testing.assert_allclose(c, [0, 1, 0, 0, 0, 0], atol=1e-15)

    def test_sine_accuracy(self):
        f = chebyshev_fit(np.sin, (0.0, 3.0), 30)
        x = np.linspace(0, 3, 2001)
        assert np.max(np.abs(f(x) - np.sin(x))) <= 1e-13

    def test_reproduces_samples_at_nodes(self):
        from circspace.quadrature import chebyshev_points

        f = chebyshev_fit(np.exp, (-2.0, 1.0), 25)
        xs = chebyshev_points(25, (-2.0, 1.0))
        np.testing.assert_allclose(f(xs), np.exp(xs), rtol=1e-12)

    def test_nonfinite_sample_names_node(self):
        with pytest.raises(EvaluationFailure) as info:
            chebyshev_fit(lambda x: 1.0 / x if x > 0 else math.inf, (0.0, 1.0), 8)
        assert info.value.node == 0.0

    def test_needs_two_points(self):
        with pytest.raises(InvalidArgument):
            chebyshev_fit(np.sin, (0, 1), 1)

    def test_second_derivative_of_square(self):
        f = chebyshev_fit(lambda x: x * x, (0.0, 1.0), 8)
        d = chebyshev_derivative(f, 2)
        assert np.max(np.abs(d(np.linspace(0, 1, 50)) - 2.0)) <= 1e-12

    def test_derivative_of_constant_vanishes(self):
        f = chebyshev_fit(lambda x: -1.25, (0.0, 4.0), 6)
        assert np.max(np.abs(chebyshev_derivative(f, 1)(np.linspace(0, 4, 9)))) <= 1e-15

    def test_derivative_of_sine(self):
        f = chebyshev_fit(np.sin, (0.0, 3.0), 40)
        x = np.linspace(0.05, 2.95, 500)
        assert np.max(np.abs(chebyshev_derivative(f, 1)(x) - np.cos(x))) <= 1e-11

    def test_derivative_order_must_be_below_degree(self):
        f = chebyshev_fit(np.sin, (0, 1), 4)
        with pytest.raises(InvalidArgument):
            chebyshev_derivative(f, 3)
        with pytest.raises(InvalidArgument):
            chebyshev_derivative(f, 0)

    @settings(max_examples=40, deadline=None)
    @given(coef=st.lists(st.floats(-2, 2), min_size=2, max_size=10), m_extra=st.integers(0, 6))
    def test_derivative_of_polynomial_is_exact(self, coef, m_extra):
        p = np.polynomial.Polynomial(coef, domain=[0, 2], window=[-1, 1])
        m = len(coef) + 1 + m_extra
        f = chebyshev_fit(p, (0.0, 2.0), m)
        d = chebyshev_derivative(f, 1)
        exact = p.deriv().convert(kind=np.polynomial.Chebyshev, domain=[0, 2]).coef
        got = np.pad(d.coefficients, (0, max(0, len(exact) - len(d.coefficients))))
        np.testing.assert_allclose(got[: len(exact)], exact, atol=1e-12 * (1 + np.sum(np.abs(coef))))
        assert np.max(np.abs(got[len(exact):]), initial=0.0) <= 1e-12 * (1 + np.sum(np.abs(coef)))

    def test_adaptive_fit_converges(self):
        f = chebyshev_fit_adaptive(lambda x: np.exp(-x) * np.cos(5 * x), (0.0, 3.0), tol=1e-14)
        x = np.linspace(0, 3, 777)
        assert np.max(np.abs(f(x) - np.exp(-x) * np.cos(5 * x))) <= 1e-13

    def test_refined_fit_drops_noise_tail(self):
        rng = np.random.default_rng(3)
        noisy = lambda x: np.cos(x) + 1e-15 * rng.standard_normal()
        f = chebyshev_fit_adaptive(noisy, (0.0, 2.0), tol=1e-13, refine=True)
        assert f.degree < 40
        assert abs(chebyshev_derivative(f, 2)(0.0) + 1.0) < 1e-9


class TestContour:
    def test_square_second_derivative(self):
        v = contour_derivative(lambda z: z * z, ContourSpec(0.0, 1.0, 16), 2)
        assert abs(v - 2.0) <= 1e-14

    def test_linear_second_derivative_vanishes(self):
        v = contour_derivative(lambda z: 3 * z - 1j, ContourSpec(0.7 - 0.2j, 0.5, 16), 2)
        assert abs(v) <= 1e-14

    def test_exponential(self):
        v = contour_derivative(np.exp, ContourSpec(1.0, 1.0, 32), 1)
        assert abs(v - math.e) <= 1e-13

    def test_spec_validation(self):
        with pytest.raises(InvalidArgument):
            ContourSpec(0, 0.0, 16)
        with pytest.raises(InvalidArgument):
            ContourSpec(0, 1.0, 6)
        with pytest.raises(InvalidArgument):
            ContourSpec(0, 1.0, 17)

    def test_nonfinite_value(self):
        with np.errstate(all="ignore"), pytest.raises(EvaluationFailure):
            contour_derivative(lambda z: 1 / (z - 1), ContourSpec(0, 1.0, 8), 1)

    @settings(max_examples=30, deadline=None)
    @given(r1=st.floats(0.3, 2.0), r2=st.floats(0.3, 2.0), k=st.integers(1, 4))
    def test_radius_invariance_for_entire_functions(self, r1, r2, k):
        F = lambda z: np.exp(z) * np.cos(2 * z)
        a = contour_derivative(F, ContourSpec(1.0, r1, 96), k)
        b = contour_derivative(F, ContourSpec(1.0, r2, 96), k)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))

    def test_adaptive_doubling(self):
        v, m = contour_derivative_adaptive(np.exp, 3, center=0.5)
        assert abs(v - math.exp(0.5)) <= 1e-13
        assert m >= 32
