import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gp_arclength.kernels import KernelSpec
from gp_arclength.quadrature import (QuadratureSpec, gauss_legendre, integrate_1d,
                                     integrate_2d, nodes_on, triangle_nodes)


class TestGaussLegendre:
    @pytest.mark.parametrize("n", [1, 2, 5, 16, 128, 1024])
    def test_against_numpy(self, n):
        x, w = gauss_legendre(n)
        xr, wr = np.polynomial.legendre.leggauss(n)
        np.testing.assert_allclose(x, xr, atol=1e-14)
        np.testing.assert_allclose(w, wr, atol=1e-14)

    @pytest.mark.parametrize("n", [2, 7, 33, 128])
    def test_symmetry(self, n):
        x, w = gauss_legendre(n)
        np.testing.assert_array_equal(x, -x[::-1])
        np.testing.assert_array_equal(w, w[::-1])

    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_degree_exactness(self, n):
        x, w = gauss_legendre(n)
        exact = lambda k: 2.0 / (k + 1) if k % 2 == 0 else 0.0
        # degree 2n - 1 is exact
        for k in range(2 * n):
            assert np.dot(w, x**k) == pytest.approx(exact(k), abs=1e-13)
        # degree 2n misses by the classical remainder 2^(2n+1) (n!)^4 / ((2n+1) ((2n)!)^2)
        remainder = 2.0 ** (2 * n + 1) * math.factorial(n) ** 4 / (
            (2 * n + 1) * math.factorial(2 * n) ** 2)
        assert exact(2 * n) - np.dot(w, x ** (2 * n)) == pytest.approx(remainder, rel=1e-8)
        # odd degree 2n + 1 vanishes by symmetry, so test a shifted monomial
        xs, ws = nodes_on(0.0, 1.0, n)
        assert abs(np.dot(ws, xs ** (2 * n + 1)) - 1.0 / (2 * n + 2)) > 1e-10

    def test_cached_read_only(self):
        x, _ = gauss_legendre(16)
        assert gauss_legendre(16)[0] is x
        with pytest.raises(ValueError):
            x[0] = 0.0


class TestIntegrate1D:
    def test_polynomial(self):
        res = integrate_1d(lambda x: x**2, 0.0, 1.0)
        assert res.value == pytest.approx(1 / 3, rel=1e-15)
        assert res.converged

    def test_sin(self):
        value, err = integrate_1d(np.sin, 0.0, math.pi)
        assert value == pytest.approx(2.0, abs=1e-12)
        assert err < 1e-12

    def test_nonconvergence_flagged(self):
        spec = QuadratureSpec(nodes_per_axis=4, refinements=2)
        res = integrate_1d(lambda x: np.sqrt(np.abs(x - 0.3)), 0.0, 1.0, spec)
        assert not res.converged
        assert len(res.trace) == 3 and res.nodes == 16

    @given(st.floats(-5, 5), st.floats(0.1, 5))
    def test_gaussian_integral(self, a, width):
        b = a + width
        val = integrate_1d(lambda x: np.exp(-x * x), a, b).value
        ref = 0.5 * math.sqrt(math.pi) * (math.erf(b) - math.erf(a))
        assert val == pytest.approx(ref, abs=1e-12)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            QuadratureSpec(nodes_per_axis=1)
        with pytest.raises(ValueError):
            QuadratureSpec(abs_tol=0.0)


class TestIntegrate2D:
    def test_unit_square(self):
        res = integrate_2d(lambda x, y: np.ones_like(x), (0.0, 1.0, 0.0, 1.0))
        assert res.value == pytest.approx(1.0, rel=1e-15)

    def test_rho_zero_power(self):
        T = 2.5
        k = KernelSpec("se")
        res = integrate_2d(lambda x, y: k.derivative_correlation(x - y) ** 0, (0, T, 0, T))
        assert res.value == pytest.approx(T * T, rel=1e-14)

    @pytest.mark.parametrize("T", [0.5, 1.0, 3.0])
    def test_stationary_reduction(self, T):
        k = KernelSpec("se", 1.0, 0.7)
        full = integrate_2d(lambda x, y: k.derivative_correlation(x - y), (0, T, 0, T),
                            QuadratureSpec(nodes_per_axis=128)).value
        reduced = integrate_1d(lambda tau: 2.0 * (T - tau) * k.derivative_correlation(tau),
                               0.0, T).value
        assert full == pytest.approx(reduced, rel=1e-10)

    def test_kinked_integrand_diagonal_split(self):
        # |x - y| has a kink on the diagonal; the split rule is exact for it
        f = lambda x, y: np.abs(x - y)
        split = integrate_2d(f, (0, 1, 0, 1), QuadratureSpec(nodes_per_axis=8), split_diagonal=True)
        plain = integrate_2d(f, (0, 1, 0, 1), QuadratureSpec(nodes_per_axis=8))
        assert split.value == pytest.approx(1 / 3, rel=1e-14)
        assert abs(plain.value - 1 / 3) > 1e-6

    def test_triangle_nodes(self):
        X, Y, W = triangle_nodes(0.0, 2.0, 16)
        assert np.all(Y <= X + 1e-15)
        assert np.sum(W) == pytest.approx(2.0, rel=1e-14)      # area of the triangle
        assert np.sum(W * X * Y) == pytest.approx(2.0, rel=1e-13)   # int_0^2 int_0^x x y
