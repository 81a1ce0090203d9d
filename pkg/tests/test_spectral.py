import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad
from scipy.optimize import bisect

from sepalpha.errors import DomainError
from sepalpha.spectral import (
    DiscreteSpectrum,
    discrete_kernel,
    discrete_kernel_matrix,
    expand,
    heat_crank_nicolson,
    kernel_time_integrals,
    psi,
    regime_for,
    robin_defect,
    robin_roots,
    semigroup_apply,
)
from sepalpha.walks import transition_kernel

from conftest import make_params


def test_regime_mapping():
    assert regime_for(-3.0) == "dirichlet"
    assert regime_for(0.99) == "dirichlet"
    assert regime_for(1.0) == "robin"
    assert regime_for(1.01) == "neumann"


class TestRobinRoots:
    def test_neumann_limit(self):
        b = robin_roots(1e-6, 1e-6, 6)
        for k in range(1, 6):
            assert abs(b[k] - k * math.pi) < 1e-3

    def test_printed_first_root_pinned_by_bisection(self):
        b1 = robin_roots(1.0, 1.0, 1, printed=True)[0]
        ref = bisect(lambda x: math.tan(x) - 2 * x / (x**2 + 1), 0.7, 0.8, xtol=1e-14)
        assert 0.7 < b1 < 0.8
        assert abs(b1 - ref) < 1e-10
        assert b1 == pytest.approx(0.767, abs=2e-3)

    def test_sturm_liouville_roots(self):
        # the eigenproblem f'' = -b^2 f, f'(0) = l f(0), f'(1) = -r f(1)
        ll, lr = 0.4, 0.9
        for b in robin_roots(ll, lr, 8):
            f = lambda u: ll / b * np.sin(b * u) + np.cos(b * u)
            df = lambda u: ll * np.cos(b * u) - b * np.sin(b * u)
            assert abs(df(0.0) - ll * f(0.0)) < 1e-12
            assert abs(df(1.0) + lr * f(1.0)) < 1e-10

    @pytest.mark.parametrize("printed", [False, True])
    def test_roots_are_simple(self, printed):
        ll, lr = 0.6, 0.8
        b = robin_roots(ll, lr, 10, printed=printed)
        assert np.all(np.diff(b) > 0)
        h = 1e-6
        for x in b:
            assert abs(robin_defect(x, ll, lr, printed)) < 1e-8 * max(1, abs(math.tan(x)))
            slope = (robin_defect(x + h, ll, lr, printed) - robin_defect(x - h, ll, lr, printed)) / (2 * h)
            assert abs(slope) > 1e-3

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            robin_roots(1.0, 1.0, 0)
        with pytest.raises(DomainError):
            robin_roots(0.0, 1.0, 3)


class TestSemigroup:
    def test_time_zero(self):
        p = make_params(theta=0.0)
        u = np.linspace(0, 1, 11)
        assert np.array_equal(semigroup_apply(lambda v: v**2, 0.0, p, grid=u), u**2)

    def test_dirichlet_single_mode(self):
        p = make_params(alpha=2, theta=0.0)
        u = np.linspace(0, 1, 101)
        out = semigroup_apply(lambda v: np.sin(np.pi * v), 0.1, p, grid=u)
        assert np.abs(out - math.exp(-0.2 * math.pi**2) * np.sin(np.pi * u)).max() < 1e-12
        assert math.exp(-0.2 * math.pi**2) == pytest.approx(0.1389, abs=1e-4)

    def test_neumann_single_mode(self):
        p = make_params(alpha=3, theta=2.0)
        u = np.linspace(0, 1, 101)
        out = semigroup_apply(lambda v: np.cos(np.pi * v), 0.03, p, grid=u)
        assert np.abs(out - math.exp(-(math.pi**2) * 3 * 0.03) * np.cos(np.pi * u)).max() < 1e-12

    @pytest.mark.parametrize("theta", [0.0, 1.0, 2.0])
    def test_semigroup_property(self, theta):
        p = make_params(alpha=2, theta=theta, lambda_l=0.5, lambda_r=0.8)
        f = lambda v: v * (1 - v) ** 2 + 0.3 * np.cos(3 * v)
        e = expand(f, regime_for(theta), 2, 64, 0.5, 0.8)
        u = np.linspace(0, 1, 51)
        ts = e.evolve(0.01)
        twice = expand(lambda v: ts.evaluate(v), regime_for(theta), 2, 64, 0.5, 0.8).evaluate(u, 0.02)
        assert np.abs(twice - e.evaluate(u, 0.03)).max() < 1e-6

    @pytest.mark.parametrize("theta", [0.0, 1.0, 2.0])
    def test_agrees_with_finite_differences(self, theta):
        p = make_params(alpha=2, theta=theta, lambda_l=0.7, lambda_r=0.4)
        f = lambda v: np.sin(np.pi * v) ** 2 * (1 + v) if theta < 1 else 1 + v**2 * (1 - v) ** 2 + 0.2 * np.cos(2 * np.pi * v)
        u = np.linspace(0, 1, 513)
        ref = heat_crank_nicolson(f(u), 0.02, p, steps=2000)
        out = semigroup_apply(f, 0.02, p, grid=u, K=64)
        assert np.abs(out - ref).max() < 1e-3

    @pytest.mark.parametrize("theta", [0.3, 1.0, 1.7])
    def test_preserves_boundary_conditions(self, theta):
        ll, lr = 0.5, 0.9
        p = make_params(alpha=2, theta=theta, lambda_l=ll, lambda_r=lr)
        f = lambda v: np.exp(-((v - 0.4) ** 2) * 20)
        u = np.array([0.0, 1.0])
        val = semigroup_apply(f, 0.05, p, grid=u)
        der = semigroup_apply(f, 0.05, p, grid=u, deriv=1)
        if theta < 1:
            assert np.abs(val).max() < 1e-12
        elif theta == 1:
            assert abs(der[0] - ll * val[0]) < 1e-10
            assert abs(der[1] + lr * val[1]) < 1e-10
        else:
            assert np.abs(der).max() < 1e-10

    def test_negative_time(self):
        with pytest.raises(DomainError):
            semigroup_apply(np.sin, -1.0, make_params())


class TestDiscreteKernel:
    def test_time_zero_is_identity(self):
        assert np.allclose(discrete_kernel_matrix(0.0, 7, 2), np.eye(6), atol=1e-14)

    def test_eigen_data(self):
        sp = DiscreteSpectrum.build(4)
        assert sp.eigenvalues[0] == pytest.approx(64 * math.sin(math.pi / 8) ** 2)
        assert sp.eigenvalues[0] == pytest.approx(9.3726, abs=1e-4)
        assert sp.vectors[0, 1] == pytest.approx(math.sqrt(0.5))

    @given(st.integers(1, 9), st.integers(1, 9), st.floats(0.0, 0.2), st.integers(1, 3))
    def test_matches_ode_kernel(self, x, y, t, alpha):
        p = make_params(N=10, alpha=alpha, theta=0.0)
        assert abs(discrete_kernel(x, y, t, 10, alpha) - transition_kernel(x, y, t, p)) < 1e-9

    def test_sub_stochastic(self):
        M = discrete_kernel_matrix(0.01, 12, 2)
        assert M.min() > -1e-14 and M.sum(axis=1).max() <= 1 + 1e-12


class TestPsi:
    def test_values(self):
        assert psi(0.0) == 0.5
        assert psi(1e-8) == pytest.approx(0.5)
        assert psi(1.0) == pytest.approx(math.exp(-1), rel=1e-14)
        assert psi(1e6) * 1e6 == pytest.approx(1.0, rel=1e-5)
        with pytest.raises(DomainError):
            psi(-1.0)

    @given(st.floats(0, 50))
    def test_continuous_across_branch(self, u):
        assert psi(u) == pytest.approx(psi(u * (1 + 1e-9)), rel=1e-6)
        assert 0 < psi(u) <= 0.5


class TestKernelIntegrals:
    def test_zero_time(self):
        k = kernel_time_integrals([1, 2, 3], 0.0, 16, 2)
        assert (k.diagonal, k.boundary, k.cross) == (0.0, 0.0, 0.0)

    def test_against_quadrature(self):
        N, alpha, t = 32, 2, 0.01
        W = [1, 2, 3]

        def I(x, y):
            return dblquad(lambda v, s: discrete_kernel(x, y, s - v, N, alpha), 0, t, 0, lambda s: s, epsabs=1e-13)[0]

        k = kernel_time_integrals(W, t, N, alpha)
        diag = sum(I(x, x) for x in W)
        bnd = sum(I(x, 1) + I(x, N - 1) for x in W)
        cross = sum(I(x, y) for x in W for y in W if x != y)
        assert abs(k.diagonal - diag) < 1e-6
        assert abs(k.boundary - bnd) < 1e-6
        assert abs(k.cross - cross) < 1e-6

    def test_diagonal_scaling(self):
        t, eps = 0.5, 0.1
        C = []
        for N in (64, 128, 256):
            W = range(1, int(eps * N) + 1)
            C.append(kernel_time_integrals(W, t, N, 2).diagonal / (t * eps))
        assert max(C) / min(C) < 2.0

    def test_window_checked(self):
        with pytest.raises(DomainError):
            kernel_time_integrals([0, 1], 0.1, 8, 2)
