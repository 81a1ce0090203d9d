import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from sepalpha.errors import DomainError, PreconditionError
from sepalpha.lattice import TriangleLattice
from sepalpha.model import ModelParams
from sepalpha.moments import CorrelationField, DensitySolver, correlation_source, evolve_correlation
from sepalpha.spectral import discrete_kernel_matrix
from sepalpha.walks import (
    ReflectedWalk,
    kernel_domination_check,
    kernel_matrix,
    max_principle_elliptic,
    max_principle_markov,
    max_principle_parabolic,
    occupation_closed_form,
    occupation_solve,
    parabolic_path,
    potential_field,
    reflected_occupation,
    reflected_occupation_mc,
    transition_kernel,
)

from conftest import make_params


def random_samples(rng, N, n, t_max=1.0):
    return [(int(rng.integers(1, N)), int(rng.integers(1, N)), float(rng.uniform(1e-3, t_max))) for _ in range(n)]


class TestOccupation:
    def test_closed_form_examples(self):
        T = occupation_closed_form(4, 1)
        assert T.at(1, 3) == pytest.approx(1 / 48, abs=1e-15)
        assert T.at(2, 2) == pytest.approx(1 / 24, abs=1e-15)
        assert T.at(0, 2) == 0.0 and T.at(1, 4) == 0.0

    @pytest.mark.parametrize("N,alpha", [(4, 1), (4, 2), (9, 1), (12, 2), (20, 3)])
    def test_solve_matches_closed_form(self, N, alpha):
        p = make_params(N=N, alpha=alpha, theta=0.0)
        assert np.abs(occupation_solve(p).values - occupation_closed_form(N, alpha).values).max() < 1e-12

    @pytest.mark.parametrize("theta", [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0])
    def test_lemma_scaling(self, theta):
        """max T <= C (1/N + N^theta / N^k) with k = 3 for theta > 0 and 1 otherwise."""
        k = 3 if theta > 0 else 1
        C = []
        for N in (16, 32, 64):
            p = make_params(N=N, alpha=2, theta=theta, lambda_l=0.7, lambda_r=0.9)
            C.append(occupation_solve(p).values.max() / (1 / N + N**theta / N**k))
        assert max(C) / min(C) < 2.0, C

    @given(st.integers(4, 20), st.integers(1, 3), st.floats(-2, 3), st.floats(0.05, 1), st.floats(0.05, 1))
    def test_nonnegative_and_zero_on_boundary(self, N, alpha, theta, ll, lr):
        p = ModelParams(alpha, ll, lr, 0.5 * alpha, 0.5 * alpha, theta, N)
        sol = occupation_solve(p)
        assert sol.values.min() >= -1e-15
        M = sol.matrix()
        assert np.all(M[0] == 0) and np.all(M[:, N] == 0)

    @given(st.floats(-1.5, 2.5), st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.floats(1.05, 3.0))
    def test_monotone_in_boundary_rates(self, theta, ll, lr, factor):
        p = make_params(N=10, alpha=2, theta=theta, lambda_l=ll, lambda_r=lr)
        q = p.replace(lambda_l=min(1.0, ll * factor), lambda_r=min(1.0, lr * factor))
        assert np.all(occupation_solve(q).values <= occupation_solve(p).values + 1e-14)

    def test_potential_field(self):
        p = make_params(N=8, theta=0.5, lambda_l=0.3, lambda_r=0.6)
        lat = TriangleLattice.for_params(p)
        V = potential_field(p, lat)
        assert V.max() <= 0
        x, y = lat.points.T
        assert np.all(V[(x != 1) & (y != 7)] == 0)


class TestReflected:
    def test_zero_time(self):
        p = make_params(N=6)
        assert reflected_occupation((2, 3), 0.0, p) == 0.0

    def test_bad_start(self):
        with pytest.raises(DomainError):
            reflected_occupation((0, 2), 0.1, make_params(N=6))

    @pytest.mark.parametrize("theta", [0.0, 2.0])
    def test_scaling(self, theta):
        for t in (0.1, 1.0):
            C = []
            for N in (16, 32, 64):
                p = make_params(N=N, theta=theta)
                C.append(ReflectedWalk(p).occupation(t).max() * N / (t + 1))
            assert max(C) / min(C) < 2.0

    def test_matches_monte_carlo(self):
        p = make_params(N=4, alpha=2, theta=0.5, lambda_l=0.6)
        walk = ReflectedWalk(p)
        for start in [(1, 2), (2, 2), (1, 3)]:
            exact = reflected_occupation(start, 0.2, p, walk)
            mean, se = reflected_occupation_mc(start, 0.2, p, 100_000, seed=7)
            assert abs(mean - exact) < 4 * se

    @pytest.mark.parametrize("N", [16, 32])
    def test_feynman_kac_bound(self, N):
        p = make_params(N=N, alpha=2, theta=2.0, lambda_l=0.7, lambda_r=0.9)
        s = DensitySolver(np.full(N - 1, 1.0), p)
        t = 0.2
        phi = evolve_correlation(CorrelationField.zeros(p), s, t, p)
        gmax = max(np.abs(correlation_source(s(v), p)).max() for v in np.linspace(0, t, 201))
        occ = ReflectedWalk(p).occupation(t)
        assert np.all(np.abs(phi.values) <= gmax * occ + 1e-14)


class TestKernel:
    def test_identity_at_zero(self):
        assert np.allclose(kernel_matrix(0.0, make_params(N=7, theta=1.3)), np.eye(6))

    @given(st.integers(1, 11), st.integers(1, 11), st.floats(0, 0.3), st.floats(-2, 3))
    def test_sub_stochastic(self, x, y, t, theta):
        p = make_params(N=12, theta=theta, lambda_l=0.5)
        K = kernel_matrix(t, p)
        assert K.min() >= 0 and K.sum(axis=1).max() <= 1 + 1e-10
        assert transition_kernel(x, y, t, p) == K[x - 1, y - 1]

    def test_fast_reservoirs_absorb(self):
        N = 16
        p = make_params(N=N, theta=-4.0)
        K = kernel_matrix(1.0 / N, p)
        assert K[0].sum() < 1e-3 and K[N - 2].sum() < 1e-3

    def test_bad_site(self):
        with pytest.raises(DomainError):
            transition_kernel(0, 2, 0.1, make_params(N=5))


class TestDomination:
    @pytest.mark.parametrize("alpha", [1, 2])
    def test_equality_case(self, alpha, rng):
        p = make_params(N=16, alpha=alpha, theta=0.0)
        rep = kernel_domination_check(random_samples(rng, 16, 50), p)
        assert rep.passed and abs(rep.min_margin) < 1e-12

    def test_fast_reservoirs(self, rng):
        p = make_params(N=32, alpha=2, theta=-1.0, lambda_l=0.6, lambda_r=0.8)
        rep = kernel_domination_check(random_samples(rng, 32, 200), p)
        assert rep.passed and rep.min_margin >= -1e-12

    def test_slow_reservoirs(self, rng):
        p = make_params(N=32, alpha=2, theta=2.0, lambda_l=0.6, lambda_r=0.8)
        rep = kernel_domination_check(random_samples(rng, 32, 200), p)
        assert rep.passed, f"{len(rep.violations)} violations, min margin {rep.min_margin:.3e}"

    @pytest.mark.parametrize("theta", [-1.0, 0.5, 2.0])
    def test_corrected_bound(self, theta, rng):
        p = make_params(N=32, alpha=2, theta=theta, lambda_l=0.6, lambda_r=0.8)
        rep = kernel_domination_check(random_samples(rng, 32, 200), p, corrected=True)
        assert rep.passed

    def test_violation_is_reported(self):
        p = make_params(N=8, theta=0.0, lambda_l=0.5)
        # a tolerance above every possible margin forces a report
        rep = kernel_domination_check([(1, 1, 0.05)], p, tol=-1.0)
        assert rep.samples == 1
        assert rep.violations and {"x", "y", "t", "theta", "margin"} <= set(rep.violations[0])


def path_laplacian(n):
    L = np.zeros((n, n))
    for i in range(n - 1):
        L[i, i + 1] += 1.0
        L[i + 1, i] += 1.0
    return L - np.diag(L.sum(axis=1))


def random_generator(rng, n, kill=0.3):
    R = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
    np.fill_diagonal(R, 0.0)
    return R - np.diag(R.sum(axis=1) + kill * rng.random(n))


class TestMaximumPrinciples:
    def test_elliptic_constant(self):
        v = max_principle_elliptic(path_laplacian(6), np.full(6, 2.0), [0, 5])
        assert v.passed and v.excess == 0.0

    @given(st.floats(-5, 5), st.floats(-5, 5), st.integers(3, 30))
    def test_elliptic_harmonic_interpolation(self, a, b, n):
        L = path_laplacian(n)
        inner = np.arange(1, n - 1)
        f = np.zeros(n)
        f[0], f[-1] = a, b
        f[inner] = np.linalg.solve(L[np.ix_(inner, inner)], -L[np.ix_(inner, [0, n - 1])] @ np.array([a, b]))
        assert max_principle_elliptic(sp.csr_matrix(L), f, [0, n - 1]).passed

    def test_elliptic_rejects_non_harmonic(self):
        f = np.linspace(0, 1, 6)
        f[2] += 0.1
        with pytest.raises(PreconditionError):
            max_principle_elliptic(path_laplacian(6), f, [0, 5])

    def test_markov_random_instances(self, rng):
        for _ in range(200):
            n = int(rng.integers(3, 12))
            L = random_generator(rng, n)
            dead = rng.choice(n, size=int(rng.integers(1, n)), replace=False)
            live = np.setdiff1d(np.arange(n), dead)
            f = np.zeros(n)
            f[live] = np.linalg.solve(L[np.ix_(live, live)], rng.random(live.size))
            assert max_principle_markov(L, f, dead).passed

    def test_markov_zero(self, rng):
        L = random_generator(rng, 5)
        assert max_principle_markov(L, np.zeros(5), [0]).passed

    def test_markov_mixed_source_refused(self, rng):
        L = random_generator(rng, 6)
        f = np.zeros(6)
        f[1:] = np.linalg.solve(L[1:, 1:], np.array([1.0, -1.0, 1.0, -1.0, 1.0]))
        with pytest.raises(PreconditionError):
            max_principle_markov(L, f, [0])

    def test_parabolic_random_instances(self, rng):
        for _ in range(100):
            n = int(rng.integers(3, 10))
            L = random_generator(rng, n)
            f0 = -rng.random(n)
            path = parabolic_path(L, f0, np.linspace(0, 1, 21))
            v = max_principle_parabolic(L, f0, path)
            assert v.passed and path.values.max() <= 1e-12

    def test_parabolic_zero(self, rng):
        L = random_generator(rng, 4)
        path = parabolic_path(L, np.zeros(4), np.linspace(0, 1, 5))
        assert max_principle_parabolic(L, np.zeros(4), path).passed
        assert np.all(path.values == 0)

    def test_parabolic_positive_source_refused(self, rng):
        L = random_generator(rng, 4)
        path = parabolic_path(L, np.zeros(4), np.linspace(0, 1, 5), source=np.ones(4))
        with pytest.raises(PreconditionError):
            max_principle_parabolic(L, np.zeros(4), path)
