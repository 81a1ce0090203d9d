import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sepalpha.errors import DomainError, SizeError
from sepalpha.model import Configuration, ModelParams, reservoir_rates
from sepalpha.moments import DensitySolver, stationary_profile
from sepalpha.oracle import (
    StateSpace,
    binomial_product,
    build_generator,
    evolve_distribution,
    exact_moments,
    point_mass,
    stationary_distribution,
)

from conftest import make_params

params_strategy = st.builds(
    lambda N, alpha, th, ll, lr, a, b: ModelParams(alpha, ll, lr, a * alpha, b * alpha, th, N),
    st.integers(3, 4),
    st.integers(1, 3),
    st.sampled_from([-1.0, 0.0, 0.5, 1.0, 2.0]),
    st.floats(0.05, 1.0),
    st.floats(0.05, 1.0),
    st.floats(0.05, 0.95),
    st.floats(0.05, 0.95),
)


def test_state_space_size_and_index():
    space = StateSpace.build(3, 1)
    assert space.size == 4
    for i in range(space.size):
        assert space.index(space.configuration(i)) == i


def test_state_cap():
    with pytest.raises(SizeError):
        StateSpace.build(12, 3, cap=1000)


def test_exit_rate_matches_model():
    p = make_params(N=3, alpha=1, rho_l=0.3, rho_r=0.6)
    gen = build_generator(p)
    c = Configuration([1, 0], 1)
    i = gen.space.index(c)
    inj_l, rem_l, inj_r, rem_r = reservoir_rates(c, p)
    expected = 1.0 + rem_l + inj_r
    assert gen.exit_rates[i] / p.N**2 == pytest.approx(expected)
    assert rem_l == pytest.approx(1 - 0.3)
    assert inj_r == pytest.approx(0.6)
    # entry by entry
    Q = gen.Q.toarray() / p.N**2
    assert Q[i, gen.space.index([0, 1])] == pytest.approx(1.0)
    assert Q[i, gen.space.index([0, 0])] == pytest.approx(rem_l)
    assert Q[i, gen.space.index([1, 1])] == pytest.approx(inj_r)


@given(params_strategy)
def test_generator_is_markov(p):
    Q = build_generator(p).Q.toarray()
    off = Q - np.diag(np.diag(Q))
    assert off.min() >= 0
    assert np.abs(Q.sum(axis=1)).max() < 1e-9 * max(1.0, np.abs(Q).max())


@pytest.mark.parametrize("N,alpha", [(3, 1), (3, 3), (4, 2), (4, 3)])
def test_binomial_product_is_invariant(N, alpha):
    p = make_params(N=N, alpha=alpha, rho_l=0.4 * alpha, rho_r=0.4 * alpha, lambda_l=0.7, lambda_r=0.7, theta=0.5)
    gen = build_generator(p)
    pi = binomial_product(gen.space, 0.4 * alpha)
    assert np.abs(gen.Q.T @ pi).max() / np.abs(gen.Q).max() < 1e-14


def test_uniform_stationary_at_half_filling():
    p = make_params(N=3, alpha=1, rho_l=0.5, rho_r=0.5)
    assert np.allclose(stationary_distribution(p), 0.25, atol=1e-14)


def test_stationary_equals_binomial_at_equal_densities():
    p = make_params(N=4, alpha=2, rho_l=0.8, rho_r=0.8, lambda_l=0.3, lambda_r=0.9)
    gen = build_generator(p)
    assert np.allclose(stationary_distribution(gen), binomial_product(gen.space, 0.8), atol=1e-13)


@pytest.mark.parametrize("theta", [-1.0, 0.0, 1.0, 2.0])
def test_stationary_marginals_match_profile(theta):
    p = make_params(N=4, alpha=2, theta=theta, lambda_l=0.6, lambda_r=0.9, rho_l=0.3, rho_r=1.6)
    gen = build_generator(p)
    m = exact_moments(stationary_distribution(gen), gen.space)
    assert np.abs(m.density - stationary_profile(p).profile.interior).max() < 1e-10


def test_evolve_trivial_cases():
    p = make_params(N=3, alpha=2, rho_l=0.5, rho_r=1.2)
    gen = build_generator(p)
    p0 = point_mass(gen.space, [1, 2])
    assert np.array_equal(evolve_distribution(gen, p0, 0.0), p0)
    pi = stationary_distribution(gen)
    assert np.abs(evolve_distribution(gen, pi, 0.3) - pi).max() < 1e-12
    with pytest.raises(DomainError):
        evolve_distribution(gen, p0, -1.0)


def test_converges_to_stationary():
    p = make_params(N=3, alpha=1, rho_l=0.2, rho_r=0.7)
    gen = build_generator(p)
    out = evolve_distribution(gen, point_mass(gen.space, [1, 1]), 20.0)
    assert np.abs(out - stationary_distribution(gen)).max() < 1e-10


@given(params_strategy, st.floats(0.0, 0.5))
def test_evolution_preserves_mass_and_positivity(p, t):
    gen = build_generator(p)
    p0 = binomial_product(gen.space, np.linspace(0.2, 0.8, p.N - 1) * p.alpha)
    out = evolve_distribution(gen, p0, t)
    assert out.min() >= 0
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_relative_entropy_decreases():
    p = make_params(N=4, alpha=2, rho_l=0.7, rho_r=0.7, theta=0.0)
    gen = build_generator(p)
    ref = binomial_product(gen.space, 0.7)
    d = point_mass(gen.space, [2, 0, 2]) * 0.5 + point_mass(gen.space, [0, 2, 0]) * 0.5
    ent = []
    for t in np.linspace(0, 0.3, 7):
        q = evolve_distribution(gen, d, t)
        nz = q > 0
        ent.append(float(np.sum(q[nz] * np.log(q[nz] / ref[nz]))))
    assert all(b <= a + 1e-12 for a, b in zip(ent, ent[1:]))


@pytest.mark.parametrize("theta", [-1.0, 0.0, 1.0, 2.0])
def test_marginals_match_density_solver(theta):
    p = make_params(N=4, alpha=3, theta=theta, lambda_l=0.5, lambda_r=0.8, rho_l=0.4, rho_r=2.5)
    gen = build_generator(p)
    rho0 = np.array([2.0, 0.5, 1.0])
    s = DensitySolver(rho0, p)
    p0 = binomial_product(gen.space, rho0)
    for t in (0.01, 0.05, 0.5):
        m = exact_moments(evolve_distribution(gen, p0, t), gen.space)
        assert np.abs(m.density - s.interior(t)).max() < 1e-8


class TestExactMoments:
    def test_binomial_has_zero_extended_correlation(self):
        space = StateSpace.build(4, 3)
        m = exact_moments(binomial_product(space, [0.5, 1.5, 2.5]), space)
        assert np.abs(m.correlation(diagonal=True)).max() < 1e-14

    def test_point_mass(self):
        space = StateSpace.build(4, 2)
        m = exact_moments(point_mass(space, [2, 0, 1]), space)
        assert np.array_equal(m.pair, np.outer([2, 0, 1], [2, 0, 1]))

    def test_two_point_example(self):
        space = StateSpace.build(3, 2)
        d = 0.5 * point_mass(space, [0, 0]) + 0.5 * point_mass(space, [2, 0])
        m = exact_moments(d, space)
        assert m.factorial[0] == pytest.approx(1.0)
        assert m.density[0] == pytest.approx(1.0)
        assert m.correlation()[0, 0] == pytest.approx(1.0)

    def test_alpha_one_has_no_extension(self):
        space = StateSpace.build(3, 1)
        m = exact_moments(point_mass(space, [1, 0]), space)
        with pytest.raises(DomainError):
            m.correlation(diagonal=True)
