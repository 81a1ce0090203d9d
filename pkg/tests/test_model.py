import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sepalpha.errors import DomainError
from sepalpha.model import (
    Configuration,
    DualConfiguration,
    ModelParams,
    block_average,
    bulk_rate,
    duality_eval,
    empirical_pairing,
    equilibrium_pmf,
    gamma_term,
    mobility,
    reservoir_rates,
)
from sepalpha.oracle import build_generator

from conftest import make_params


def cfg(eta, alpha):
    return Configuration(np.array(eta), alpha)


class TestParams:
    def test_valid(self):
        p = make_params(N=8, alpha=3, theta=-0.5)
        assert p.N == 8 and p.alpha == 3
        assert p.scale == pytest.approx(8**0.5)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(alpha=0),
            dict(N=2),
            dict(lambda_l=0.0),
            dict(lambda_r=1.5),
            dict(rho_l=0.0),
            dict(rho_r=2.0),
            dict(theta=float("nan")),
        ],
    )
    def test_invalid(self, kw):
        base = dict(alpha=2, lambda_l=1.0, lambda_r=1.0, rho_l=0.5, rho_r=1.5, theta=0.0, N=5)
        base.update(kw)
        with pytest.raises(DomainError):
            ModelParams(**base)

    def test_configuration_bounds(self):
        with pytest.raises(DomainError):
            cfg([0, 3, 1], 2)
        with pytest.raises(DomainError):
            cfg([1], 2)


class TestRates:
    def test_bulk_rate_example(self):
        c = cfg([0, 2, 1, 0], 3)
        assert bulk_rate(c, 2, "right") == 4.0

    def test_bulk_rate_blocked(self):
        c = cfg([1, 1], 1)
        assert bulk_rate(c, 1, "right") == 0.0
        assert bulk_rate(c, 1, "left") == 0.0

    def test_reservoir_example(self):
        p = ModelParams(2, 0.5, 0.5, 1.0, 1.0, 1.0, 10)
        c = cfg([1] + [0] * 8, 2)
        inj, rem, _, _ = reservoir_rates(c, p)
        assert inj == pytest.approx(0.05)
        assert rem == pytest.approx(0.05)

    @pytest.mark.parametrize("alpha", [1, 2, 3, 4])
    def test_rates_nonnegative_and_vanish_on_blocked(self, alpha):
        p = make_params(N=3, alpha=alpha)
        for a, b in itertools.product(range(alpha + 1), repeat=2):
            c = cfg([a, b], alpha)
            r = bulk_rate(c, 1, "right")
            assert r >= 0
            assert (r == 0) == (a == 0 or b == alpha)
            res = reservoir_rates(c, p)
            assert min(res) >= 0
            assert (res[0] == 0) == (a == alpha)
            assert (res[1] == 0) == (a == 0)


def _oracle_gamma(p, x, y):
    """L(eta_x eta_y) - eta_x L eta_y - eta_y L eta_x from the full rate matrix."""
    gen = build_generator(p)
    S = gen.space.states.astype(float)
    Q = gen.Q / float(p.N) ** 2
    fx, fy = S[:, x - 1], S[:, y - 1]
    return Q @ (fx * fy) - fx * (Q @ fy) - fy * (Q @ fx), gen.space


class TestGamma:
    def test_examples(self):
        p1 = make_params(alpha=1)
        p2 = make_params(alpha=2)
        assert gamma_term(1, 0, "bulk-offdiag", p1) == -1
        assert gamma_term(0, 0, "bulk-offdiag", p1) == 0
        assert gamma_term(2, 1, "bulk-offdiag", p2) == -2

    @pytest.mark.parametrize("N,alpha", [(3, 1), (3, 2), (3, 3), (4, 1), (4, 2), (4, 3), (5, 1), (5, 2)])
    def test_matches_generator_expansion(self, N, alpha):
        p = make_params(N=N, alpha=alpha, theta=0.7, lambda_l=0.6, lambda_r=0.9)
        for x in range(1, N):
            for y in range(x, N):
                ref, space = _oracle_gamma(p, x, y)
                for i, eta in enumerate(space.states):
                    a = int(eta[x - 1])
                    if y == x + 1:
                        got = gamma_term(a, int(eta[y - 1]), "bulk-offdiag", p)
                    elif y == x == 1:
                        got = gamma_term(a, int(eta[1]), "left-corner", p)
                    elif y == x == N - 1:
                        got = gamma_term(a, int(eta[N - 3]), "right-corner", p)
                    elif y == x:
                        got = gamma_term(a, int(eta[x - 2] + eta[x]), "bulk-diag", p)
                    else:
                        got = gamma_term(a, 0, "separated", p)
                    assert got == pytest.approx(ref[i], abs=1e-12)

    def test_bad_inputs(self):
        p = make_params()
        with pytest.raises(DomainError):
            gamma_term(3, 0, "bulk-offdiag", p)
        with pytest.raises(DomainError):
            gamma_term(1, 1, "elsewhere", p)


class TestDuality:
    def test_examples(self):
        p = make_params(N=4, alpha=2)
        c = cfg([2, 1, 0], 2)
        assert duality_eval(c, DualConfiguration.pair(1, 2, 4, 2), p) == 0.5
        assert duality_eval(c, DualConfiguration.pair(1, 1, 4, 2), p) == 1.0
        assert duality_eval(c, DualConfiguration.pair(2, 2, 4, 2), p) == 0.0

    def test_reservoir_factors(self):
        p = make_params(N=4, alpha=2)
        c = cfg([1, 1, 1], 2)
        assert duality_eval(c, DualConfiguration.pair(0, 4, 4, 2), p) == pytest.approx(p.rho_l * p.rho_r)

    @given(
        alpha=st.integers(1, 3),
        eta=st.lists(st.integers(0, 3), min_size=4, max_size=4),
        x=st.integers(0, 5),
        y=st.integers(0, 5),
    )
    def test_symmetric_and_bounded(self, alpha, eta, x, y):
        if alpha == 1 and x == y and 1 <= x <= 4:
            return
        p = make_params(N=5, alpha=alpha, rho_l=0.3 * alpha, rho_r=0.6 * alpha)
        c = cfg(np.minimum(eta, alpha), alpha)
        d1 = duality_eval(c, DualConfiguration.pair(x, y, 5, alpha), p)
        d2 = duality_eval(c, DualConfiguration.pair(y, x, 5, alpha), p)
        assert d1 == d2
        assert d1 >= 0.0
        if 1 <= min(x, y) and max(x, y) <= 4:
            assert d1 <= 1.0
        else:
            # absorbed dual particles carry the raw reservoir density
            assert d1 <= max(1.0, p.rho_l, p.rho_r) ** 2


class TestMobilityAndPmf:
    def test_mobility(self):
        p = make_params(alpha=2)
        assert mobility(1.0, p) == 1.0
        assert mobility(0.0, p) == 0.0
        assert mobility(2.0, p) == 0.0

    @given(alpha=st.integers(1, 5), u=st.floats(0, 1), v=st.floats(0, 1), w=st.floats(0, 1))
    def test_mobility_concave_with_max(self, alpha, u, v, w):
        p = make_params(alpha=alpha)
        a, b = u * alpha, v * alpha
        mid = mobility(w * a + (1 - w) * b, p)
        assert mid >= w * mobility(a, p) + (1 - w) * mobility(b, p) - 1e-12
        assert mobility(a, p) <= alpha**2 / 4 + 1e-12
        assert mobility(alpha / 2, p) == pytest.approx(alpha**2 / 4)

    def test_pmf_examples(self):
        p = make_params(N=3, alpha=2)
        assert equilibrium_pmf(cfg([1, 0], 2), 1.0, p) * 4 == pytest.approx(0.5)  # one site gives 1/2, empty site 1/4
        p1 = make_params(N=3, alpha=1)
        for eta in itertools.product((0, 1), repeat=2):
            assert equilibrium_pmf(cfg(eta, 1), 0.5, p1) == pytest.approx(0.25)
        assert equilibrium_pmf(cfg([0, 0], 2), 1e-12, p) == pytest.approx(1.0)

    @pytest.mark.parametrize("N,alpha", [(3, 1), (4, 2), (5, 3), (5, 2)])
    def test_pmf_sums_to_one(self, N, alpha):
        p = make_params(N=N, alpha=alpha)
        tot = sum(equilibrium_pmf(cfg(e, alpha), 0.37 * alpha, p) for e in itertools.product(range(alpha + 1), repeat=N - 1))
        assert tot == pytest.approx(1.0, abs=1e-12)


class TestObservables:
    def test_pairing(self):
        assert empirical_pairing(cfg([1, 0, 1], 1), lambda u: u) == pytest.approx(0.25)
        assert empirical_pairing(cfg([0, 0, 0], 1), lambda u: u) == 0.0
        assert empirical_pairing(cfg([3] * 5, 3), lambda u: np.ones_like(u)) == pytest.approx(3 * 5 / 6)

    def test_block_average(self):
        assert block_average(cfg([0, 1, 2, 1, 0], 2), 1, 3) == pytest.approx(4 / 3)
        assert block_average(cfg([2, 2, 2, 2], 2), 2, 2) == 2.0
        assert block_average(cfg([0, 1, 2, 1, 0], 2), 2, 1) == 2.0
        assert block_average(cfg([0, 1, 2, 1, 0], 2), 5, 2, side="left") == 1.5
        with pytest.raises(DomainError):
            block_average(cfg([0, 1, 2, 1, 0], 2), 3, 3)
