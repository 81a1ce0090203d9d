"""Exact computations on the full configuration space of tiny lattices."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import DomainError, SizeError, SolverError
from .model import Configuration, ModelParams

DEFAULT_STATE_CAP = 500_000


@dataclass(frozen=True)
class StateSpace:
    """All configurations of {0..alpha}^{N-1} in lexicographic order."""

    N: int
    alpha: int
    states: np.ndarray  # (size, N-1) int

    @classmethod
    def build(cls, N: int, alpha: int, cap: int = DEFAULT_STATE_CAP) -> "StateSpace":
        size = (alpha + 1) ** (N - 1)
        if size > cap:
            raise SizeError(f"state space of size {size} exceeds cap {cap}")
        states = np.array(list(itertools.product(range(alpha + 1), repeat=N - 1)), dtype=np.int64)
        return cls(N, alpha, states.reshape(size, N - 1))

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def _radix(self) -> np.ndarray:
        return (self.alpha + 1) ** np.arange(self.N - 2, -1, -1)

    def index(self, eta) -> int:
        eta = eta.eta if isinstance(eta, Configuration) else np.asarray(eta)
        return int(np.dot(eta, self._radix))

    def indices(self, etas: np.ndarray) -> np.ndarray:
        return etas @ self._radix

    def configuration(self, i: int) -> Configuration:
        return Configuration(self.states[i], self.alpha)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse rate matrix of the sped-up generator N^2 L_N."""

    Q: sp.csr_matrix
    space: StateSpace
    params: ModelParams

    @property
    def exit_rates(self) -> np.ndarray:
        return -self.Q.diagonal()

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(Q f)(eta) for an observable f on the state space."""
        return self.Q @ f


def build_generator(p: ModelParams, cap: int = DEFAULT_STATE_CAP) -> GeneratorMatrix:
    space = StateSpace.build(p.N, p.alpha, cap)
    S, al, n = space.states, p.alpha, p.N - 1
    radix = space._radix
    src_all = np.arange(space.size)
    rows, cols, vals = [], [], []

    def add(mask, rate, shift):
        m = mask & (rate > 0)
        rows.append(src_all[m])
        cols.append(src_all[m] + shift)
        vals.append(rate[m])

    for k in range(n - 1):
        a, b = S[:, k], S[:, k + 1]
        step = radix[k] - radix[k + 1]
        add(np.ones(space.size, bool), (a * (al - b)).astype(float), -step)  # k -> k+1
        add(np.ones(space.size, bool), (b * (al - a)).astype(float), step)  # k+1 -> k
    s = p.scale
    first, last = S[:, 0], S[:, -1]
    add(np.ones(space.size, bool), s * p.lambda_l * p.rho_l * (al - first), radix[0])
    add(np.ones(space.size, bool), s * p.lambda_l * (al - p.rho_l) * first, -radix[0])
    add(np.ones(space.size, bool), s * p.lambda_r * p.rho_r * (al - last), radix[-1])
    add(np.ones(space.size, bool), s * p.lambda_r * (al - p.rho_r) * last, -radix[-1])

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals) * float(p.N) ** 2
    Q = sp.csr_matrix((v, (r, c)), shape=(space.size, space.size))
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return GeneratorMatrix(Q.tocsr(), space, p)


def evolve_distribution(
    gen: GeneratorMatrix, p0: np.ndarray, t: float, tail: float = 1e-13
) -> np.ndarray:
    """Distribution at macroscopic time t by uniformization of exp(tQ)."""
    p0 = np.asarray(p0, dtype=float)
    if np.any(p0 < 0):
        raise DomainError("initial distribution has negative entries")
    if t < 0:
        raise DomainError("time must be non-negative")
    if t == 0:
        return p0.copy()
    lam = float(gen.exit_rates.max()) * 1.02
    if lam == 0:
        return p0.copy()
    PT = (sp.identity(gen.space.size, format="csr") + gen.Q / lam).T.tocsr()
    # split [0, t] so each piece has a moderate Poisson mean
    pieces = max(1, math.ceil(lam * t / 200.0))
    mu = lam * t / pieces
    kmax = int(poisson.isf(tail / pieces, mu)) + 2
    w = poisson.pmf(np.arange(kmax + 1), mu)
    out = p0
    for _ in range(pieces):
        term = out
        acc = w[0] * term
        for k in range(1, kmax + 1):
            term = PT @ term
            acc = acc + w[k] * term
        out = acc
    out = np.clip(out, 0.0, None)
    return out / out.sum() * p0.sum()


def stationary_distribution(p_or_gen) -> np.ndarray:
    """Unique invariant probability vector via a bordered null-space solve."""
    gen = p_or_gen if isinstance(p_or_gen, GeneratorMatrix) else build_generator(p_or_gen)
    QT = gen.Q.T.toarray()
    n = QT.shape[0]
    M = QT.copy()
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = sla.solve(M, rhs)
    except sla.LinAlgError as exc:
        raise SolverError(f"stationary solve failed: {exc}") from exc
    res = np.abs(gen.Q.T @ pi).max() / max(1.0, np.abs(gen.Q).max())
    if res > 1e-12 or np.any(pi < -1e-12):
        raise SolverError(f"stationary residual {res:.3e}")
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def binomial_product(space: StateSpace, rho) -> np.ndarray:
    """Product Binomial(alpha, rho(x)/alpha) vector; rho scalar or per-site."""
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (space.N - 1,))
    q = rho / space.alpha
    logs = np.zeros(space.size)
    for k in range(space.N - 1):
        n = space.states[:, k]
        comb = np.array([math.comb(space.alpha, int(v)) for v in range(space.alpha + 1)])[n]
        logs += np.log(comb) + n * np.log(q[k]) + (space.alpha - n) * np.log1p(-q[k])
    return np.exp(logs)


@dataclass(frozen=True)
class ExactMoments:
    density: np.ndarray  # E[eta(x)], x = 1..N-1
    pair: np.ndarray  # E[eta(x)eta(y)], full matrix (diagonal holds E[eta^2])
    factorial: np.ndarray  # E[eta(x)(eta(x)-1)]
    alpha: int

    def correlation(self, diagonal: bool = True) -> np.ndarray:
        """Extended correlation matrix indexed by sites 1..N-1 (offset by one)."""
        rho = self.density
        phi = self.pair - np.outer(rho, rho)
        if diagonal:
            if self.alpha == 1:
                raise DomainError("the extended diagonal needs alpha >= 2")
            a = self.alpha
            np.fill_diagonal(phi, a / (a - 1.0) * self.factorial - rho**2)
        else:
            np.fill_diagonal(phi, np.nan)
        return phi

    def covariance(self) -> np.ndarray:
        """Plain covariance E[eta(x)eta(y)] - rho(x)rho(y) with true variances."""
        return self.pair - np.outer(self.density, self.density)


def exact_moments(dist: np.ndarray, space: StateSpace) -> ExactMoments:
    dist = np.asarray(dist, dtype=float)
    S = space.states.astype(float)
    rho = dist @ S
    pair = S.T @ (S * dist[:, None])
    fact = dist @ (S * (S - 1.0))
    return ExactMoments(rho, pair, fact, space.alpha)


def point_mass(space: StateSpace, cfg) -> np.ndarray:
    d = np.zeros(space.size)
    d[space.index(cfg)] = 1.0
    return d
