"""Fluctuation fields, martingale statistics and correlation decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import Polynomial

from .errors import DomainError
from .kmc import RIGHT, LEFT, INJECT_L, REMOVE_L, INJECT_R, REMOVE_R, Ensemble, EnsembleEstimate, Trajectory
from .model import Configuration, ModelParams, mobility
from .moments import (
    CorrelationField,
    DensityProfile,
    DensitySolver,
    admissible_initial_profile,
    covariance_matrix,
    evolve_correlation,
)
from .spectral import QUAD_U, QUAD_W, Regime, expand, regime_for, robin_roots, semigroup_apply

# --------------------------------------------------------------------- test functions


def _bump_polys(order: int) -> list[Polynomial]:
    """P_k with d^k/ds^k exp(-1/(1-s^2)) = P_k(s) (1-s^2)^(-2k) exp(-1/(1-s^2))."""
    one_m = Polynomial([1.0, 0.0, -1.0])
    s = Polynomial([0.0, 1.0])
    polys = [Polynomial([1.0])]
    for k in range(order):
        P = polys[-1]
        polys.append(P.deriv() * one_m**2 + 4 * k * s * P * one_m - 2 * s * P)
    return polys


@dataclass(frozen=True)
class TestFunction:
    """Smooth function on [0, 1] adapted to one boundary regime.

    Series functions are finite combinations of eigenmodes (sine, Robin or
    cosine).  Bump functions are sums of mollifiers supported strictly inside
    (0, 1), so every derivative vanishes at both ends.
    """

    __test__ = False  # not a pytest class

    regime: Regime
    freqs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambda_l: float = 1.0
    lambda_r: float = 1.0
    bumps: tuple = ()  # (center, half_width, amplitude) triples

    @property
    def flat(self) -> bool:
        return bool(self.bumps) and self.coeffs.size == 0

    # constructors
    @classmethod
    def sine(cls, coeffs) -> "TestFunction":
        c = np.atleast_1d(np.asarray(coeffs, float))
        return cls("dirichlet", math.pi * np.arange(1, c.size + 1), c)

    @classmethod
    def cosine(cls, coeffs) -> "TestFunction":
        c = np.atleast_1d(np.asarray(coeffs, float))
        return cls("neumann", math.pi * np.arange(c.size), c)

    @classmethod
    def robin(cls, coeffs, lambda_l: float, lambda_r: float) -> "TestFunction":
        c = np.atleast_1d(np.asarray(coeffs, float))
        return cls("robin", robin_roots(lambda_l, lambda_r, c.size), c, lambda_l, lambda_r)

    @classmethod
    def bump(cls, center: float = 0.5, half_width: float = 0.3, amplitude: float = 1.0, regime: Regime = "dirichlet") -> "TestFunction":
        return cls.bump_sum([(center, half_width, amplitude)], regime)

    @classmethod
    def bump_sum(cls, bumps, regime: Regime = "dirichlet") -> "TestFunction":
        out = []
        for c, w, a in bumps:
            if w <= 0 or c - w <= 0 or c + w >= 1:
                raise DomainError("bump support must lie strictly inside (0, 1)")
            out.append((float(c), float(w), float(a)))
        return cls(regime, bumps=tuple(out))

    @classmethod
    def for_params(cls, p: ModelParams, coeffs=(1.0,)) -> "TestFunction":
        """Default member of the test space selected by p.theta."""
        if p.theta < 0:
            return cls.bump()
        reg = regime_for(p.theta)
        if reg == "dirichlet":
            return cls.sine(coeffs)
        if reg == "neumann":
            return cls.cosine(coeffs)
        return cls.robin(coeffs, p.lambda_l, p.lambda_r)

    # evaluation
    def derivative(self, u, order: int = 1) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        if self.coeffs.size:
            b = self.freqs
            U = u[..., None]
            shift = order * math.pi / 2
            if self.regime == "dirichlet":
                basis = b**order * np.sin(b * U + shift)
            elif self.regime == "neumann":
                basis = b**order * np.cos(b * U + shift)
            else:
                safe = np.where(b == 0, 1.0, b)
                basis = b**order * (self.lambda_l / safe * np.sin(b * U + shift) + np.cos(b * U + shift))
            out = out + basis @ self.coeffs
        if self.bumps:
            polys = _bump_polys(order)
            P = polys[order]
            for c, w, a in self.bumps:
                s = (u - c) / w
                inside = np.abs(s) < 1
                si = s[inside]
                q = 1.0 - si**2
                vals = P(si) * q ** (-2.0 * order) * np.exp(-1.0 / q) * math.e
                res = np.zeros_like(u)
                res[inside] = vals
                out = out + a * res / w**order
        return out

    def __call__(self, u) -> np.ndarray:
        return self.derivative(u, 0)

    def boundary_defects(self, order: int = 6) -> dict[str, float]:
        """Largest violation of each boundary condition of the regime."""
        ends = np.array([0.0, 1.0])
        d = {k: self.derivative(ends, k) for k in range(order + 1)}
        out: dict[str, float] = {}
        if self.flat:
            out["flat"] = max(float(np.abs(d[k]).max()) for k in d)
        elif self.regime == "dirichlet":
            out["even"] = max(float(np.abs(d[k]).max()) / (1 + self.freqs.max()) ** k for k in d if k % 2 == 0)
        elif self.regime == "neumann":
            odd = [float(np.abs(d[k]).max()) / (1 + self.freqs.max()) ** k for k in d if k % 2 == 1]
            out["odd"] = max(odd, default=0.0)
        else:
            scale = 1.0 + float(np.abs(self.coeffs).sum()) * (1 + self.freqs.max())
            out["robin"] = max(
                abs(d[1][0] - self.lambda_l * d[0][0]), abs(d[1][1] + self.lambda_r * d[0][1])
            ) / scale
        return out

    def member_of(self, theta: float, order: int = 6, tol: float = 1e-12) -> bool:
        """Boundary-condition membership for the test space of theta (up to ``order``)."""
        if theta < 0 and not self.flat:
            return False
        if not self.flat and self.regime != regime_for(theta):
            return False
        defects = self.boundary_defects(order)
        return all(v <= tol for v in defects.values())


# ---------------------------------------------------------------------- decay rates


@dataclass(frozen=True)
class DecayRates:
    N: int
    theta: float

    @property
    def R(self) -> float:
        N, th = float(self.N), self.theta
        if th > 1:
            return 1.0 / N
        if th >= 0:
            return N**th / N**2
        if th > -1:
            return N**th / N
        return 1.0 / N**2

    @property
    def d(self) -> float:
        N, th = float(self.N), self.theta
        return math.sqrt(N) if th <= 1 else N ** (1.5 - th)

    @property
    def delta(self) -> float:
        th = self.theta
        return abs(1 - th) / 2 if th < 3 else 1.0

    @staticmethod
    def boundary_exponent(theta: float) -> float:
        """Exponent of N in R_N^theta."""
        if theta > 1:
            return -1.0
        if theta >= 0:
            return theta - 2.0
        if theta > -1:
            return theta - 1.0
        return -2.0

    bulk_exponent = -1.0


# ------------------------------------------------------------------ field functionals


def _interior_density(rho, N: int) -> np.ndarray:
    if isinstance(rho, DensityProfile):
        return rho.interior
    r = np.asarray(rho, dtype=float)
    if r.ndim == 0:
        return np.full(N - 1, float(r))
    if r.shape[-1] == N + 1:
        return r[..., 1:-1]
    if r.shape[-1] != N - 1:
        raise DomainError("density has the wrong size")
    return r


def field_values(states, phi: Callable, rho) -> np.ndarray:
    """Y(phi) for a stack of configurations (..., N-1)."""
    X = np.asarray(states, dtype=float)
    N = X.shape[-1] + 1
    u = np.arange(1, N) / N
    return ((X - _interior_density(rho, N)) @ np.asarray(phi(u), float)) / math.sqrt(N)


def field_eval(cfg: Configuration, phi: Callable, rho) -> float:
    """N^{-1/2} sum_x phi(x/N) (eta(x) - rho(x))."""
    N = cfg.N
    if isinstance(rho, DensityProfile) and rho.N != N:
        raise DomainError("density profile and configuration disagree on N")
    return float(field_values(cfg.eta, phi, rho))


@dataclass(frozen=True)
class FluctuationObservable:
    phi: Callable
    times: np.ndarray
    values: np.ndarray  # (replicas, times)

    def variance(self) -> EnsembleEstimate:
        R = self.values.shape[0]
        dev = self.values - self.values.mean(axis=0)
        v = (dev**2).sum(axis=0) / (R - 1)
        se = np.sqrt(np.maximum((dev**4).mean(axis=0) - v**2, 0.0) / R)
        return EnsembleEstimate(v, se, R)


def observe(ensemble: Ensemble, phi: Callable, solver: DensitySolver) -> FluctuationObservable:
    """Y_t(phi) per replica, centred by the deterministic density of ``solver``."""
    vals = np.stack(
        [field_values(ensemble.snapshots[:, k, :], phi, solver.interior(t)) for k, t in enumerate(ensemble.times)],
        axis=1,
    )
    return FluctuationObservable(phi, ensemble.times, vals)


def _grad(phi: Callable, N: int) -> np.ndarray:
    """nabla_N phi(x/N) for x = 0..N-1."""
    v = np.asarray(phi(np.arange(N + 1) / N), float)
    return N * np.diff(v)


def _qv_parts(occ_left, occ_right, occ, bonds, phi: Callable, p: ModelParams, t):
    """Boundary and bulk parts of the QV given (time-integrated) observables.

    ``occ`` has sites on the last axis, ``bonds`` the products eta(x)eta(x+1);
    ``t`` multiplies the constant terms (1 for an instantaneous value).
    """
    N, al = p.N, p.alpha
    f1, fN = float(phi(np.array([1.0 / N]))[0]), float(phi(np.array([(N - 1.0) / N]))[0])
    pref = float(N) ** (1.0 - p.theta)
    bl = pref * f1**2 * (p.lambda_l * (al - 2 * p.rho_l) * occ_left + al * p.lambda_l * p.rho_l * t)
    br = pref * fN**2 * (p.lambda_r * (al - 2 * p.rho_r) * occ_right + al * p.lambda_r * p.rho_r * t)
    g = _grad(phi, N)[1 : N - 1]  # bonds (x, x+1), x = 1..N-2
    pair = al * (occ[..., :-1] + occ[..., 1:]) - 2.0 * bonds
    bulk = (pair @ g**2) / N
    return bl + br, bulk


def qv_integrand(cfg: Configuration, phi: Callable, p: ModelParams) -> float:
    """Gamma^N(phi) at a single configuration."""
    e = cfg.eta.astype(float)
    bnd, bulk = _qv_parts(e[0], e[-1], e, e[:-1] * e[1:], phi, p, 1.0)
    return float(bnd + bulk)


@dataclass(frozen=True)
class QVSeries:
    times: np.ndarray
    boundary: np.ndarray
    bulk: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.boundary + self.bulk


def qv_integral(source, phi: Callable, p: ModelParams) -> QVSeries:
    """int_0^t Gamma_s(phi) ds at the snapshot times of a trajectory or ensemble.

    Uses the exact cumulative integrals of eta(x) and eta(x)eta(x+1); for an
    ensemble the arrays carry a leading replica axis.
    """
    occ, bonds = source.occupation.astype(float), source.bonds.astype(float)
    t = np.asarray(source.times, float)
    bnd, bulk = _qv_parts(occ[..., 0], occ[..., -1], occ, bonds, phi, p, t)
    return QVSeries(t, bnd, bulk)


# ------------------------------------------------------------------- Dynkin martingale


@dataclass(frozen=True)
class DynkinSeries:
    """M_t(phi) = Y_t - Y_0 - (bulk + boundary + gradient) along one trajectory."""

    times: np.ndarray
    initial: float  # Y_0(phi)
    field: np.ndarray
    bulk: np.ndarray
    boundary: np.ndarray
    gradient: np.ndarray

    @property
    def martingale(self) -> np.ndarray:
        return self.field - self.initial - self.bulk - self.boundary - self.gradient


def replay_events(traj: Trajectory, times) -> tuple[np.ndarray, np.ndarray]:
    """States and int_0^t eta ds at the given times, rebuilt from the event log."""
    log = traj.events
    if log is None:
        raise DomainError("trajectory has no event log")
    n = traj.initial.eta.size
    m = len(log)
    delta = np.zeros((m + 1, n), dtype=np.int64)
    k = log.kinds
    src = log.sites - 1
    rows = np.arange(1, m + 1)
    jump = (k == RIGHT) | (k == LEFT)
    np.add.at(delta, (rows[jump], src[jump]), -1)
    np.add.at(delta, (rows[k == RIGHT], src[k == RIGHT] + 1), 1)
    np.add.at(delta, (rows[k == LEFT], src[k == LEFT] - 1), 1)
    for kind, sign in ((INJECT_L, 1), (REMOVE_L, -1), (INJECT_R, 1), (REMOVE_R, -1)):
        sel = k == kind
        np.add.at(delta, (rows[sel], src[sel]), sign)
    states = traj.initial.eta[None, :] + np.cumsum(delta, axis=0)  # state after event j
    ev_t = np.concatenate([[0.0], log.times])
    seg = np.diff(np.concatenate([ev_t, [np.inf]]))
    cum = np.concatenate([np.zeros((1, n)), np.cumsum(states[:-1] * seg[:-1, None], axis=0)])
    times = np.asarray(times, float)
    j = np.searchsorted(ev_t, times, side="right") - 1
    occ = cum[j] + states[j] * (times - ev_t[j])[:, None]
    return states[j], occ


def dynkin_residual(traj: Trajectory, phi: Callable, solver: DensitySolver, p: ModelParams, times=None) -> DynkinSeries:
    """Dynkin martingale of Y(phi) reconstructed from the event log."""
    if traj.events is None:
        raise DomainError("dynkin_residual needs a trajectory with an event log")
    grid = traj.times if times is None else np.asarray(times, float)
    states, occ = replay_events(traj, grid)
    N, al = p.N, p.alpha
    u = np.arange(N + 1) / N
    f = np.asarray(phi(u), float)
    lap = N**2 * (f[2:] + f[:-2] - 2 * f[1:-1])  # x = 1..N-1
    rint = np.stack([solver.integral(t) for t in grid])
    ibar = occ - rint  # int_0^t bar eta ds
    rq = N**-0.5
    Y = np.stack([field_values(states[k], phi, solver.interior(t)) for k, t in enumerate(grid)])
    Y0 = float(field_values(traj.initial.eta, phi, solver.interior(0.0)))
    bulk = rq * al * (ibar @ lap)
    sc = float(N) ** (1.5 - p.theta)
    boundary = -al * sc * (p.lambda_l * f[1] * ibar[:, 0] + p.lambda_r * f[N - 1] * ibar[:, -1])
    g = N * np.diff(f)
    gradient = -al * math.sqrt(N) * (g[N - 1] * ibar[:, -1] - g[0] * ibar[:, 0])
    return DynkinSeries(grid, Y0, Y, bulk, boundary, gradient)


# ------------------------------------------------------------------- OU prediction


def hydro_steady(u, p: ModelParams) -> np.ndarray:
    """Stationary solution of the limiting heat equation (0 for Neumann)."""
    u = np.asarray(u, float)
    reg = regime_for(p.theta)
    if reg == "dirichlet":
        return p.rho_l + (p.rho_r - p.rho_l) * u
    if reg == "robin":
        ll, lr = p.lambda_l, p.lambda_r
        b = ll * lr * (p.rho_r - p.rho_l) / (ll + lr + ll * lr)
        return p.rho_l + b / ll + b * u
    return np.zeros_like(u)


def hydro_density(gamma: Callable, t: float, p: ModelParams, u=None, K: int = 64) -> np.ndarray:
    """rho_t(u) of the limiting heat equation started from gamma."""
    u = np.linspace(0, 1, 513) if u is None else np.asarray(u, float)
    base = lambda v: np.asarray(gamma(v), float) - hydro_steady(v, p)
    return hydro_steady(u, p) + semigroup_apply(base, t, p, grid=u, K=K)


def _gl(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def ou_variance_predictor(f: Callable, t: float, rho, p: ModelParams, K: int = 64, nodes: int = 48) -> float:
    """int_0^t [int 2 chi(rho_s) (d_u S_{t-s} f)^2 du + boundary terms at theta = 1] ds.

    ``rho`` is a constant density or a callable (s, u) -> rho_s(u).
    """
    if t < 0:
        raise DomainError("time must be non-negative")
    if t == 0:
        return 0.0
    reg = regime_for(p.theta)
    dens = (lambda s, v: np.full_like(v, float(rho))) if np.isscalar(rho) else rho
    exp = expand(f, reg, p.alpha, K, p.lambda_l, p.lambda_r)
    # the integrand is smooth but sharply varying near s = t; split the interval
    edges = np.concatenate([[0.0], t - np.geomspace(t, t * 1e-6, 12)[1:], [t]])
    total = 0.0
    al = p.alpha
    for a, b in zip(edges[:-1], edges[1:]):
        ss, ws = _gl(nodes // 4 + 4, a, b)
        for s, w in zip(ss, ws):
            r = dens(s, QUAD_U)
            chi = r * (al - r)
            dS = exp.evaluate(QUAD_U, t - s, deriv=1)
            val = float(np.sum(QUAD_W * 2 * chi * dS**2))
            if reg == "robin":
                ends = np.array([0.0, 1.0])
                S = exp.evaluate(ends, t - s)
                r0, r1 = dens(s, ends)
                val += p.lambda_l * ((al - 2 * p.rho_l) * r0 + al * p.rho_l) * S[0] ** 2
                val += p.lambda_r * ((al - 2 * p.rho_r) * r1 + al * p.rho_r) * S[1] ** 2
            total += w * val
    return total


def equilibrium_variance(f: Callable, rho: float, p: ModelParams) -> float:
    """(chi(rho)/alpha) ||f||^2."""
    v = np.asarray(f(QUAD_U), float)
    return mobility(rho, p) / p.alpha * float(np.sum(QUAD_W * v**2))


# ------------------------------------------------------------ boundary window statistic


def window_sites(eps: float, j: int, N: int) -> np.ndarray:
    """Sites x with x/N in (0, eps] (j = 0) or [1 - eps, 1) (j = 1)."""
    x = np.arange(1, N)
    u = x / N
    sel = u <= eps + 1e-12 if j == 0 else u >= 1 - eps - 1e-12
    return x[sel]


def _window_weights(eps: float, j: int, p: ModelParams) -> np.ndarray:
    if not 0 < eps < 0.5:
        raise DomainError("eps must lie in (0, 1/2)")
    if j not in (0, 1):
        raise DomainError("j must be 0 or 1")
    w = np.zeros(p.N - 1)
    w[window_sites(eps, j, p.N) - 1] = 1.0 / (eps * math.sqrt(p.N))
    return w


def _default_profile(p: ModelParams) -> np.ndarray:
    return np.linspace(p.rho_l, p.rho_r, p.N + 1)[1:-1]


def boundary_window_statistic(
    eps: float, j: int, t: float, p: ModelParams, profile=None, nodes: int = 24
) -> float:
    """E[(int_0^t Y_s(iota_eps^j) ds)^2] from the closed moment equations.

    The initial measure is the product Binomial with the given interior
    ``profile`` (default: linear interpolation of the reservoir densities).
    """
    if p.theta >= 1:
        raise DomainError("the boundary window statistic is defined for theta < 1")
    w = _window_weights(eps, j, p)
    if t == 0:
        return 0.0
    rho0 = _default_profile(p) if profile is None else np.asarray(profile, float)
    solver = DensitySolver(rho0, p)
    vs, ws = _gl(nodes, 0.0, t)
    fields = evolve_correlation(CorrelationField.zeros(p), solver, list(vs), p)
    total = 0.0
    for v, wv, phi in zip(vs, ws, fields):
        C = covariance_matrix(phi, solver(v), p)
        Pint = solver.propagator_integral(t - v)
        total += wv * float(w @ C @ Pint.T @ w)
    return 2.0 * total


def boundary_window_statistic_oracle(
    eps: float, j: int, t: float, p: ModelParams, profile=None, nodes: int = 24
) -> float:
    """Same statistic from the exact law on the full state space (small N)."""
    from .oracle import binomial_product, build_generator, evolve_distribution

    if p.theta >= 1:
        raise DomainError("the boundary window statistic is defined for theta < 1")
    w = _window_weights(eps, j, p)
    if t == 0:
        return 0.0
    rho0 = _default_profile(p) if profile is None else np.asarray(profile, float)
    gen = build_generator(p)
    S = gen.space.states.astype(float)
    Q = gen.Q.toarray()
    n = Q.shape[0]
    fw = S @ w
    pi0 = binomial_product(gen.space, rho0)
    vs, ws = _gl(nodes, 0.0, t)
    total = 0.0
    for v, wv in zip(vs, ws):
        pv = evolve_distribution(gen, pi0, v)
        centred = fw - pv @ fw  # Y_v(iota) up to the common N^{-1/2} factor
        tau = t - v
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = tau * Q
        aug[:n, n] = tau * fw
        h = sla.expm(aug)[:n, n]  # int_0^tau (e^{sQ} fw) ds
        total += wv * float(np.sum(pv * centred * h))
    return 2.0 * total


# ------------------------------------------------------------------------ decay fit


def fit_loglog(Ns, values) -> tuple[float, float, float]:
    """Least-squares slope, intercept and slope standard error of log v vs log N."""
    x = np.log(np.asarray(Ns, float))
    y = np.log(np.asarray(values, float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0]))


def default_bump(amplitude: float = 0.4) -> TestFunction:
    return TestFunction.bump(0.5, 0.3, amplitude)


def correlation_maxima(p: ModelParams, times, perturbation: Callable | None = None, rtol: float = 1e-8) -> tuple[float, float]:
    """sup over the time grid of the bulk and boundary-row maxima of |phi|.

    Starts from a product measure (zero extended correlations) with density
    profile rho_bar + perturbation.
    """
    pert = default_bump() if perturbation is None else perturbation
    g0 = admissible_initial_profile(pert, p)
    solver = DensitySolver(g0[1:-1], p)
    fields = evolve_correlation(CorrelationField.zeros(p), solver, list(times), p, rtol=rtol, atol=1e-14)
    lat = fields[0].lattice
    x, y = lat.points.T
    off = x != y
    rows = off & ((x == 1) | (y == p.N - 1))
    M = np.abs(np.array([f.values for f in fields]))
    return float(M[:, off].max()), float(M[:, rows].max())


def decay_fit(
    thetas: Sequence[float],
    Ns: Sequence[int],
    template: ModelParams,
    times=None,
    perturbation: Callable | None = None,
) -> list[dict]:
    """Log-log slopes of the correlation maxima against N, one row per (theta, region)."""
    Ns = [int(n) for n in Ns]
    if len(Ns) < 3:
        raise DomainError("decay_fit needs at least three lattice sizes")
    grid = np.linspace(0.0, 1.0, 50) if times is None else np.asarray(times, float)
    rows = []
    for th in thetas:
        bulk, bnd = [], []
        for N in Ns:
            b, r = correlation_maxima(template.replace(theta=float(th), N=N), grid, perturbation)
            bulk.append(b)
            bnd.append(r)
        for region, vals, target in (
            ("bulk", bulk, DecayRates.bulk_exponent),
            ("boundary", bnd, DecayRates.boundary_exponent(float(th))),
        ):
            s, c, se = fit_loglog(Ns, vals)
            rows.append(
                {
                    "theta": float(th),
                    "region": region,
                    "slope": s,
                    "intercept": c,
                    "stderr": se,
                    "N_list": Ns,
                    "expected": target,
                    "maxima": [float(v) for v in vals],
                }
            )
    return rows


# ------------------------------------------------------------------ replacement / hydro


def replacement_statistic(x: int, L: int, t: float, ensemble: Ensemble) -> EnsembleEstimate:
    """MC estimate of E|int_0^t (eta_s(x) - right block average over L sites) ds|."""
    p = ensemble.params
    if L < 1 or x < 1 or x + L > p.N - 1:
        raise DomainError("block window leaves the lattice")
    k = int(np.argmin(np.abs(ensemble.times - t)))
    if not np.isclose(ensemble.times[k], t):
        raise DomainError(f"time {t} is not on the ensemble grid")
    occ = ensemble.occupation[:, k, :].astype(float)
    diff = occ[:, x - 1] - occ[:, x : x + L].mean(axis=1)
    a = np.abs(diff)
    R = a.size
    return EnsembleEstimate(np.array(a.mean()), np.array(a.std(ddof=1) / math.sqrt(R)), R, (ensemble.seed,))


@dataclass(frozen=True)
class HydroReport:
    t: float
    mc: float
    se: float
    limit: float

    @property
    def deviation(self) -> float:
        return self.mc - self.limit

    @property
    def z(self) -> float:
        return self.deviation / self.se if self.se > 0 else (0.0 if self.deviation == 0 else math.inf)

    def within(self, k: float = 4.0) -> bool:
        return abs(self.z) <= k


def hydro_check(G: Callable, t: float, ensemble: Ensemble, gamma: Callable) -> HydroReport:
    """Compare <pi_t, G> from the ensemble with (1/N) sum_x G(x/N) rho_t(x/N) of the limit equation."""
    p = ensemble.params
    k = int(np.argmin(np.abs(ensemble.times - t)))
    if not np.isclose(ensemble.times[k], t):
        raise DomainError(f"time {t} is not on the ensemble grid")
    u = np.arange(1, p.N) / p.N
    vals = ensemble.snapshots[:, k, :].astype(float) @ np.asarray(G(u), float) / p.N
    R = vals.size
    # same lattice Riemann sum as the MC pairing, so the O(1/N) quadrature bias cancels
    rho = hydro_density(gamma, float(ensemble.times[k]), p, u)
    limit = float(np.asarray(G(u), float) @ rho / p.N)
    return HydroReport(float(ensemble.times[k]), float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(R)), limit)
