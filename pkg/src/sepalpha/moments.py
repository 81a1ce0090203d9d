"""Closed moment hierarchy: density, stationary profile, two-point correlations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .errors import DomainError, SolverError
from .lattice import TriangleLattice, density_operator, triangle_operator
from .model import ModelParams

# Radau tolerances for the correlation system
RTOL = 1e-11
ATOL = 1e-13


@dataclass(frozen=True)
class DensityProfile:
    """Density on {0..N} with pinned endpoints."""

    values: np.ndarray
    t: float = 0.0

    @property
    def N(self) -> int:
        return len(self.values) - 1

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    @classmethod
    def from_interior(cls, interior, p: ModelParams, t: float = 0.0) -> "DensityProfile":
        vals = np.concatenate([[p.rho_l], np.asarray(interior, float), [p.rho_r]])
        return cls(vals, t)

    @classmethod
    def from_function(cls, f: Callable, p: ModelParams, t: float = 0.0) -> "DensityProfile":
        u = np.arange(1, p.N) / p.N
        return cls.from_interior(np.asarray(f(u), float) * np.ones(p.N - 1), p, t)


@dataclass(frozen=True)
class StationaryCoefficients:
    a: float
    b: float
    profile: DensityProfile


@dataclass(frozen=True)
class CorrelationField:
    """Extended correlation on the packed triangle V_N (boundary values are 0)."""

    values: np.ndarray
    lattice: TriangleLattice
    t: float = 0.0

    def matrix(self) -> np.ndarray:
        """Symmetric array indexed by 0..N in both directions."""
        return self.lattice.to_matrix(self.values)

    def at(self, x: int, y: int) -> float:
        i = self.lattice.index(x, y)
        return 0.0 if i < 0 else float(self.values[i])

    @classmethod
    def zeros(cls, p: ModelParams, t: float = 0.0) -> "CorrelationField":
        lat = TriangleLattice.for_params(p)
        return cls(np.zeros(lat.size), lat, t)


def density_generator_apply(f, p: ModelParams) -> np.ndarray:
    """Delta_N^i f at the interior sites; f is given on {0..N}."""
    vals = f.values if isinstance(f, DensityProfile) else np.asarray(f, dtype=float)
    if vals.shape != (p.N + 1,):
        raise DomainError("profile must have N+1 entries")
    c = np.full(p.N, float(p.alpha))  # c[k] is the rate of bond (k, k+1)
    c[0], c[-1] = p.c_left, p.c_right
    grad = np.diff(vals)
    return c[1:] * grad[1:] - c[:-1] * grad[:-1]


class DensitySolver:
    """Exact solution of d/dt rho = N^2 Delta_N^i rho through the eigenbasis of the
    symmetric tridiagonal operator."""

    def __init__(self, rho0, p: ModelParams):
        self.p = p
        A, b = density_operator(p)
        self._A = A
        Ad = A.toarray()
        self.steady = stationary_profile(p).profile.interior
        lam, V = sla.eigh(Ad)
        self._lam = lam * float(p.N) ** 2
        self._V = V
        r0 = rho0.interior if isinstance(rho0, DensityProfile) else np.asarray(rho0, float)
        if r0.shape == (p.N + 1,):
            r0 = r0[1:-1]
        if r0.shape != (p.N - 1,):
            raise DomainError("initial density has the wrong size")
        self.coef = V.T @ (r0 - self.steady)

    def interior(self, t: float) -> np.ndarray:
        return self.steady + self._V @ (np.exp(self._lam * t) * self.coef)

    def integral(self, t: float) -> np.ndarray:
        """int_0^t rho_s(x) ds at the interior sites."""
        lam = self._lam
        w = np.expm1(lam * t) / lam
        return self.steady * t + self._V @ (w * self.coef)

    def __call__(self, t: float) -> DensityProfile:
        return DensityProfile.from_interior(self.interior(t), self.p, t)

    def propagator(self, tau: float) -> np.ndarray:
        """Matrix exp(tau N^2 A) of the absorbed one-particle walk."""
        return (self._V * np.exp(self._lam * tau)) @ self._V.T

    def propagator_integral(self, T: float) -> np.ndarray:
        """int_0^T exp(tau N^2 A) d tau."""
        lam = self._lam
        w = np.expm1(lam * T) / lam
        return (self._V * w) @ self._V.T


def evolve_density(rho0, t: float, p: ModelParams) -> DensityProfile:
    if t < 0:
        raise DomainError("time must be non-negative")
    return DensitySolver(rho0, p)(t)


def stationary_profile(p: ModelParams) -> StationaryCoefficients:
    """Direct tridiagonal solve of Delta_N^i rho = 0, fitted to a x + b."""
    n = p.N - 1
    if p.rho_l == p.rho_r:  # equal reservoirs: the constant profile, exactly
        return StationaryCoefficients(0.0, p.rho_l, DensityProfile.from_interior(np.full(n, p.rho_l), p))
    A, b = density_operator(p)
    ab = np.zeros((3, n))
    ab[0, 1:] = A.diagonal(1)
    ab[1] = A.diagonal()
    ab[2, :-1] = A.diagonal(-1)
    try:
        interior = sla.solve_banded((1, 1), ab, -b)
    except (sla.LinAlgError, ValueError) as exc:
        raise SolverError(f"stationary solve failed: {exc}") from exc
    prof = DensityProfile.from_interior(interior, p)
    a_N = float(interior[1] - interior[0]) if n > 1 else 0.0
    b_N = float(interior[0] - a_N)
    return StationaryCoefficients(a_N, b_N, prof)


def closed_form_coefficients(p: ModelParams) -> tuple[float, float]:
    """Printed (a_N, b_N); undefined when N^theta equals lambda^l."""
    Nt = float(p.N) ** p.theta
    ll, lr, rl, rr, N = p.lambda_l, p.lambda_r, p.rho_l, p.rho_r, p.N
    if np.isclose(Nt, ll, rtol=0, atol=1e-14):
        raise DomainError("closed form degenerates when N^theta = lambda^l")
    num = lr * rr * (Nt - ll) + ll * rl * (Nt + (N - 1) * lr)
    den = ll * lr * (N - 1) + ll * Nt + lr * (Nt - ll)
    b = num / den
    a = ll * (b - rl) / (Nt - ll)
    return a, b


def correlation_source(rho, p: ModelParams, lattice: TriangleLattice | None = None) -> np.ndarray:
    """g(x, x+1) = -(N (rho(x+1) - rho(x)))^2 on D_N^+, zero elsewhere."""
    vals = rho.values if isinstance(rho, DensityProfile) else np.asarray(rho, float)
    lat = lattice or TriangleLattice.for_params(p)
    g = np.zeros(lat.size)
    up = lat.upper_diagonal
    x = lat.points[up, 0]
    g[up] = -((vals[x + 1] - vals[x]) * p.N) ** 2
    return g


def correlation_generator_apply(phi: CorrelationField, p: ModelParams) -> np.ndarray:
    """Delta_N^i phi on the triangle (without the N^2 factor)."""
    return triangle_operator(p, phi.lattice) @ phi.values


def _source_path(solver: DensitySolver, lat: TriangleLattice):
    up = lat.upper_diagonal
    x = lat.points[up, 0]
    p = solver.p
    full = np.empty(p.N + 1)
    full[0], full[-1] = p.rho_l, p.rho_r

    def g(t):
        full[1:-1] = solver.interior(t)
        out = np.zeros(lat.size)
        out[up] = -((full[x + 1] - full[x]) * p.N) ** 2
        return out

    return g


def evolve_correlation(
    phi0: CorrelationField,
    rho_path: DensitySolver,
    t,
    p: ModelParams,
    *,
    t0: float = 0.0,
    rtol: float = RTOL,
    atol: float = ATOL,
):
    """Solve d/dt phi = N^2 Delta_N^i phi + g_t 1_{D_N^+} from time t0.

    ``t`` may be a scalar (returns one field) or a sequence of times (returns a list).
    """
    lat = phi0.lattice
    if p.alpha == 1 and lat.diagonal:
        raise DomainError("alpha = 1 has no extended diagonal")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < t0):
        raise DomainError("requested times precede the initial time")
    A = (triangle_operator(p, lat) * float(p.N) ** 2).tocsc()
    g = _source_path(rho_path, lat)
    out = []
    t_end = float(times.max())
    if t_end == t0:
        out = [CorrelationField(phi0.values.copy(), lat, t0) for _ in times]
    else:
        sol = solve_ivp(
            lambda s, y: A @ y + g(s),
            (t0, t_end),
            phi0.values,
            method="Radau",
            t_eval=np.unique(times),
            jac=A,
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise SolverError(sol.message)
        lookup = {float(s): sol.y[:, k] for k, s in enumerate(sol.t)}
        out = [
            CorrelationField(phi0.values.copy() if s == t0 else lookup[float(s)].copy(), lat, float(s))
            for s in times
        ]
    return out[0] if np.ndim(t) == 0 else out


def variance_from_extended(phi_diag, rho, p: ModelParams):
    """Var(eta(x)) from the extended diagonal value."""
    al = p.alpha
    base = np.asarray(rho) * (al - np.asarray(rho)) / al
    if al == 1:
        return base
    return base + (al - 1.0) / al * np.asarray(phi_diag)


def covariance_matrix(phi: CorrelationField | None, rho: DensityProfile, p: ModelParams) -> np.ndarray:
    """E[bar eta(x) bar eta(y)] on sites 1..N-1 with true variances on the diagonal."""
    if phi is None:
        C = np.zeros((p.N - 1, p.N - 1))
        diag = np.zeros(p.N - 1)
    else:
        M = phi.matrix()[1:-1, 1:-1]
        C = M.copy()
        diag = np.diag(M) if phi.lattice.diagonal else np.zeros(p.N - 1)
    np.fill_diagonal(C, variance_from_extended(diag, rho.interior, p))
    return C


def two_time_correlation(phi_slice: np.ndarray, v: float, r: float, p: ModelParams, solver: DensitySolver | None = None) -> np.ndarray:
    """Propagate E[bar eta_v(x) bar eta_v(z)] to E[bar eta_v(x) bar eta_r(y)].

    Rows index x (frozen at time v), columns index y (evolved to time r).
    """
    if r < v:
        raise DomainError("r must not precede v")
    C = np.asarray(phi_slice, dtype=float)
    if r == v:
        return C.copy()
    s = solver or DensitySolver(np.full(p.N - 1, p.rho_l), p)
    return C @ s.propagator(r - v).T


def robin_stationary(u, p: ModelParams) -> np.ndarray:
    """rho_bar_{mu_N}(u) of the admissible-profile construction."""
    Nt = float(p.N) ** p.theta
    if np.isclose(Nt, p.lambda_l, rtol=0, atol=1e-14):
        coeff = stationary_profile(p)
        return coeff.b + coeff.a * p.N * np.asarray(u, float)
    mu = p.N * p.lambda_l / (Nt - p.lambda_l)
    u = np.asarray(u, dtype=float)
    return (p.rho_r + p.rho_l * (1 + mu)) / (2 + mu) + mu * (p.rho_r - p.rho_l) * u / (2 + mu)


def admissible_initial_profile(f: Callable, p: ModelParams) -> np.ndarray:
    """g_N(x/N) = rho_bar(x/N) + f(x/N) for x = 0..N."""
    if not np.isclose(p.lambda_l, p.lambda_r):
        raise DomainError("the closed Robin profile needs lambda^l = lambda^r")
    u = np.arange(p.N + 1) / p.N
    g = robin_stationary(u, p) + np.asarray(f(u), dtype=float)
    if np.any(g[1:-1] < 0) or np.any(g[1:-1] > p.alpha):
        raise DomainError("admissible profile leaves [0, alpha]")
    return g


@dataclass(frozen=True)
class HypothesisReport:
    N: int
    max_offdiag: float
    max_diag_deviation: float
    boundary_weighted: float
    bulk_scaled: float  # N * max_offdiag
    diag_scaled: float  # N * max_diag_deviation

    def as_dict(self) -> dict:
        return self.__dict__.copy()


def hypothesis_check(init, p: ModelParams) -> HypothesisReport:
    """Size of the initial correlations entering the decay hypotheses.

    ``init`` is either an ``ExactMoments`` object (exact distribution) or a
    tuple ``(density, pair, factorial)`` of estimated raw moments.
    """
    if hasattr(init, "density"):
        rho, pair, fact = init.density, init.pair, init.factorial
    else:
        rho, pair, fact = (np.asarray(a, float) for a in init)
    off = pair - np.outer(rho, rho)
    np.fill_diagonal(off, 0.0)
    al = p.alpha
    dev = np.abs(al * fact - (al - 1.0) * rho**2)
    if al == 1:
        dev = np.zeros_like(dev)
    bw = float(max(np.abs(off[0]).max(), np.abs(off[-1]).max()))
    mo = float(np.abs(off).max())
    md = float(dev.max())
    return HypothesisReport(p.N, mo, md, bw, p.N * mo, p.N * md)
