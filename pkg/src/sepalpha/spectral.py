"""Continuum heat semigroups on [0, 1] and the discrete reference kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl
from scipy.optimize import brentq

from .errors import DomainError
from .model import ModelParams

Regime = Literal["dirichlet", "robin", "neumann"]

# Gauss-Legendre rule used for projections onto eigenmodes
_GL_X, _GL_W = np.polynomial.legendre.leggauss(400)
_GL_PIECES = 8


def regime_for(theta: float) -> Regime:
    if theta < 1:
        return "dirichlet"
    if theta == 1:
        return "robin"
    return "neumann"


def _quad_nodes() -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    h = 1.0 / _GL_PIECES
    xs = np.concatenate([(k + 0.5) * h + 0.5 * h * _GL_X for k in range(_GL_PIECES)])
    ws = np.concatenate([0.5 * h * _GL_W] * _GL_PIECES)
    return xs, ws


QUAD_U, QUAD_W = _quad_nodes()


def robin_defect(x, lambda_l: float, lambda_r: float, printed: bool = False):
    """tan(x) minus the right-hand side of the Robin eigenvalue equation.

    The Sturm-Liouville problem f'' = -b^2 f, f'(0) = l f(0), f'(1) = -r f(1)
    gives tan(b) = (l + r) b / (b^2 - l r).  ``printed=True`` uses the variant
    with b^2 + l r in the denominator.
    """
    x = np.asarray(x, dtype=float)
    s = 1.0 if printed else -1.0
    return np.tan(x) - (lambda_l + lambda_r) * x / (x**2 + s * lambda_l * lambda_r)


def _cleared_defect(x, ll, lr, printed):
    # multiply through by cos(x)(x^2 -+ l r) to remove poles
    s = 1.0 if printed else -1.0
    return np.sin(x) * (x**2 + s * ll * lr) - (ll + lr) * x * np.cos(x)


def robin_roots(lambda_l: float, lambda_r: float, K: int, printed: bool = False) -> np.ndarray:
    """First K positive roots of the Robin eigenvalue equation."""
    if K < 1:
        raise DomainError("K must be positive")
    for v in (lambda_l, lambda_r):
        if not 0 < v <= 1:
            raise DomainError("Robin coefficients must lie in (0, 1]")
    roots = []
    f = lambda x: _cleared_defect(x, lambda_l, lambda_r, printed)
    for k in range(1, K + 1):
        lo = (k - 1) * math.pi
        hi = lo + math.pi / 2
        a = lo + 1e-15 if k > 1 else 1e-12
        b = hi - 1e-12
        if not printed and k == 1:
            # the first root lies above sqrt(l r) where the right side turns positive
            a = max(a, math.sqrt(lambda_l * lambda_r) + 1e-14)
        roots.append(brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500))
    return np.array(roots)


def robin_mode(beta: float, lambda_l: float):
    """Unnormalised mode (l/b) sin(b u) + cos(b u) and its derivative."""

    def f(u):
        u = np.asarray(u, dtype=float)
        return lambda_l / beta * np.sin(beta * u) + np.cos(beta * u)

    def df(u):
        u = np.asarray(u, dtype=float)
        return lambda_l * np.cos(beta * u) - beta * np.sin(beta * u)

    return f, df


@dataclass(frozen=True)
class SemigroupExpansion:
    """Eigen-series of S_t for one boundary regime.

    ``freqs`` are the b_k (modes decay as exp(-alpha b_k^2 t)),
    ``coeffs`` the projections of the expanded function.
    """

    regime: Regime
    alpha: int
    freqs: np.ndarray
    coeffs: np.ndarray
    lambda_l: float = 1.0
    lambda_r: float = 1.0
    norms: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.freqs)

    def _basis(self, u: np.ndarray, deriv: int = 0) -> np.ndarray:
        u = np.asarray(u, dtype=float)[:, None]
        b = self.freqs[None, :]
        if self.regime == "dirichlet":
            return np.sin(b * u) if deriv == 0 else b * np.cos(b * u)
        if self.regime == "neumann":
            return np.cos(b * u) if deriv == 0 else -b * np.sin(b * u)
        ll = self.lambda_l
        if deriv == 0:
            return ll / b * np.sin(b * u) + np.cos(b * u)
        return ll * np.cos(b * u) - b * np.sin(b * u)

    def evaluate(self, u, t: float = 0.0, deriv: int = 0) -> np.ndarray:
        decay = np.exp(-self.alpha * self.freqs**2 * t)
        return self._basis(u, deriv) @ (self.coeffs * decay)

    def evolve(self, t: float) -> "SemigroupExpansion":
        decay = np.exp(-self.alpha * self.freqs**2 * t)
        return SemigroupExpansion(
            self.regime, self.alpha, self.freqs, self.coeffs * decay, self.lambda_l, self.lambda_r, self.norms
        )


def expand(phi: Callable, regime: Regime, alpha: int, K: int, lambda_l: float = 1.0, lambda_r: float = 1.0) -> SemigroupExpansion:
    """Project phi onto the first K eigenmodes of the regime."""
    vals = np.asarray(phi(QUAD_U), dtype=float) * np.ones_like(QUAD_U)
    if regime == "dirichlet":
        freqs = math.pi * np.arange(1, K + 1)
        coeffs = 2.0 * (np.sin(np.outer(QUAD_U, freqs)).T @ (QUAD_W * vals))
        return SemigroupExpansion(regime, alpha, freqs, coeffs)
    if regime == "neumann":
        freqs = math.pi * np.arange(0, K)
        coeffs = 2.0 * (np.cos(np.outer(QUAD_U, freqs)).T @ (QUAD_W * vals))
        coeffs[0] /= 2.0
        return SemigroupExpansion(regime, alpha, freqs, coeffs)
    if regime == "robin":
        freqs = robin_roots(lambda_l, lambda_r, K)
        tmp = SemigroupExpansion(regime, alpha, freqs, np.ones(K), lambda_l, lambda_r)
        B = tmp._basis(QUAD_U)
        norms = (B**2).T @ QUAD_W
        coeffs = (B.T @ (QUAD_W * vals)) / norms
        return SemigroupExpansion(regime, alpha, freqs, coeffs, lambda_l, lambda_r, norms)
    raise DomainError(f"unknown regime {regime!r}")


def semigroup_apply(phi: Callable, t: float, p: ModelParams, grid=None, K: int = 64, deriv: int = 0) -> np.ndarray:
    """S_t phi on a grid (default: 513 uniform points on [0, 1])."""
    if t < 0:
        raise DomainError("time must be non-negative")
    u = np.linspace(0.0, 1.0, 513) if grid is None else np.asarray(grid, dtype=float)
    if t == 0 and deriv == 0:
        return np.asarray(phi(u), dtype=float) * np.ones_like(u)
    exp = expand(phi, regime_for(p.theta), p.alpha, K, p.lambda_l, p.lambda_r)
    return exp.evaluate(u, t, deriv)


def heat_crank_nicolson(f0: np.ndarray, t: float, p: ModelParams, steps: int = 2000) -> np.ndarray:
    """Reference finite-difference solve of d_t rho = alpha rho'' on a uniform grid.

    Dirichlet and Neumann/Robin conditions use second-order ghost points.
    """
    M = len(f0) - 1
    h = 1.0 / M
    reg = regime_for(p.theta)
    n = M + 1
    main = np.full(n, -2.0)
    up = np.ones(n - 1)
    lo = np.ones(n - 1)
    if reg in ("neumann", "robin"):
        up[0] = 2.0
        lo[-1] = 2.0
        if reg == "robin":
            # ghost: f_{-1} = f_1 - 2h l f_0 ; f_{M+1} = f_{M-1} - 2h r f_M
            main[0] -= 2 * h * p.lambda_l
            main[-1] -= 2 * h * p.lambda_r
    if reg == "dirichlet":
        main[0] = main[-1] = 0.0
        up[0] = lo[-1] = 0.0
    L = sp.diags([lo, main, up], [-1, 0, 1], format="csc") * (p.alpha / h**2)
    I = sp.identity(n, format="csc")
    dt = t / steps
    # four quarter-step implicit Euler start-up steps damp CN oscillations
    f = np.asarray(f0, dtype=float).copy()
    if reg == "dirichlet":
        f[0] = f[-1] = 0.0
    be = spl.factorized((I - 0.25 * dt * L).tocsc())
    for _ in range(4):
        f = be(f)
        if reg == "dirichlet":
            f[0] = f[-1] = 0.0
    lhs = spl.factorized((I - 0.5 * dt * L).tocsc())
    rhs = (I + 0.5 * dt * L).tocsr()
    for _ in range(steps - 1):
        f = lhs(rhs @ f)
        if reg == "dirichlet":
            f[0] = f[-1] = 0.0
    return f


@dataclass(frozen=True)
class DiscreteSpectrum:
    N: int
    eigenvalues: np.ndarray  # 4 N^2 sin^2(pi l / 2N)
    vectors: np.ndarray  # vectors[l-1, x-1] = sqrt(2/N) sin(pi l x / N)

    @classmethod
    def build(cls, N: int) -> "DiscreteSpectrum":
        l = np.arange(1, N)
        lam = 4.0 * N**2 * np.sin(np.pi * l / (2 * N)) ** 2
        V = math.sqrt(2.0 / N) * np.sin(np.pi * np.outer(l, l) / N)
        return cls(N, lam, V)


def discrete_kernel(x, y, t: float, N: int, alpha: int) -> np.ndarray:
    """Reference kernel P~^{N,0}_t(x, y) with bulk and boundary rates alpha."""
    spec = DiscreteSpectrum.build(N)
    x = np.asarray(x) - 1
    y = np.asarray(y) - 1
    w = np.exp(-alpha * spec.eigenvalues * t)
    return np.einsum("l,l...,l...->...", w, spec.vectors[:, x], spec.vectors[:, y])


def discrete_kernel_matrix(t: float, N: int, alpha: int) -> np.ndarray:
    spec = DiscreteSpectrum.build(N)
    w = np.exp(-alpha * spec.eigenvalues * t)
    return (spec.vectors.T * w) @ spec.vectors


def psi(u):
    """(e^{-u} - 1 + u) / u^2 with the series branch near zero."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise DomainError("psi needs u >= 0")
    small = u_arr < 1e-4
    safe = np.where(small, 1.0, u_arr)
    direct = (np.expm1(-safe) + safe) / safe**2
    series = 0.5 - u_arr / 6.0 + u_arr**2 / 24.0 - u_arr**3 / 120.0
    out = np.where(small, series, direct)
    return float(out) if np.ndim(u) == 0 else out


@dataclass(frozen=True)
class KernelIntegrals:
    diagonal: float
    boundary: float
    cross: float


def kernel_time_integrals(window, t: float, N: int, alpha: int) -> KernelIntegrals:
    """Double time integrals of P~^{N,0} summed over a window of sites.

    diagonal = sum_{x in W} I(x, x); boundary = sum_{x in W} [I(x, 1) + I(x, N-1)];
    cross = sum_{x != y in W} I(x, y), where I(x, y) = int_0^t int_0^s P~_{s-v}(x, y) dv ds.
    """
    W = np.asarray(list(window), dtype=int)
    if W.size and (W.min() < 1 or W.max() > N - 1):
        raise DomainError("window must lie inside 1..N-1")
    if t == 0 or W.size == 0:
        return KernelIntegrals(0.0, 0.0, 0.0)
    spec = DiscreteSpectrum.build(N)
    w = t**2 * psi(alpha * spec.eigenvalues * t)
    Vw = spec.vectors[:, W - 1]  # (l, |W|)
    diag = float(np.sum(w[:, None] * Vw**2))
    bnd = float(np.sum(w[:, None] * Vw * (spec.vectors[:, [0]] + spec.vectors[:, [N - 2]])))
    s = Vw.sum(axis=1)
    cross = float(np.sum(w * s**2)) - diag
    return KernelIntegrals(diag, bnd, cross)
