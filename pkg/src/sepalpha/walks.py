"""Occupation times and kernels of the triangle and one-particle walks, and
discrete maximum-principle checkers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spl
from scipy.optimize import minimize_scalar

from .errors import DomainError, PreconditionError, SolverError
from .lattice import TriangleLattice, density_operator, triangle_operator, triangle_weights
from .model import ModelParams
from .spectral import DiscreteSpectrum, discrete_kernel_matrix


@dataclass(frozen=True)
class OccupationSolution:
    values: np.ndarray
    lattice: TriangleLattice

    def at(self, x: int, y: int) -> float:
        i = self.lattice.index(x, y)
        return 0.0 if i < 0 else float(self.values[i])

    def matrix(self) -> np.ndarray:
        return self.lattice.to_matrix(self.values)


def potential_field(p: ModelParams, lattice: TriangleLattice | None = None) -> np.ndarray:
    """Killing potential -(alpha N^2 / N^theta)[l^l 1(x=1) + l^r 1(y=N-1)] on V_N."""
    lat = lattice or TriangleLattice.for_params(p)
    x, y = lat.points.T
    return -(p.alpha * p.N**2 * p.scale) * (p.lambda_l * (x == 1) + p.lambda_r * (y == p.N - 1))


def occupation_closed_form(N: int, alpha: int) -> OccupationSolution:
    """Expected time on D_N^+ of the absorbed walk when all bond rates equal alpha."""
    lat = TriangleLattice(N, True)
    x, y = lat.points.T.astype(float)
    vals = (N - y) * x / (N**2 * (alpha * N - 1.0)) - (x == y) / (2.0 * N * (alpha * N - 1.0))
    return OccupationSolution(vals, lat)


def occupation_solve(p: ModelParams) -> OccupationSolution:
    """Solve N^2 Delta_N^i T = -1(D_N^+) with T = 0 on the boundary.

    The walk lives on the full triangle including the diagonal; for alpha = 1
    the diagonal is not reachable from off-diagonal starts.
    """
    lat = TriangleLattice(p.N, True)
    A = (triangle_operator(p, lat) * float(p.N) ** 2).tocsc()
    rhs = -lat.upper_diagonal.astype(float)
    T = spl.spsolve(A, rhs)
    # normwise backward error; T grows like N^(theta-2) for theta > 1
    norm_a = float(abs(A).sum(axis=1).max())
    res = np.abs(A @ T - rhs).max() / (norm_a * np.abs(T).max() + 1.0)
    if not np.isfinite(res) or res > 1e-12:
        raise SolverError(f"occupation backward error {res:.3e}")
    return OccupationSolution(T, lat)


class ReflectedWalk:
    """Triangle walk reflected at the boundary; exact evolution via its
    reversible symmetrisation."""

    def __init__(self, p: ModelParams):
        self.p = p
        self.lattice = TriangleLattice.for_params(p)
        C = triangle_operator(p, self.lattice, reflecting=True).toarray() * float(p.N) ** 2
        w = triangle_weights(p, self.lattice)
        sq = np.sqrt(w)
        S = (sq[:, None] * C) / sq[None, :]
        asym = np.abs(S - S.T).max()
        if asym > 1e-8 * max(1.0, np.abs(S).max()):
            raise SolverError(f"reflected generator is not reversible (asymmetry {asym:.2e})")
        mu, U = sla.eigh(0.5 * (S + S.T))
        self._mu = np.minimum(mu, 0.0)
        self._left = U / sq[:, None]  # D^{-1/2} U
        self._right = U.T @ (sq * self.lattice.upper_diagonal)  # U^T D^{1/2} 1_{D+}

    def occupation(self, t: float) -> np.ndarray:
        """int_0^t P[X_s in D_N^+] ds for every start point."""
        if t < 0:
            raise DomainError("time must be non-negative")
        mu = self._mu
        small = np.abs(mu * t) < 1e-12
        w = np.where(small, t, np.expm1(mu * t) / np.where(small, 1.0, mu))
        return self._left @ (w * self._right)


def reflected_occupation(start: tuple[int, int], t: float, p: ModelParams, walk: ReflectedWalk | None = None) -> float:
    x, y = start
    if x == 0 or y == p.N:
        raise DomainError("start must be off the boundary")
    rw = walk or ReflectedWalk(p)
    i = rw.lattice.index(x, y)
    if i < 0:
        raise DomainError(f"{start} is not a triangle point")
    return float(rw.occupation(t)[i])


def reflected_occupation_mc(start, t: float, p: ModelParams, n_paths: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of the reflected occupation time."""
    lat = TriangleLattice.for_params(p)
    C = triangle_operator(p, lat, reflecting=True).tocsr() * float(p.N) ** 2
    n = lat.size
    out_rate = -C.diagonal()
    # per-state jump tables
    targets = [C.indices[C.indptr[i] : C.indptr[i + 1]] for i in range(n)]
    probs = [C.data[C.indptr[i] : C.indptr[i + 1]] for i in range(n)]
    tabs_t, tabs_c = [], []
    for i in range(n):
        keep = targets[i] != i
        tabs_t.append(targets[i][keep])
        tabs_c.append(np.cumsum(probs[i][keep]) / out_rate[i])
    kmax = max(len(a) for a in tabs_t)
    T = np.zeros((n, kmax), dtype=np.int64)
    Cum = np.ones((n, kmax))
    for i in range(n):
        T[i, : len(tabs_t[i])] = tabs_t[i]
        T[i, len(tabs_t[i]) :] = tabs_t[i][-1]
        Cum[i, : len(tabs_c[i])] = tabs_c[i]
    on_d = lat.upper_diagonal
    rng = np.random.default_rng(seed)
    state = np.full(n_paths, lat.index(*start))
    clock = np.zeros(n_paths)
    occ = np.zeros(n_paths)
    active = np.ones(n_paths, bool)
    while active.any():
        idx = np.flatnonzero(active)
        s = state[idx]
        hold = rng.exponential(1.0 / out_rate[s])
        dwell = np.minimum(hold, t - clock[idx])
        occ[idx] += dwell * on_d[s]
        clock[idx] += hold
        done = clock[idx] >= t
        active[idx[done]] = False
        go = idx[~done]
        sg = state[go]
        u = rng.random(go.size)
        k = (Cum[sg] < u[:, None]).sum(axis=1)
        state[go] = T[sg, np.minimum(k, kmax - 1)]
    return float(occ.mean()), float(occ.std(ddof=1) / np.sqrt(n_paths))


def kernel_matrix(t: float, p: ModelParams) -> np.ndarray:
    """P^{N,theta}_t as an (N-1)x(N-1) matrix, rows indexed by the start site."""
    if t < 0:
        raise DomainError("time must be non-negative")
    A, _ = density_operator(p)
    P = sla.expm(A.toarray() * (float(p.N) ** 2 * t))
    return np.clip(P, 0.0, None)


def transition_kernel(x: int, y: int, t: float, p: ModelParams) -> float:
    for s in (x, y):
        if not 1 <= s <= p.N - 1:
            raise DomainError(f"site {s} outside 1..{p.N - 1}")
    return float(kernel_matrix(t, p)[x - 1, y - 1])


@dataclass
class DominationReport:
    samples: int
    min_margin: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _sup_reference(row: int, y: int, t: float, spec: DiscreteSpectrum, alpha: int) -> float:
    """sup_{0<=s<=t} P~_s(row, y): log/linear grid, then a bounded local search."""
    if t == 0:
        return float(row == y)
    coef = spec.vectors[:, row - 1] * spec.vectors[:, y - 1]
    rates = alpha * spec.eigenvalues

    def kern(s):
        return np.exp(-np.multiply.outer(np.atleast_1d(s), rates)) @ coef

    grid = np.unique(np.concatenate([[0.0], np.geomspace(min(1e-8, t), t, 300), np.linspace(0, t, 100)]))
    vals = kern(grid)
    k = int(np.argmax(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best = float(vals[k])
    if hi > lo:
        res = minimize_scalar(lambda s: -kern(s)[0], bounds=(lo, hi), method="bounded", options={"xatol": 1e-14})
        best = max(best, -float(res.fun))
    return best


def kernel_domination_check(
    samples: Iterable[Sequence[float]], p: ModelParams, tol: float = 1e-12, corrected: bool = False
) -> DominationReport:
    """Compare P^{N,theta} with the reference-kernel bound.

    Each sample is (x, y, t) or (x, y, t, theta); a fourth entry overrides p.theta.
    The default tests the bound with the reference kernel evaluated at time t.
    ``corrected=True`` tests the version obtained from the parabolic maximum
    principle: the boundary terms use sup_{s<=t} P~_s and the positive part of
    N^theta/lambda - 1 for every theta.
    """
    rep = DominationReport(0, np.inf)
    cache_ref: dict = {}
    spec = DiscreteSpectrum.build(p.N)
    for s in samples:
        x, y, t = int(s[0]), int(s[1]), float(s[2])
        q = p.replace(theta=float(s[3])) if len(s) > 3 else p
        P = kernel_matrix(t, q)[x - 1, y - 1]
        if t not in cache_ref:
            cache_ref[t] = discrete_kernel_matrix(t, p.N, p.alpha)
        R = cache_ref[t]
        bound = R[x - 1, y - 1]
        Nt = float(q.N) ** q.theta
        kl, kr = Nt / q.lambda_l - 1.0, Nt / q.lambda_r - 1.0
        if corrected:
            if kl > 0:
                bound += kl * _sup_reference(1, y, t, spec, q.alpha)
            if kr > 0:
                bound += kr * _sup_reference(q.N - 1, y, t, spec, q.alpha)
        elif q.theta >= 0:
            bound += kl * R[0, y - 1] + kr * R[q.N - 2, y - 1]
        margin = bound - P
        rep.samples += 1
        rep.min_margin = min(rep.min_margin, margin)
        if margin < -tol:
            rep.violations.append({"x": x, "y": y, "t": t, "theta": q.theta, "margin": float(margin)})
    return rep


# --- maximum principles -------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    passed: bool
    excess: float
    detail: str = ""


def _dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op, dtype=float)


def max_principle_elliptic(op, f, boundary, tol: float = 1e-12) -> Verdict:
    """Interior extrema of an op-harmonic f are attained on the boundary."""
    L = _dense(op)
    f = np.asarray(f, dtype=float)
    bnd = np.zeros(len(f), bool)
    bnd[np.asarray(boundary, dtype=int)] = True
    inner = ~bnd
    off = L[inner].copy()
    off[:, np.flatnonzero(inner)] -= np.diag(np.diag(L)[inner])
    if np.any(off < 0):
        raise PreconditionError("operator has negative off-diagonal rates")
    res = np.abs(L[inner] @ f).max(initial=0.0)
    if res > 1e-9:
        raise PreconditionError(f"harmonicity residual {res:.3e} exceeds 1e-9")
    if not inner.any():
        return Verdict(True, 0.0, "no interior")
    hi = f[inner].max() - f[bnd].max()
    lo = f[bnd].min() - f[inner].min()
    excess = max(hi, lo)
    return Verdict(excess <= tol, float(excess))


def max_principle_markov(op, f, absorbing, tol: float = 1e-12) -> Verdict:
    """op f >= 0 in the interior and f = 0 on the absorbing set imply f <= 0."""
    L = _dense(op)
    f = np.asarray(f, dtype=float)
    dead = np.zeros(len(f), bool)
    dead[np.asarray(absorbing, dtype=int)] = True
    if np.abs(f[dead]).max(initial=0.0) > tol:
        raise PreconditionError("f does not vanish on the absorbing set")
    Lf = L[~dead] @ f
    if Lf.size and Lf.min() < -1e-9:
        raise PreconditionError(f"op f takes negative values (min {Lf.min():.3e})")
    excess = f[~dead].max(initial=0.0)
    return Verdict(excess <= tol, float(excess))


@dataclass(frozen=True)
class ParabolicPath:
    times: np.ndarray
    values: np.ndarray  # (len(times), n)


def parabolic_path(op, f0, times, source=None) -> ParabolicPath:
    """Implicit Euler trajectory of d_t f = op f + source with zero lateral boundary.

    ``op`` acts on the interior nodes only (killing at the boundary is encoded in
    its row sums).  ``source`` is a callable of time or a fixed vector.
    """
    L = sp.csc_matrix(op)
    n = L.shape[0]
    times = np.asarray(times, dtype=float)
    vals = np.empty((len(times), n))
    vals[0] = np.asarray(f0, dtype=float)
    I = sp.identity(n, format="csc")
    cache = {}
    for k in range(1, len(times)):
        dt = times[k] - times[k - 1]
        key = round(dt, 15)
        if key not in cache:
            cache[key] = spl.factorized((I - dt * L).tocsc())
        h = np.zeros(n) if source is None else np.asarray(source(times[k]) if callable(source) else source, float)
        vals[k] = cache[key](vals[k - 1] + dt * h)
    return ParabolicPath(times, vals)


def max_principle_parabolic(op, f0, path: ParabolicPath, tol: float = 1e-12) -> Verdict:
    """Sub-solutions stay below max(0, max f0)."""
    L = sp.csr_matrix(op)
    f0 = np.asarray(f0, dtype=float)
    if np.abs(path.values[0] - f0).max() > tol:
        raise PreconditionError("path does not start at f0")
    worst = -np.inf
    for k in range(1, len(path.times)):
        dt = path.times[k] - path.times[k - 1]
        r = (path.values[k] - path.values[k - 1]) / dt - L @ path.values[k]
        worst = max(worst, r.max())
    if worst > 1e-9:
        raise PreconditionError(f"sub-solution residual {worst:.3e} exceeds 1e-9")
    bound = max(0.0, f0.max())
    excess = path.values.max() - bound
    return Verdict(excess <= tol, float(excess))
