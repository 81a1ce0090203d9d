"""Kinetic Monte Carlo for SEP(alpha) with reservoirs at the diffusive time scale.

Each replica draws uniforms from a counter-based stream: the k-th draw is
SplitMix64(key + k * golden), with the key derived from
(master seed, replica index, stream) through numpy's SeedSequence.  Replicas
are therefore reproducible in any execution order and thread count.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .errors import DomainError
from .model import Configuration, ModelParams

# older system TBB builds trigger a harmless warning at the first parallel call
warnings.filterwarnings("ignore", message="The TBB threading layer")

STREAM_INIT = 0
STREAM_DYNAMICS = 1

# move kinds in event logs
RIGHT, LEFT, INJECT_L, REMOVE_L, INJECT_R, REMOVE_R = range(6)


def replica_key(seed: int, replica: int, stream: int) -> np.uint64:
    ss = np.random.SeedSequence([int(seed), int(replica), int(stream)])
    return ss.generate_state(1, dtype=np.uint64)[0]


def replica_rng(seed: int, replica: int, stream: int = STREAM_INIT) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(replica), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def _profile_values(profile, p: ModelParams) -> np.ndarray:
    u = np.arange(1, p.N) / p.N
    vals = profile(u) if callable(profile) else profile
    vals = np.asarray(vals, dtype=float) * np.ones(p.N - 1)
    if vals.shape != (p.N - 1,):
        raise DomainError("profile must give one value per site")
    if np.any(vals < 0) or np.any(vals > p.alpha):
        raise DomainError(f"profile values must lie in [0, {p.alpha}]")
    return vals


def sample_local_gibbs(profile, p: ModelParams, rng: np.random.Generator) -> Configuration:
    """Independent Binomial(alpha, gamma0(x/N)/alpha) occupations."""
    vals = _profile_values(profile, p)
    return Configuration(rng.binomial(p.alpha, vals / p.alpha), p.alpha)


# ---------------------------------------------------------------- numba core

@nb.njit(cache=True, inline="always")
def _uniform(key, counter):
    z = key + np.uint64(counter) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    # 53 random bits in (0, 1]
    return (np.float64(z >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def _fen_add(tree, i, delta):
    m = tree.size - 1
    i += 1
    while i <= m:
        tree[i] += delta
        i += i & (-i)


@nb.njit(cache=True)
def _fen_build(tree, rates):
    tree[:] = 0.0
    for i in range(rates.size):
        _fen_add(tree, i, rates[i])


@nb.njit(cache=True)
def _fen_search(tree, target, top):
    # smallest index whose prefix sum exceeds target
    pos = 0
    step = top
    m = tree.size - 1
    while step > 0:
        nxt = pos + step
        if nxt <= m and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step >>= 1
    return pos


@nb.njit(cache=True)
def _set_rate(rates, tree, k, value):
    d = value - rates[k]
    if d != 0.0:
        rates[k] = value
        _fen_add(tree, k, d)


@nb.njit(cache=True)
def _refresh_site(eta, i, alpha, res, rates, tree):
    n = eta.size
    for b in (i - 1, i):
        if 0 <= b < n - 1:
            _set_rate(rates, tree, b, eta[b] * (alpha - eta[b + 1]))
            _set_rate(rates, tree, n - 1 + b, eta[b + 1] * (alpha - eta[b]))
    base = 2 * (n - 1)
    if i == 0:
        _set_rate(rates, tree, base, res[0] * (alpha - eta[0]))
        _set_rate(rates, tree, base + 1, res[1] * eta[0])
    if i == n - 1:
        _set_rate(rates, tree, base + 2, res[2] * (alpha - eta[n - 1]))
        _set_rate(rates, tree, base + 3, res[3] * eta[n - 1])


@nb.njit(cache=True)
def _touch(i, t, eta, last, occ):
    occ[i] += eta[i] * (t - last[i])
    last[i] = t


@nb.njit(cache=True)
def _touch_bond(b, t, eta, lastb, bond):
    if 0 <= b < eta.size - 1:
        bond[b] += eta[b] * eta[b + 1] * (t - lastb[b])
        lastb[b] = t


@nb.njit(cache=True)
def _tree_total(tree, top):
    # sum of all entries = prefix up to the last index
    m = tree.size - 1
    s = 0.0
    i = m
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@nb.njit(cache=True)
def _simulate_one(eta0, alpha, res, n2, key, snap_times, want_log):
    """Run one replica; returns final state, snapshots, cumulative integrals and log."""
    n = eta0.size
    eta = eta0.copy()
    M = 2 * (n - 1) + 4
    rates = np.zeros(M)
    tree = np.zeros(M + 1)
    for i in range(n):
        _refresh_site(eta, i, alpha, res, rates, tree)
    top = 1
    while top * 2 <= M:
        top *= 2
    S = snap_times.size
    snaps = np.zeros((S, n), dtype=np.int64)
    occ_out = np.zeros((S, n))
    bond_out = np.zeros((S, max(n - 1, 1)))
    occ = np.zeros(n)
    last = np.zeros(n)
    bond = np.zeros(n - 1)
    lastb = np.zeros(n - 1)
    cap = 1024 if want_log else 1
    log_t = np.empty(cap)
    log_k = np.empty(cap, dtype=np.int8)
    log_x = np.empty(cap, dtype=np.int32)
    nev = 0
    counter = 0
    t = 0.0
    si = 0
    since_rebuild = 0
    while si < S:
        total = rates.sum() if since_rebuild == 0 else _tree_total(tree, top)
        u1 = _uniform(key, counter)
        u2 = _uniform(key, counter + 1)
        counter += 2
        dt = -np.log(u1) / (n2 * total)
        t_next = t + dt
        while si < S and snap_times[si] < t_next:
            ts = snap_times[si]
            for i in range(n):
                snaps[si, i] = eta[i]
                occ_out[si, i] = occ[i] + eta[i] * (ts - last[i])
            for b in range(n - 1):
                bond_out[si, b] = bond[b] + eta[b] * eta[b + 1] * (ts - lastb[b])
            si += 1
        if si >= S:
            break
        t = t_next
        target = (1.0 - u2) * total
        k = _fen_search(tree, target, top)
        if k >= M:
            k = M - 1
        while rates[k] <= 0.0 and k > 0:
            k -= 1
        if rates[k] <= 0.0:
            since_rebuild = 0
            _fen_build(tree, rates)
            continue
        if k < n - 1:
            kind, a, b = 0, k, k + 1
        elif k < 2 * (n - 1):
            kind, a, b = 1, k - (n - 1) + 1, k - (n - 1)
        else:
            kind = 2 + (k - 2 * (n - 1))
            a = 0 if kind < 4 else n - 1
            b = -1
        # flush integrals that change with this move
        for s_ in (a, b):
            if s_ >= 0:
                _touch(s_, t, eta, last, occ)
                _touch_bond(s_ - 1, t, eta, lastb, bond)
                _touch_bond(s_, t, eta, lastb, bond)
        if kind <= 1:
            eta[a] -= 1
            eta[b] += 1
        elif kind == 2 or kind == 4:
            eta[a] += 1
        else:
            eta[a] -= 1
        _refresh_site(eta, a, alpha, res, rates, tree)
        if b >= 0:
            _refresh_site(eta, b, alpha, res, rates, tree)
        if want_log:
            if nev >= log_t.size:
                nt = np.empty(2 * log_t.size)
                nk = np.empty(2 * log_t.size, dtype=np.int8)
                nx = np.empty(2 * log_t.size, dtype=np.int32)
                nt[:nev] = log_t[:nev]
                nk[:nev] = log_k[:nev]
                nx[:nev] = log_x[:nev]
                log_t, log_k, log_x = nt, nk, nx
            log_t[nev] = t
            log_k[nev] = kind
            # site of the moving particle (1-based); for a left jump it is the source
            log_x[nev] = a + 1
        nev += 1
        since_rebuild += 1
        if since_rebuild >= 65536:
            _fen_build(tree, rates)
            since_rebuild = 0
    return eta, snaps, occ_out, bond_out, log_t[:nev] if want_log else log_t[:0], log_k[:nev] if want_log else log_k[:0], log_x[:nev] if want_log else log_x[:0], nev


@nb.njit(cache=True, parallel=True)
def _simulate_many(eta0s, alpha, res, n2, keys, snap_times):
    R, n = eta0s.shape
    S = snap_times.size
    snaps = np.zeros((R, S, n), dtype=np.int64)
    occ = np.zeros((R, S, n))
    bond = np.zeros((R, S, max(n - 1, 1)))
    nev = np.zeros(R, dtype=np.int64)
    for r in nb.prange(R):
        _, s, o, b, _, _, _, ne = _simulate_one(eta0s[r], alpha, res, n2, keys[r], snap_times, False)
        snaps[r] = s
        occ[r] = o
        bond[r] = b
        nev[r] = ne
    return snaps, occ, bond, nev


def _reservoir_vector(p: ModelParams) -> np.ndarray:
    s = p.scale
    return np.array(
        [s * p.lambda_l * p.rho_l, s * p.lambda_l * (p.alpha - p.rho_l), s * p.lambda_r * p.rho_r, s * p.lambda_r * (p.alpha - p.rho_r)]
    )


# ---------------------------------------------------------------- public types


@dataclass(frozen=True)
class EventLog:
    times: np.ndarray
    kinds: np.ndarray
    sites: np.ndarray  # 1-based site the particle leaves (jumps, removals) or enters (injections)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class Trajectory:
    """One replica: initial and final states, snapshots with cumulative integrals
    int_0^t eta(x) ds and int_0^t eta(x) eta(x+1) ds at the snapshot times."""

    initial: Configuration
    final: Configuration
    times: np.ndarray
    snapshots: np.ndarray
    occupation: np.ndarray
    bonds: np.ndarray
    events: EventLog | None
    seed: tuple[int, int]
    n_events: int


def _snap_grid(t_end: float, times) -> np.ndarray:
    grid = np.array([t_end] if times is None else times, dtype=float)
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise DomainError("snapshot times must be non-negative and sorted")
    return grid


def simulate(
    cfg0: Configuration,
    t_end: float,
    p: ModelParams,
    seed: int = 0,
    replica: int = 0,
    *,
    times: Sequence[float] | None = None,
    log_events: bool = False,
) -> Trajectory:
    """Exact-in-law trajectory of the sped-up chain up to macroscopic time t_end."""
    if t_end < 0:
        raise DomainError("t_end must be non-negative")
    if cfg0.N != p.N or cfg0.alpha != p.alpha:
        raise DomainError("configuration does not match parameters")
    grid = _snap_grid(t_end, times)
    if grid.size and grid[-1] > t_end:
        raise DomainError("snapshot times exceed t_end")
    if grid.size == 0 or grid[-1] < t_end:
        grid = np.append(grid, t_end)
    key = replica_key(seed, replica, STREAM_DYNAMICS)
    eta, snaps, occ, bond, lt, lk, lx, nev = _simulate_one(
        cfg0.eta.astype(np.int64), p.alpha, _reservoir_vector(p), float(p.N) ** 2, key, grid, log_events
    )
    log = EventLog(lt.copy(), lk.astype(np.int64), lx.astype(np.int64)) if log_events else None
    return Trajectory(
        cfg0, Configuration(eta, p.alpha), grid, snaps, occ, bond[:, : p.N - 2], log, (int(seed), int(replica)), int(nev)
    )


@dataclass
class Ensemble:
    """Streaming snapshots of many replicas sharing p and the initial sampler."""

    params: ModelParams
    times: np.ndarray
    initial: np.ndarray  # (R, n)
    snapshots: np.ndarray  # (R, S, n)
    occupation: np.ndarray  # (R, S, n)
    bonds: np.ndarray  # (R, S, n-1)
    seed: int
    n_events: np.ndarray

    @property
    def replicas(self) -> int:
        return self.initial.shape[0]

    def trajectory(self, r: int) -> Trajectory:
        p = self.params
        return Trajectory(
            Configuration(self.initial[r], p.alpha),
            Configuration(self.snapshots[r, -1], p.alpha),
            self.times,
            self.snapshots[r],
            self.occupation[r],
            self.bonds[r],
            None,
            (self.seed, r),
            int(self.n_events[r]),
        )

    def dump_csv(self, path) -> None:
        """Rows (replica, time, site, count)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replica", "time", "site", "count"])
            R, S, n = self.snapshots.shape
            for r in range(R):
                for k in range(S):
                    t = repr(float(self.times[k]))
                    for x in range(n):
                        w.writerow([r, t, x + 1, int(self.snapshots[r, k, x])])


def initial_states(init, p: ModelParams, replicas: int, seed: int) -> np.ndarray:
    """Draw replica initial configurations.

    ``init`` is a profile (callable or per-site array) for a local Gibbs measure,
    a Configuration (deterministic start), or a callable ``(rng) -> Configuration``
    flagged by the attribute ``is_sampler``.
    """
    out = np.empty((replicas, p.N - 1), dtype=np.int64)
    for r in range(replicas):
        if isinstance(init, Configuration):
            out[r] = init.eta
            continue
        rng = replica_rng(seed, r, STREAM_INIT)
        if getattr(init, "is_sampler", False):
            out[r] = init(rng).eta
        else:
            out[r] = sample_local_gibbs(init, p, rng).eta
    return out


def simulate_ensemble(
    init,
    times: Sequence[float],
    p: ModelParams,
    replicas: int,
    seed: int,
    threads: int | None = None,
) -> Ensemble:
    grid = _snap_grid(None, times) if times is not None else None
    if grid is None or grid.size == 0:
        raise DomainError("need at least one snapshot time")
    eta0 = initial_states(init, p, replicas, seed)
    keys = np.array([replica_key(seed, r, STREAM_DYNAMICS) for r in range(replicas)], dtype=np.uint64)
    prev = nb.get_num_threads()
    if threads:
        nb.set_num_threads(min(int(threads), nb.config.NUMBA_NUM_THREADS))
    try:
        snaps, occ, bond, nev = _simulate_many(eta0, p.alpha, _reservoir_vector(p), float(p.N) ** 2, keys, grid)
    finally:
        nb.set_num_threads(prev)
    return Ensemble(p, grid, eta0, snaps, occ, bond[:, :, : p.N - 2], int(seed), nev)


@dataclass(frozen=True)
class EnsembleEstimate:
    mean: np.ndarray
    se: np.ndarray
    replicas: int
    seeds: tuple = field(default=())


def _collect(replicas, times) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Return (states (R, S, n), grid, seeds) from an Ensemble or trajectories."""
    if isinstance(replicas, Ensemble):
        idx = [int(np.argmin(np.abs(replicas.times - t))) for t in times]
        return replicas.snapshots[:, idx, :].astype(float), replicas.times[idx], (replicas.seed,)
    trajs = list(replicas)
    states = []
    for tr in trajs:
        idx = [int(np.argmin(np.abs(tr.times - t))) for t in times]
        states.append(tr.snapshots[idx])
    return np.array(states, dtype=float), np.asarray(times, float), tuple(tr.seed for tr in trajs)


def ensemble_moments(replicas, times: Sequence[float], alpha: int | None = None):
    """Density and pair-correlation estimates at each requested time.

    Returns (density, correlation): lists over times of EnsembleEstimate, the
    correlation matrix holding covariances off the diagonal and the extended
    diagonal (alpha/(alpha-1)) E[eta(eta-1)] - rho^2 on it (alpha >= 2) or the
    variance (alpha = 1).
    """
    X, grid, seeds = _collect(replicas, np.atleast_1d(times))
    R = X.shape[0]
    if R < 2:
        raise DomainError("need at least two replicas")
    if alpha is None:
        alpha = replicas.params.alpha if isinstance(replicas, Ensemble) else replicas[0].initial.alpha
    dens, corr = [], []
    for k in range(X.shape[1]):
        Z = X[:, k, :]
        m = Z.mean(axis=0)
        dens.append(EnsembleEstimate(m, Z.std(axis=0, ddof=1) / np.sqrt(R), R, seeds))
        D = Z - m
        cov = D.T @ D / (R - 1)
        # per-replica influence values for the covariance standard error
        prod_sq = (D**2).T @ (D**2) / R
        var_prod = np.maximum(prod_sq - (D.T @ D / R) ** 2, 0.0)
        se = np.sqrt(var_prod * R / (R - 1) / R)
        if alpha >= 2:
            a = alpha / (alpha - 1.0)
            fz = a * Z * (Z - 1.0)
            ext = fz.mean(axis=0) - m**2
            infl = fz - 2.0 * m * Z
            np.fill_diagonal(cov, ext)
            np.fill_diagonal(se, infl.std(axis=0, ddof=1) / np.sqrt(R))
        corr.append(EnsembleEstimate(cov, se, R, seeds))
    return dens, corr
