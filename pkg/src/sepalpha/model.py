"""Core types and rate formulas of the boundary-driven SEP(alpha)."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import DomainError

Direction = Literal["left", "right"]
Position = Literal["bulk-offdiag", "bulk-diag", "left-corner", "right-corner", "separated"]


@dataclass(frozen=True)
class ModelParams:
    """Parameter vector (alpha, lambda_l, lambda_r, rho_l, rho_r, theta) and lattice size N."""

    alpha: int
    lambda_l: float
    lambda_r: float
    rho_l: float
    rho_r: float
    theta: float
    N: int

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise DomainError(f"alpha must be a positive integer, got {self.alpha}")
        if int(self.N) != self.N or self.N < 3:
            raise DomainError(f"N must be an integer >= 3, got {self.N}")
        object.__setattr__(self, "alpha", int(self.alpha))
        object.__setattr__(self, "N", int(self.N))
        for name in ("lambda_l", "lambda_r"):
            v = float(getattr(self, name))
            if not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v}")
            object.__setattr__(self, name, v)
        for name in ("rho_l", "rho_r"):
            v = float(getattr(self, name))
            if not 0.0 < v < self.alpha:
                raise DomainError(f"{name} must lie in (0, alpha), got {v}")
            object.__setattr__(self, name, v)
        th = float(self.theta)
        if not math.isfinite(th):
            raise DomainError("theta must be finite")
        object.__setattr__(self, "theta", th)

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    @property
    def scale(self) -> float:
        """Reservoir slow-down factor N^(-theta)."""
        return float(self.N) ** (-self.theta)

    # reservoir rates before the N^(-theta) factor
    @property
    def eps(self) -> float:
        return self.lambda_l * self.rho_l

    @property
    def delta(self) -> float:
        return self.lambda_r * self.rho_r

    @property
    def gamma(self) -> float:
        return self.lambda_l * (self.alpha - self.rho_l)

    @property
    def beta(self) -> float:
        return self.lambda_r * (self.alpha - self.rho_r)

    @property
    def c_left(self) -> float:
        """Rate of the left boundary bond in the discrete Laplacian."""
        return self.alpha * self.lambda_l * self.scale

    @property
    def c_right(self) -> float:
        return self.alpha * self.lambda_r * self.scale

    @property
    def sites(self) -> np.ndarray:
        return np.arange(1, self.N)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Configuration:
    """Occupation numbers on sites 1..N-1 (stored at offsets 0..N-2)."""

    eta: np.ndarray
    alpha: int

    def __post_init__(self):
        arr = np.array(self.eta, dtype=np.int64).ravel()
        if arr.size < 2:
            raise DomainError("a configuration needs at least two sites")
        if arr.min() < 0 or arr.max() > self.alpha:
            raise DomainError(f"occupations must lie in [0, {self.alpha}]")
        arr.setflags(write=False)
        object.__setattr__(self, "eta", arr)

    @property
    def N(self) -> int:
        return self.eta.size + 1

    def __getitem__(self, x: int) -> int:
        if not 1 <= x <= self.N - 1:
            raise DomainError(f"site {x} outside 1..{self.N - 1}")
        return int(self.eta[x - 1])

    def add(self, x: int, k: int = 1) -> "Configuration":
        """Return eta + k*delta_x."""
        arr = self.eta.copy()
        arr[x - 1] += k
        return Configuration(arr, self.alpha)


@dataclass(frozen=True)
class DualConfiguration:
    """Dual particle counts on {0} u {1..N-1} u {N}; endpoints are absorbing."""

    left: int
    interior: np.ndarray
    right: int
    alpha: int

    def __post_init__(self):
        arr = np.array(self.interior, dtype=np.int64).ravel()
        if arr.min(initial=0) < 0 or arr.max(initial=0) > self.alpha:
            raise DomainError("interior dual counts must lie in [0, alpha]")
        if self.left < 0 or self.right < 0:
            raise DomainError("endpoint dual counts must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "interior", arr)

    @classmethod
    def pair(cls, x: int, y: int, N: int, alpha: int) -> "DualConfiguration":
        """delta_x + delta_y with x, y in {0, ..., N}."""
        counts = np.zeros(N + 1, dtype=np.int64)
        counts[x] += 1
        counts[y] += 1
        return cls(int(counts[0]), counts[1:N], int(counts[N]), alpha)

    @classmethod
    def single(cls, x: int, N: int, alpha: int) -> "DualConfiguration":
        counts = np.zeros(N + 1, dtype=np.int64)
        counts[x] += 1
        return cls(int(counts[0]), counts[1:N], int(counts[N]), alpha)


def _check_site(cfg: Configuration, x: int) -> None:
    if not 1 <= x <= cfg.N - 1:
        raise DomainError(f"site {x} outside 1..{cfg.N - 1}")


def bulk_rate(cfg: Configuration, x: int, direction: Direction) -> float:
    """Rate of a particle jumping from x to its left or right neighbour."""
    _check_site(cfg, x)
    if direction not in ("left", "right"):
        raise DomainError(f"unknown direction {direction!r}")
    z = x + 1 if direction == "right" else x - 1
    if not 1 <= z <= cfg.N - 1:
        return 0.0
    a = cfg[x]
    return float(a * (cfg.alpha - cfg[z]))


def reservoir_rates(cfg: Configuration, p: ModelParams) -> tuple[float, float, float, float]:
    """(inj_l, rem_l, inj_r, rem_r) including the N^(-theta) factor."""
    if cfg.N != p.N or cfg.alpha != p.alpha:
        raise DomainError("configuration does not match parameters")
    s = p.scale
    first, last = cfg[1], cfg[p.N - 1]
    return (
        s * p.lambda_l * p.rho_l * (p.alpha - first),
        s * p.lambda_l * (p.alpha - p.rho_l) * first,
        s * p.lambda_r * p.rho_r * (p.alpha - last),
        s * p.lambda_r * (p.alpha - p.rho_r) * last,
    )


def gamma_term(a: int, b: int, position: Position, p: ModelParams) -> float:
    """Carre du champ correction Gamma for products eta(x)eta(y).

    ``a`` is eta(x). The meaning of ``b`` depends on ``position``:

    * ``bulk-offdiag``: eta(x+1) for the adjacent pair (x, x+1);
    * ``bulk-diag``: eta(x-1) + eta(x+1) for x = y away from the reservoirs;
    * ``left-corner`` / ``right-corner``: eta(2) or eta(N-2) for x = y = 1 or N-1;
    * ``separated``: ignored, pairs at distance >= 2 give zero.
    """
    al = p.alpha
    if not 0 <= a <= al:
        raise DomainError(f"count a={a} outside [0, {al}]")
    bmax = 2 * al if position == "bulk-diag" else al
    if not 0 <= b <= bmax:
        raise DomainError(f"count b={b} outside [0, {bmax}]")
    if position == "bulk-offdiag":
        return float(2 * a * b - al * (a + b))
    if position == "bulk-diag":
        return float(2 * al * a + al * b - 2 * a * b)
    if position in ("left-corner", "right-corner"):
        lam, rho = (p.lambda_l, p.rho_l) if position == "left-corner" else (p.lambda_r, p.rho_r)
        bond = a * (al - b) + b * (al - a)
        return float(bond + p.scale * (lam * rho * (al - a) + lam * (al - rho) * a))
    if position == "separated":
        return 0.0
    raise DomainError(f"unknown position {position!r}")


def duality_eval(cfg: Configuration, dual: DualConfiguration, p: ModelParams) -> float:
    """Duality function D(eta, dual) of the absorbing dual process."""
    if dual.interior.size != cfg.eta.size:
        raise DomainError("dual and configuration sizes differ")
    al = p.alpha
    value = p.rho_l ** dual.left * p.rho_r ** dual.right
    for n, k in zip(cfg.eta, dual.interior):
        if k == 0:
            continue
        if k >= 2 and al == 1:
            raise DomainError("a double dual particle needs alpha >= 2")
        if n < k:
            return 0.0
        value *= math.comb(int(n), int(k)) / math.comb(al, int(k))
    return float(value)


def mobility(rho: float, p: ModelParams) -> float:
    """chi_alpha(rho) = rho (alpha - rho)."""
    if not 0.0 <= rho <= p.alpha:
        raise DomainError(f"density {rho} outside [0, {p.alpha}]")
    return float(rho * (p.alpha - rho))


def equilibrium_pmf(cfg: Configuration, rho: float, p: ModelParams) -> float:
    """Probability of cfg under the product of Binomial(alpha, rho/alpha) marginals."""
    q = rho / p.alpha
    out = 1.0
    for n in cfg.eta:
        out *= math.comb(p.alpha, int(n)) * q ** int(n) * (1.0 - q) ** (p.alpha - int(n))
    return out


def empirical_pairing(cfg: Configuration, G: Callable[[np.ndarray], np.ndarray]) -> float:
    """<pi^N, G> = (1/N) sum_x eta(x) G(x/N)."""
    u = np.arange(1, cfg.N) / cfg.N
    return float(np.dot(cfg.eta, np.asarray(G(u), dtype=float)) / cfg.N)


def block_average(cfg: Configuration, z: int, L: int, side: Direction = "right") -> float:
    """Mean of the L occupations strictly to one side of z."""
    if L < 1:
        raise DomainError("window length must be positive")
    if side == "right":
        lo, hi = z + 1, z + L
    elif side == "left":
        lo, hi = z - L, z - 1
    else:
        raise DomainError(f"unknown side {side!r}")
    if lo < 1 or hi > cfg.N - 1:
        raise DomainError(f"window [{lo}, {hi}] overflows 1..{cfg.N - 1}")
    return float(cfg.eta[lo - 1 : hi].mean())
