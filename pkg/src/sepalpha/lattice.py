"""Lattice geometry and the sparse generators of the one- and two-particle walks.

The 1D operator acts on functions on {1..N-1} with absorbing endpoints 0 and N.
The triangle operator acts on V_N = {(x, y): 1 <= x <= y <= N-1} (x < y when
alpha = 1) and kills mass at the boundary {x = 0} u {y = N}.  Both are returned
without the N^2 time scaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import ModelParams


@dataclass(frozen=True)
class TriangleLattice:
    """Packed row-major index of V_N."""

    N: int
    diagonal: bool
    points: np.ndarray = field(init=False, repr=False)
    _index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = [
            (x, y)
            for x in range(1, self.N)
            for y in range(x if self.diagonal else x + 1, self.N)
        ]
        pts_arr = np.array(pts, dtype=np.int64).reshape(-1, 2)
        idx = -np.ones((self.N + 1, self.N + 1), dtype=np.int64)
        idx[pts_arr[:, 0], pts_arr[:, 1]] = np.arange(len(pts_arr))
        object.__setattr__(self, "points", pts_arr)
        object.__setattr__(self, "_index", idx)

    @classmethod
    def for_params(cls, p: ModelParams) -> "TriangleLattice":
        return cls(p.N, p.alpha >= 2)

    @property
    def size(self) -> int:
        return len(self.points)

    def index(self, x: int, y: int) -> int:
        """Ordinal of (x, y), or -1 when the point is not in V_N."""
        if x > y:
            x, y = y, x
        if not (0 <= x <= self.N and 0 <= y <= self.N):
            return -1
        return int(self._index[x, y])

    def on_boundary(self, x: int, y: int) -> bool:
        return x == 0 or y == self.N

    @property
    def upper_diagonal(self) -> np.ndarray:
        """Mask of D_N^+ = {(x, x+1)}."""
        return self.points[:, 1] == self.points[:, 0] + 1

    @property
    def main_diagonal(self) -> np.ndarray:
        return self.points[:, 1] == self.points[:, 0]

    def to_matrix(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Symmetric (N+1)x(N+1) array with the boundary set to zero."""
        out = np.full((self.N + 1, self.N + 1), fill, dtype=float)
        out[0, :] = out[:, 0] = out[self.N, :] = out[:, self.N] = 0.0
        x, y = self.points[:, 0], self.points[:, 1]
        out[x, y] = values
        out[y, x] = values
        return out

    def from_matrix(self, mat: np.ndarray) -> np.ndarray:
        return np.asarray(mat, dtype=float)[self.points[:, 0], self.points[:, 1]].copy()


def density_operator(p: ModelParams) -> tuple[sp.csr_matrix, np.ndarray]:
    """Return (A, b) with Delta_N^i rho = A rho + b on the interior sites.

    ``b`` carries the pinned boundary values rho^l, rho^r.
    """
    n = p.N - 1
    cl, cr, al = p.c_left, p.c_right, float(p.alpha)
    left = np.full(n, al)
    right = np.full(n, al)
    left[0] = cl
    right[-1] = cr
    main = -(left + right)
    A = sp.diags([right[:-1], main, left[1:]], [1, 0, -1], format="csr")
    b = np.zeros(n)
    b[0] += cl * p.rho_l
    b[-1] += cr * p.rho_r
    return A, b


def triangle_operator(
    p: ModelParams,
    lattice: TriangleLattice | None = None,
    *,
    reflecting: bool = False,
) -> sp.csr_matrix:
    """Generator of the symmetrised two-particle walk on V_N.

    With ``reflecting`` the moves into the boundary are removed (reflection
    at the boundary instead of absorption).
    """
    lat = lattice or TriangleLattice.for_params(p)
    N, al = p.N, float(p.alpha)
    cl, cr = p.c_left, p.c_right
    rows, cols, vals = [], [], []
    diag = np.zeros(lat.size)

    def move(i, x2, y2, rate):
        if rate == 0.0:
            return
        if x2 == 0 or y2 == N:
            if not reflecting:
                diag[i] -= rate
            return
        j = lat.index(x2, y2)
        if j < 0:
            return
        rows.append(i)
        cols.append(j)
        vals.append(rate)
        diag[i] -= rate

    for i, (x, y) in enumerate(lat.points):
        if x == y:
            move(i, x - 1, x, 2 * cl if x == 1 else 2 * al)
            move(i, x, x + 1, 2 * cr if x == N - 1 else 2 * al)
            continue
        left = cl if x == 1 else al
        right = cr if y == N - 1 else al
        move(i, x - 1, y, left)
        move(i, x, y + 1, right)
        if y == x + 1:
            if lat.diagonal:
                move(i, x, x, al - 1.0)
                move(i, y, y, al - 1.0)
        else:
            move(i, x + 1, y, al)
            move(i, x, y - 1, al)
    rows.extend(range(lat.size))
    cols.extend(range(lat.size))
    vals.extend(diag)
    return sp.csr_matrix((vals, (rows, cols)), shape=(lat.size, lat.size))


def triangle_weights(p: ModelParams, lattice: TriangleLattice | None = None) -> np.ndarray:
    """Reversible weights of the triangle walk: (alpha-1)/(2 alpha) on D_N, 1 elsewhere."""
    lat = lattice or TriangleLattice.for_params(p)
    w = np.ones(lat.size)
    if lat.diagonal:
        w[lat.main_diagonal] = (p.alpha - 1.0) / (2.0 * p.alpha)
    return w
