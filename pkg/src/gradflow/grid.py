"""Hyperrectangular node grids and the discrete continuity constraint.

The primal vector ``u`` stacks the density block first and then one momentum
block per axis, each block in row-major (C) node order::

    u = [rho (|I|), m_1 (|I|), ..., m_d (|I|)]

The constraint operator maps ``u`` to one value per node.  Interior nodes carry
the implicit continuity equation ``rho_i + dt * sum_l D_l m_l,i``; boundary
nodes carry the no-flux condition ``sum_l m_l,i nu_l``.  When
``boundary_continuity`` is on, one extra row per boundary node is appended with
a half-cell (one-sided) divergence, so that the trapezoid-weighted mass is
conserved exactly by the feasible set.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class GridSpec:
    """Node grid on ``prod_l [a_l, b_l]`` with ``n_l`` cells per axis."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        b = tuple(float(v) for v in np.atleast_1d(self.b))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if not (len(a) == len(b) == len(n)) or len(a) == 0:
            raise ValueError("a, b and n must have the same positive length")
        if any(lo >= hi for lo, hi in zip(a, b)):
            raise ValueError(f"need a_l < b_l on every axis, got a={a}, b={b}")
        if any(k < 1 for k in n):
            raise ValueError(f"cell counts must be positive, got {n}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", n)

    @classmethod
    def uniform_1d(cls, a: float, b: float, dx: float) -> "GridSpec":
        """1D grid on ``[a, b]`` whose spacing is ``dx`` (rounded to fit)."""
        n = int(round((b - a) / dx))
        return cls((a,), (b,), (n,))

    @property
    def d(self) -> int:
        return len(self.n)

    @cached_property
    def shape(self) -> tuple[int, ...]:
        """Node array shape ``(n_1 + 1, ..., n_d + 1)``."""
        return tuple(k + 1 for k in self.n)

    @cached_property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def dx(self) -> np.ndarray:
        return (np.array(self.b) - np.array(self.a)) / np.array(self.n)

    @cached_property
    def h(self) -> float:
        """Cell volume."""
        return float(np.prod(self.dx))

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [lo + np.arange(k + 1) * step
                for lo, k, step in zip(self.a, self.n, self.dx)]

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(|I|, d)`` in row-major order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Boolean node array, True on the boundary set."""
        mask = np.zeros(self.shape, dtype=bool)
        for l in range(self.d):
            idx = [slice(None)] * self.d
            idx[l] = 0
            mask[tuple(idx)] = True
            idx[l] = -1
            mask[tuple(idx)] = True
        return mask

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @cached_property
    def cell_mask(self) -> np.ndarray:
        """True on the cell index set (every coordinate below ``n_l``)."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(0, k) for k in self.n)] = True
        return mask

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        """Nodal quadrature weights (without the factor ``h``)."""
        w = np.ones(self.shape)
        for l in range(self.d):
            idx = [slice(None)] * self.d
            idx[l] = 0
            w[tuple(idx)] *= 0.5
            idx[l] = -1
            w[tuple(idx)] *= 0.5
        return w

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit outward normals at nodes, shape ``(d, *shape)``; zero inside.

        Corner and edge nodes get the normalized sum of adjacent face normals.
        """
        nu = np.zeros((self.d,) + self.shape)
        for l in range(self.d):
            idx = [slice(None)] * self.d
            idx[l] = 0
            nu[(l,) + tuple(idx)] = -1.0
            idx[l] = -1
            nu[(l,) + tuple(idx)] = 1.0
        norm = np.sqrt((nu ** 2).sum(axis=0))
        np.divide(nu, norm, out=nu, where=norm > 0)
        return nu

    def mass(self, rho: np.ndarray) -> float:
        """Trapezoid mass ``h * sum_i w_i rho_i``."""
        rho = np.asarray(rho).reshape(self.shape)
        return self.h * float(np.sum(self.trapezoid_weights * rho))

    # primal vector layout

    def pack(self, rho: np.ndarray, mom: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float).reshape(self.size)
        mom = np.asarray(mom, dtype=float).reshape(self.d, self.size)
        return np.concatenate([rho, mom.ravel()])

    def unpack(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a flat primal vector into ``(rho, mom)`` node arrays."""
        u = np.asarray(u)
        if u.shape != ((self.d + 1) * self.size,):
            raise ValueError(f"primal vector has shape {u.shape}, expected "
                             f"({(self.d + 1) * self.size},)")
        rho = u[: self.size].reshape(self.shape)
        mom = u[self.size:].reshape((self.d,) + self.shape)
        return rho, mom


def _centered(f: np.ndarray, axis: int, step: float) -> np.ndarray:
    """Centered difference along ``axis``; zero on the two end slices."""
    out = np.zeros_like(f)
    hi = [slice(None)] * f.ndim
    lo = [slice(None)] * f.ndim
    mid = [slice(None)] * f.ndim
    hi[axis], lo[axis], mid[axis] = slice(2, None), slice(None, -2), slice(1, -1)
    out[tuple(mid)] = (f[tuple(hi)] - f[tuple(lo)]) / (2.0 * step)
    return out


def _centered_adjoint(g: np.ndarray, axis: int, step: float) -> np.ndarray:
    """Adjoint of :func:`_centered`."""
    out = np.zeros_like(g)
    mid = [slice(None)] * g.ndim
    mid[axis] = slice(1, -1)
    gm = g[tuple(mid)] / (2.0 * step)
    hi = [slice(None)] * g.ndim
    lo = [slice(None)] * g.ndim
    hi[axis], lo[axis] = slice(2, None), slice(None, -2)
    out[tuple(hi)] += gm
    out[tuple(lo)] -= gm
    return out


def _half_cell(f: np.ndarray, axis: int, step: float) -> np.ndarray:
    """Centered difference inside, half-cell one-sided difference at the ends.

    At index 0 this is ``(f_0 + f_1) / step`` and at the last index
    ``-(f_{N-1} + f_N) / step``: the flux through the half cell with zero flux
    through the wall.
    """
    out = _centered(f, axis, step)
    s0 = [slice(None)] * f.ndim
    s1 = [slice(None)] * f.ndim
    s0[axis], s1[axis] = 0, 1
    out[tuple(s0)] = (f[tuple(s0)] + f[tuple(s1)]) / step
    s0[axis], s1[axis] = -1, -2
    out[tuple(s0)] = -(f[tuple(s0)] + f[tuple(s1)]) / step
    return out


def _half_cell_adjoint(g: np.ndarray, axis: int, step: float) -> np.ndarray:
    out = _centered_adjoint(g, axis, step)
    s0 = [slice(None)] * g.ndim
    s1 = [slice(None)] * g.ndim
    s0[axis], s1[axis] = 0, 1
    v = g[tuple(s0)] / step
    out[tuple(s0)] += v
    out[tuple(s1)] += v
    s0[axis], s1[axis] = -1, -2
    v = g[tuple(s0)] / step
    out[tuple(s0)] -= v
    out[tuple(s1)] -= v
    return out


@dataclass
class ConstraintSystem:
    """Linear constraint ``|A u - b| <= delta`` for one implicit step."""

    grid: GridSpec
    dt: float
    b: np.ndarray
    delta: float
    boundary_continuity: bool = True
    _norm: float | None = field(default=None, repr=False)

    @property
    def n_rows(self) -> int:
        extra = int(self.grid.boundary_mask.sum()) if self.boundary_continuity else 0
        return self.grid.size + extra

    @property
    def n_cols(self) -> int:
        return (self.grid.d + 1) * self.grid.size

    def apply(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        rho, mom = g.unpack(u)
        div = sum(_centered(mom[l], l, g.dx[l]) for l in range(g.d))
        flux = np.einsum("l...,l...->...", g.normals, mom)
        main = np.where(g.boundary_mask, flux, rho + self.dt * div)
        if not self.boundary_continuity:
            return main.ravel()
        bdiv = sum(_half_cell(mom[l], l, g.dx[l]) for l in range(g.d))
        extra = (rho + self.dt * bdiv)[g.boundary_mask]
        return np.concatenate([main.ravel(), extra])

    def apply_adjoint(self, w: np.ndarray) -> np.ndarray:
        g = self.grid
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_rows,):
            raise ValueError(f"dual vector has shape {w.shape}, expected ({self.n_rows},)")
        bmask = g.boundary_mask
        main = w[: g.size].reshape(g.shape)
        w_int = np.where(bmask, 0.0, main)
        w_bnd = np.where(bmask, main, 0.0)
        rho = w_int.copy()
        mom = np.empty((g.d,) + g.shape)
        for l in range(g.d):
            mom[l] = self.dt * _centered_adjoint(w_int, l, g.dx[l]) + g.normals[l] * w_bnd
        if self.boundary_continuity:
            wb = np.zeros(g.shape)
            wb[bmask] = w[g.size:]
            rho += wb
            for l in range(g.d):
                mom[l] += self.dt * _half_cell_adjoint(wb, l, g.dx[l])
        return np.concatenate([rho.ravel(), mom.ravel()])

    def residual(self, u: np.ndarray) -> float:
        """Euclidean distance ``|A u - b|``."""
        return float(np.linalg.norm(self.apply(u) - self.b))

    def matrix(self) -> sparse.csr_matrix:
        """Sparse copy of ``A`` assembled from the stencil (cached per grid and ``dt``)."""
        return _sparse_operator(self.grid, self.dt, self.boundary_continuity)

    @property
    def norm_bound(self) -> float:
        if self._norm is None:
            self._norm = estimate_operator_norm(self)
        return self._norm


@lru_cache(maxsize=32)
def _sparse_operator(grid: GridSpec, dt: float, boundary_continuity: bool) -> sparse.csr_matrix:
    probe = ConstraintSystem(grid, dt, np.zeros(0), 0.0, boundary_continuity)
    rows, cols, vals = [], [], []
    e = np.zeros(probe.n_cols)
    for j in range(probe.n_cols):
        e[j] = 1.0
        col = probe.apply(e)
        nz = np.flatnonzero(col)
        rows.append(nz)
        cols.append(np.full(nz.size, j))
        vals.append(col[nz])
        e[j] = 0.0
    shape = (probe.n_rows, probe.n_cols)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=shape)


def default_delta(b: np.ndarray) -> float:
    """Scale-aware ball radius ``1e-6 sqrt(n) max(1, |b| / sqrt(n))``."""
    n = b.size
    return 1e-6 * np.sqrt(n) * max(1.0, float(np.linalg.norm(b)) / np.sqrt(n))


def build_constraint(grid: GridSpec, dt: float, rho_prev: np.ndarray,
                     delta: float | None = None, *,
                     boundary_continuity: bool = True) -> ConstraintSystem:
    """Assemble the (matrix-free) constraint for one step from ``rho_prev``.

    ``delta=None`` selects :func:`default_delta`.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if any(k < 2 for k in grid.n):
        raise ValueError(f"every axis needs at least 2 cells, got {grid.n}")
    rho_prev = np.asarray(rho_prev, dtype=float)
    if rho_prev.size != grid.size:
        raise ValueError(f"rho_prev has {rho_prev.size} entries, grid has {grid.size} nodes")
    rho_prev = rho_prev.reshape(grid.shape)
    main = np.where(grid.boundary_mask, 0.0, rho_prev).ravel()
    b = main
    if boundary_continuity:
        b = np.concatenate([main, rho_prev[grid.boundary_mask]])
    if delta is None:
        delta = default_delta(b)
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    return ConstraintSystem(grid, float(dt), b, float(delta), boundary_continuity)


def estimate_operator_norm(sys: ConstraintSystem, iters: int = 50,
                           seed: int = 0, safety: float = 1.01) -> float:
    """Power iteration on ``A^T A``; returns ``safety * sqrt(top eigenvalue)``."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(sys.n_cols)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = sys.apply_adjoint(sys.apply(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        # Rayleigh quotient is monotone along power iterates of a PSD matrix
        est = max(est, float(x @ y))
        x = y / ny
    return safety * np.sqrt(est)


def dense_matrix(sys: ConstraintSystem) -> np.ndarray:
    """Materialize ``A`` by applying it to unit vectors (debugging/tests)."""
    eye = np.eye(sys.n_cols)
    return np.stack([sys.apply(e) for e in eye], axis=1)


def node_index(grid: GridSpec, multi: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(multi), grid.shape))
