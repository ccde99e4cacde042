"""Reference solutions and error metrics for the doubly nonlinear and flux-limited tests.

The Barenblatt profile of ``rho_t = div(|grad rho^m|^{p-2} grad rho^m)`` is

    rho_B(t, x) = t^{-d/delta_p} u_B(x t^{-1/delta_p}),

with ``delta_p = d (p - 1)(m - m_c)`` and ``m_c = (d - p)/(d (p - 1))``.  The
profile is Gaussian-like (``sigma_B``) when ``m (p - 1) = 1`` and a positive
part power (``D_*``) otherwise; both constants come from unit mass.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, optimize
from scipy.special import gamma as gamma_fn

from .grid import GridSpec

_QUAD_TOL = 1e-10


def _sphere_area(d: int) -> float:
    """Surface area of the unit sphere in ``R^d`` (2 for ``d = 1``)."""
    return 2.0 * np.pi ** (d / 2.0) / gamma_fn(d / 2.0)


@dataclass(frozen=True)
class BarenblattParams:
    m: float
    p: float
    d: int = 1

    def __post_init__(self):
        if not (self.m > 0 and self.p > 1 and self.d >= 1):
            raise ValueError(f"need m > 0, p > 1, d >= 1; got {self.m}, {self.p}, {self.d}")
        if not self.delta_p > 0:
            raise ValueError(f"delta_p = {self.delta_p} <= 0: no mass-preserving Barenblatt profile")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def m_c(self) -> float:
        return (self.d - self.p) / (self.d * (self.p - 1.0))

    @property
    def delta_p(self) -> float:
        return self.d * (self.p - 1.0) * (self.m - self.m_c)

    @property
    def exponential(self) -> bool:
        return bool(np.isclose(self.m * (self.p - 1.0), 1.0, rtol=0, atol=1e-12))

    @property
    def compact(self) -> bool:
        return self.m * (self.p - 1.0) > 1.0 and not self.exponential

    # profile pieces: u_B(y) = (D - c |y|^q)_+^e  or  exp(-k |y|^q) / sigma

    @property
    def _c(self) -> float:
        m, p = self.m, self.p
        return (m * (p - 1.0) - 1.0) / (m * p * self.delta_p ** (1.0 / (p - 1.0)))

    @property
    def _e(self) -> float:
        return (self.p - 1.0) / (self.m * (self.p - 1.0) - 1.0)

    @property
    def _k(self) -> float:
        return (self.p - 1.0) / self.q / self.delta_p ** (1.0 / (self.p - 1.0))

    def _profile_mass(self, D: float) -> float:
        area, d, q = _sphere_area(self.d), self.d, self.q
        c, e = self._c, self._e
        if self.compact:
            R = (D / c) ** (1.0 / q)
            val, _ = integrate.quad(lambda r: r ** (d - 1) * max(D - c * r ** q, 0.0) ** e,
                                    0.0, R, epsabs=0.0, epsrel=_QUAD_TOL, limit=200)
        else:
            if not q * e < -d:
                raise ValueError("heavy-tailed profile has infinite mass for these (m, p, d)")
            val, _ = integrate.quad(lambda r: r ** (d - 1) * (D - c * r ** q) ** e,
                                    0.0, np.inf, epsabs=0.0, epsrel=_QUAD_TOL, limit=400)
        return area * val

    @cached_property
    def normalization(self) -> float:
        """``sigma_B`` (exponential case) or ``D_*`` (otherwise)."""
        if self.exponential:
            area, d, q, k = _sphere_area(self.d), self.d, self.q, self._k
            # exp(-k r^q) is below 1e-16 beyond this radius
            R = (40.0 / k) ** (1.0 / q)
            val, _ = integrate.quad(lambda r: r ** (d - 1) * np.exp(-k * r ** q), 0.0, R,
                                    epsabs=0.0, epsrel=_QUAD_TOL, limit=200)
            return area * val
        f = lambda D: self._profile_mass(D) - 1.0  # noqa: E731
        lo, hi = 1e-3, 1.0
        # mass is increasing in D (compact) or decreasing (heavy tail); widen until signs differ
        for _ in range(200):
            if f(lo) * f(hi) < 0:
                break
            lo, hi = lo / 2.0, hi * 2.0
        return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)

    def support_radius(self) -> float:
        """Radius of supp u_B (``inf`` unless the compact branch applies)."""
        if not self.compact:
            return np.inf
        return (self.normalization / self._c) ** (1.0 / self.q)

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        r = np.abs(y) if y.ndim == 0 or self.d == 1 else np.linalg.norm(y, axis=-1)
        if self.exponential:
            return np.exp(-self._k * r ** self.q) / self.normalization
        base = self.normalization - self._c * r ** self.q
        if self.compact:
            return np.maximum(base, 0.0) ** self._e
        return base ** self._e


def barenblatt_normalization(params: BarenblattParams) -> float:
    return params.normalization


def barenblatt_value(params: BarenblattParams, t, x):
    """``rho_B(t, x)``; ``x`` holds points (last axis of length ``d`` when ``d > 1``)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("Barenblatt solution needs t > 0")
    s = t ** (1.0 / params.delta_p)
    return params.profile(np.asarray(x, dtype=float) / s) / s ** params.d


def heat_kernel_value(t0: float, t, x):
    """1D heat kernel started from a Gaussian of time ``t0``."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    tt = np.asarray(t, dtype=float) + t0
    x = np.asarray(x, dtype=float)
    return np.exp(-x ** 2 / (4.0 * tt)) / np.sqrt(4.0 * np.pi * tt)


def error_norms(grid: GridSpec, numeric, exact) -> tuple[float, float, float]:
    """Relative ``(L1, L2, Linf)`` errors with ``h``-weighted node sums."""
    num = np.asarray(numeric, dtype=float).ravel()
    ex = np.asarray(exact, dtype=float).ravel()
    if num.shape != ex.shape or num.size != grid.size:
        raise ValueError("numeric and exact fields must live on the grid")
    h = grid.h
    diff = num - ex
    norms = (h * np.sum(np.abs(ex)), np.sqrt(h * np.sum(ex ** 2)), np.max(np.abs(ex)))
    if min(norms) == 0:
        raise ValueError("exact field has zero norm")
    errs = (h * np.sum(np.abs(diff)), np.sqrt(h * np.sum(diff ** 2)), np.max(np.abs(diff)))
    return tuple(float(e / n) for e, n in zip(errs, norms))


def convergence_order(errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    data = np.asarray(errors, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise ValueError("need at least three (dt, error) pairs")
    if np.any(data <= 0):
        raise ValueError("dt and error values must be positive")
    x, y = np.log(data[:, 0]), np.log(data[:, 1])
    if np.ptp(x) == 0:
        raise ValueError("all time steps are equal")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def front_position(grid: GridSpec, rho, threshold: float) -> float:
    """Rightmost linearly interpolated crossing of ``threshold`` (1D)."""
    if grid.d != 1:
        raise ValueError("front_position is defined for 1D grids")
    r = np.asarray(rho, dtype=float).ravel()
    x = grid.axes[0]
    above = np.flatnonzero(r >= threshold)
    if above.size == 0:
        raise ValueError("density never reaches the threshold")
    j = above[-1]
    if j == r.size - 1:
        raise ValueError("super-threshold region touches the right boundary")
    r0, r1 = r[j], r[j + 1]
    return float(x[j] + (r0 - threshold) / (r0 - r1) * (x[j + 1] - x[j]))


def front_speed(times, positions) -> float:
    """Least-squares slope of front position against time."""
    slope, _ = np.polyfit(np.asarray(times, dtype=float), np.asarray(positions, dtype=float), 1)
    return float(slope)
