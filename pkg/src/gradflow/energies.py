"""Internal-energy densities, their scalar proximal maps and discrete energies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import wrightomega

from .grid import GridSpec
from .roots import solve_root


@dataclass(frozen=True)
class Entropy:
    """``F(xi) = kappa * xi ln xi`` with ``0 ln 0 = 0``."""

    kappa: float = 1.0

    L0 = -np.inf

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.kappa * xi * np.log(xi)
        v = np.where(xi == 0, 0.0, v)
        return np.where(xi < 0, np.inf, v)

    def deriv(self, xi):
        with np.errstate(divide="ignore"):
            return self.kappa * (np.log(xi) + 1.0)

    def deriv2(self, xi):
        return self.kappa / np.asarray(xi, dtype=float)

    def prox(self, gamma, rho):
        gk = np.asarray(gamma, dtype=float) * self.kappa
        rho = np.asarray(rho, dtype=float)
        # theta + gk (ln theta + 1) = rho  <=>  theta = gk * omega(rho/gk - 1 - ln gk)
        z = rho / gk - 1.0 - np.log(gk)
        theta = gk * np.real(wrightomega(z))
        # one Newton polish on the defining equation
        pos = theta > 0
        ts = np.where(pos, theta, 1.0)
        g = ts + gk * (np.log(ts) + 1.0) - rho
        with np.errstate(over="ignore"):
            theta = np.where(pos, ts - g / (1.0 + gk / ts), theta)
        return np.maximum(theta, np.where(pos, np.finfo(float).tiny, 0.0))


@dataclass(frozen=True)
class PowerEnergy:
    """``F(xi) = kappa * xi^eta / (eta (eta - 1))`` on ``xi >= 0``."""

    eta: float
    kappa: float = 1.0

    def __post_init__(self):
        if not self.eta > 0 or self.eta == 1:
            raise ValueError(f"power energy needs eta > 0, eta != 1, got {self.eta}")
        if not self.kappa > 0:
            raise ValueError(f"power energy needs kappa > 0, got {self.kappa}")

    @property
    def L0(self) -> float:
        return -np.inf if self.eta < 1 else 0.0

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        v = self.kappa * np.abs(xi) ** self.eta / (self.eta * (self.eta - 1.0))
        return np.where(xi < 0, np.inf, v)

    def deriv(self, xi):
        with np.errstate(divide="ignore"):
            return self.kappa * np.asarray(xi, dtype=float) ** (self.eta - 1.0) / (self.eta - 1.0)

    def deriv2(self, xi):
        with np.errstate(divide="ignore"):
            return self.kappa * np.asarray(xi, dtype=float) ** (self.eta - 2.0)

    def prox(self, gamma, rho):
        gamma = np.asarray(gamma, dtype=float)
        rho = np.asarray(rho, dtype=float)
        shape = np.broadcast_shapes(gamma.shape, rho.shape)
        gk = (gamma * self.kappa) * np.ones(shape)
        rho = rho * np.ones(shape)
        if self.eta == 2.0:
            return np.maximum(0.0, rho / (1.0 + gk))
        gk, rho = gk.ravel(), rho.ravel()
        eta = self.eta
        c = gk / (eta - 1.0)

        def g(t, i):
            return t + c[i] * t ** (eta - 1.0) - rho[i]

        def dg(t, i):
            with np.errstate(divide="ignore"):
                return 1.0 + gk[i] * t ** (eta - 2.0)

        if eta > 1:
            out = np.zeros_like(rho)
            pos = rho > 0
            if np.any(pos):
                idx = np.flatnonzero(pos)
                out[pos] = solve_root(lambda t, i: g(t, idx[i]), np.zeros(idx.size), rho[pos],
                                      deriv=lambda t, i: dg(t, idx[i]))
            return out.reshape(shape)
        # eta < 1: g runs from -inf at 0+ to +inf; root exceeds max(rho, 0)
        tc = (-c) ** (1.0 / (2.0 - eta))
        hi = np.maximum(rho, 0.0) + tc
        lo = hi.copy()
        for _ in range(2000):
            bad = g(lo, np.arange(lo.size)) > 0
            if not np.any(bad):
                break
            lo[bad] *= 0.5
        return solve_root(g, lo, hi, deriv=dg).reshape(shape)


@dataclass(frozen=True)
class Indicator:
    """Indicator of ``[0, inf)``: positivity only."""

    L0 = 0.0

    def value(self, xi):
        return np.where(np.asarray(xi) < 0, np.inf, 0.0)

    def deriv(self, xi):
        return np.zeros(np.shape(xi))

    def deriv2(self, xi):
        return np.zeros(np.shape(xi))

    def prox(self, gamma, rho):
        return np.maximum(0.0, np.asarray(rho, dtype=float) * np.ones(np.shape(gamma)))


EnergySpec = Entropy | PowerEnergy | Indicator


@dataclass(frozen=True)
class Scaled:
    """``F(xi) = base(xi) * factor``; used to express ``U / dt`` in the joint prox."""

    base: Entropy | PowerEnergy | Indicator
    factor: float

    @property
    def L0(self) -> float:
        return self.base.L0 * self.factor if np.isfinite(self.base.L0) else self.base.L0

    def value(self, xi):
        return self.factor * self.base.value(xi)

    def deriv(self, xi):
        return self.factor * self.base.deriv(xi)

    def deriv2(self, xi):
        return self.factor * self.base.deriv2(xi)

    def prox(self, gamma, rho):
        return self.base.prox(np.asarray(gamma) * self.factor, rho)


def energy_code(e) -> tuple[int, float, float]:
    """``(kind, kappa, eta)`` triple used by the compiled kernels."""
    if e is None or isinstance(e, Indicator):
        return 0, 1.0, 2.0
    if isinstance(e, Scaled):
        kind, kap, eta = energy_code(e.base)
        return kind, kap * e.factor, eta
    if isinstance(e, Entropy):
        return 1, float(e.kappa), 1.0
    if isinstance(e, PowerEnergy):
        return 2, float(e.kappa), float(e.eta)
    raise TypeError(f"unknown energy {e!r}")


def doubly_nonlinear_energy(m: float, p: float) -> Entropy | PowerEnergy:
    """Energy density ``U`` for ``rho_t = div(|grad rho^m|^(p-2) grad rho^m)``.

    ``U = s ln s / (p - 1)`` when ``m = 1/(p-1)``, otherwise
    ``m s^eta / (eta (eta - 1))`` with ``eta = m + (p - 2)/(p - 1)``.
    """
    if not p > 1:
        raise ValueError(f"need p > 1, got {p}")
    if np.isclose(m * (p - 1.0), 1.0, rtol=0, atol=1e-12):
        return Entropy(kappa=1.0 / (p - 1.0))
    eta = m + (p - 2.0) / (p - 1.0)
    return PowerEnergy(eta=eta, kappa=m)


def prox_F(e, gamma, rho):
    """``Prox_{gamma F}(rho)`` for any energy spec."""
    if np.any(np.asarray(gamma) <= 0):
        raise ValueError("prox_F needs gamma > 0")
    return e.prox(gamma, rho)


def discrete_energy(grid: GridSpec, e, rho_hat) -> float:
    """``h * sum U(rho_i)`` over the cell index set."""
    rho = np.asarray(rho_hat, dtype=float).reshape(grid.shape)
    if np.any(rho < 0):
        raise ValueError("discrete_energy needs a nonnegative density")
    return grid.h * float(np.sum(e.value(rho[grid.cell_mask])))


def singular_curvature(e) -> bool:
    """True when ``U''(s)`` is unbounded as ``s -> 0``."""
    base = e.base if isinstance(e, Scaled) else e
    return isinstance(base, Entropy) or (isinstance(base, PowerEnergy) and base.eta < 2)


def grad_Psi(grid: GridSpec, e, rho_hat, floor: float = 0.0) -> np.ndarray:
    """Density block of the gradient of ``h * sum_i U(rho_i)`` (all nodes).

    Entries are evaluated at ``max(rho_i, floor)`` when ``U''`` is unbounded at
    zero (entropy, power energies with ``eta < 2``) and at ``max(rho_i, 0)``
    otherwise.
    """
    rho = np.asarray(rho_hat, dtype=float).ravel()
    lo = floor if singular_curvature(e) else 0.0
    return grid.h * e.deriv(np.maximum(rho, lo))


def lipschitz_bound(grid: GridSpec, e, floor: float, rho_max: float) -> float:
    """Upper bound of the Lipschitz constant of :func:`grad_Psi` on ``[floor, rho_max]``."""
    if isinstance(e, Indicator):
        return 0.0
    lo = max(floor, np.finfo(float).tiny)
    return grid.h * float(max(e.deriv2(lo), e.deriv2(max(rho_max, lo))))
