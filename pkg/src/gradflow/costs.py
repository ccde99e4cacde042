"""Radial transport costs ``c = phi(|x|)`` and their conjugates.

Every function here is vectorized over numpy arrays.  ``phi`` takes the value
``+inf`` outside its domain; ``phi_star`` is finite everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roots import solve_root


@dataclass(frozen=True)
class Power:
    """``phi(xi) = |xi|^q / q`` with conjugate ``|s|^p / p``."""

    q: float

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError(f"Power cost needs q > 1, got {self.q}")

    @property
    def p(self) -> float:
        return self.q / (self.q - 1.0)

    @classmethod
    def from_p(cls, p: float) -> "Power":
        if not p > 1:
            raise ValueError(f"Power cost needs p > 1, got {p}")
        return cls(p / (p - 1.0))

    radius = np.inf

    def phi(self, xi):
        return np.abs(xi) ** self.q / self.q

    def dphi(self, xi):
        xi = np.asarray(xi, dtype=float)
        return np.sign(xi) * np.abs(xi) ** (self.q - 1.0)

    def phi_star(self, s):
        return np.abs(s) ** self.p / self.p

    def dphi_star(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * np.abs(s) ** (self.p - 1.0)

    def d2phi_star(self, s):
        return (self.p - 1.0) * np.abs(s) ** (self.p - 2.0)


@dataclass(frozen=True)
class Relativistic:
    """``phi(xi) = (k^2/alpha) (1 - sqrt(1 - (xi/k)^2))`` on ``[-k, k]``."""

    alpha: float
    k: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.k > 0):
            raise ValueError(f"Relativistic cost needs alpha, k > 0, got {self.alpha}, {self.k}")

    @property
    def radius(self) -> float:
        return self.k

    @property
    def scale(self) -> float:
        return self.k ** 2 / self.alpha

    def phi(self, xi):
        ax = np.abs(np.asarray(xi, dtype=float))
        inside = ax <= self.k
        # 1 - r^2 = d (2 - d) with d = (k - |xi|)/k, exact near the edge
        d = np.where(inside, (self.k - ax) / self.k, 1.0)
        r2 = np.where(inside, (ax / self.k) ** 2, 0.0)
        # 1 - sqrt(1 - r^2) without cancellation
        val = self.scale * r2 / (1.0 + np.sqrt(d * (2.0 - d)))
        return np.where(inside, val, np.inf)

    def dphi(self, xi):
        xi = np.asarray(xi, dtype=float)
        return xi / (self.alpha * np.sqrt(1.0 - (xi / self.k) ** 2))

    def phi_star(self, s):
        a = self.scale
        ks = self.k * np.asarray(s, dtype=float)
        # sqrt(a^2 + (ks)^2) - a, rationalized
        return ks ** 2 / (np.sqrt(a ** 2 + ks ** 2) + a)

    def dphi_star(self, s):
        s = np.asarray(s, dtype=float)
        return self.k ** 2 * s / np.hypot(self.scale, self.k * s)

    def d2phi_star(self, s):
        a = self.scale
        r = np.hypot(a, self.k * np.asarray(s, dtype=float))
        return self.k ** 2 * a ** 2 / r ** 3


@dataclass(frozen=True)
class ConeLimit:
    """``alpha -> inf`` limit: indicator of ``[-k, k]``, conjugate ``k|s|``."""

    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"ConeLimit needs k > 0, got {self.k}")

    @property
    def radius(self) -> float:
        return self.k

    def phi(self, xi):
        return np.where(np.abs(xi) <= self.k, 0.0, np.inf)

    def phi_star(self, s):
        return self.k * np.abs(s)


@dataclass(frozen=True)
class QuadraticLimit:
    """``k -> inf`` limit: ``phi(xi) = xi^2 / (2 alpha)``."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"QuadraticLimit needs alpha > 0, got {self.alpha}")

    radius = np.inf

    def phi(self, xi):
        return np.asarray(xi, dtype=float) ** 2 / (2.0 * self.alpha)

    def dphi(self, xi):
        return np.asarray(xi, dtype=float) / self.alpha

    def phi_star(self, s):
        return self.alpha * np.asarray(s, dtype=float) ** 2 / 2.0

    def dphi_star(self, s):
        return self.alpha * np.asarray(s, dtype=float)

    def d2phi_star(self, s):
        return np.full(np.shape(s), self.alpha)


CostSpec = Power | Relativistic | ConeLimit | QuadraticLimit


def phi_value(c: CostSpec, xi):
    return c.phi(xi)


def phi_star_value(c: CostSpec, s):
    return c.phi_star(s)


def prox_phi_star(c: CostSpec, lam, s, *, rtol: float = 1e-13):
    """``Prox_{lam phi*}(s)`` for ``s >= 0``: the ``chi`` in ``[0, s]`` with
    ``chi + lam (phi*)'(chi) = s``.
    """
    lam = np.asarray(lam, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("prox_phi_star needs lam > 0")
    if np.any(s < 0):
        raise ValueError("prox_phi_star is defined here for s >= 0")
    if isinstance(c, ConeLimit):
        return np.maximum(0.0, s - lam * c.k)
    if isinstance(c, QuadraticLimit):
        return s / (1.0 + lam * c.alpha)
    if isinstance(c, Power) and c.p == 2.0:
        return s / (1.0 + lam)
    shape = np.broadcast_shapes(lam.shape, s.shape)
    lam, s = (np.broadcast_to(v, shape).ravel() for v in (lam, s))
    chi = solve_root(
        lambda x, i: x + lam[i] * c.dphi_star(x) - s[i],
        np.zeros_like(s), s.copy(),
        deriv=lambda x, i: 1.0 + lam[i] * c.d2phi_star(x),
        rtol=rtol,
    )
    return chi.reshape(shape) if shape else float(chi[0])
