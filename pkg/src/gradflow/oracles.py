"""Brute-force reference minimizers for the perspective proximal maps.

These deliberately share nothing with :mod:`gradflow.perspective` beyond the
cost/energy *values*: the prox objective is minimized directly over the
collinear reduction ``(t, w)``, ``w = |v|``, with a coarse scan followed by
nested golden-section search.  Used by the test-suite and ``prox-check``.
"""
from __future__ import annotations

import numpy as np

from .costs import CostSpec
from .energies import Indicator

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _perspective(cost: CostSpec, t, w):
    safe_t = np.where(t > 0, t, 1.0)
    val = t * cost.phi(w / safe_t)
    return np.where(t > 0, val, np.where(w == 0, 0.0, np.inf))


def _golden(fun, lo, hi, iters):
    """Vectorized golden-section minimization of convex ``fun`` on ``[lo, hi]``."""
    a, b = lo.copy(), hi.copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        # keep one interior point, evaluate only the new one
        x_new = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        f_new = fun(x_new)
        c, d = np.where(left, x_new, d), np.where(left, c, x_new)
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
    x = 0.5 * (a + b)
    return x


def brute_force_prox(cost: CostSpec, rho, mnorm, gamma, energy=None,
                     *, inner_iters: int = 70, outer_iters: int = 70, scan: int = 48):
    """Minimize ``gamma (Phi + F)(t, w) + (t - rho)^2/2 + (w - |m|)^2/2``.

    Returns ``(theta, |v|)`` arrays.  The direction of ``v`` is that of ``m``.
    """
    energy = Indicator() if energy is None else energy
    rho, mnorm, gamma = np.broadcast_arrays(*(np.asarray(x, dtype=float).ravel()
                                              for x in (rho, mnorm, gamma)))
    radius = float(getattr(cost, "radius", np.inf))

    def inner(t):
        wmax = np.minimum(mnorm, radius * t) if np.isfinite(radius) else mnorm * np.ones_like(t)

        def J(w):
            return (gamma * (_perspective(cost, t, w) + energy.value(t))
                    + 0.5 * (t - rho) ** 2 + 0.5 * (w - mnorm) ** 2)

        w = _golden(J, np.zeros_like(t), wmax, inner_iters)
        return J(w), w

    def h(t):
        return inner(t)[0]

    # grow the search interval until the objective turns upward
    T = np.abs(rho) + mnorm + 1.0
    for _ in range(60):
        grow = h(T) < h(0.9 * T)
        if not np.any(grow):
            break
        T = np.where(grow, 2.0 * T, T)

    # coarse scan (geometric near 0, linear further out) to localize the minimum
    fr = np.concatenate([[0.0], np.geomspace(1e-9, 1e-2, scan // 2),
                         np.linspace(1e-2, 1.0, scan - scan // 2)[1:]])
    grid = fr[:, None] * T[None, :]
    vals = np.stack([h(g) for g in grid])
    j = np.argmin(vals, axis=0)
    cols = np.arange(T.size)
    lo = grid[np.maximum(j - 1, 0), cols]
    hi = grid[np.minimum(j + 1, len(fr) - 1), cols]
    t = _golden(h, lo, hi, outer_iters)
    # the minimum may sit on t = 0 (the gate)
    t = np.where(h(np.zeros_like(t)) <= h(t), 0.0, t)
    _, w = inner(t)
    return t, w


def oracle_pairs():
    """``(label, cost, energy)`` triples covered by the prox equivalence battery."""
    from .costs import Power, Relativistic
    from .energies import Entropy, PowerEnergy

    energies = [("indicator", Indicator()), ("entropy", Entropy())] + [
        (f"power(eta={eta:g})", PowerEnergy(eta)) for eta in (1.5, 2.0, 3.0)]
    costs = [(f"power(p={p:g})", Power.from_p(p)) for p in (1.5, 2.0, 3.0)] + [
        (f"relativistic(alpha={a:g}, k={k:g})", Relativistic(a, k))
        for a, k in ((1.0, 1.0), (2.0, 0.5), (1.0, 10.0))]
    return [(f"{cl} x {el}", c, e) for cl, c in costs for el, e in energies]


def sample_queries(rng: np.random.Generator, n: int):
    """Random prox inputs ``(rho, m, gamma)`` with ``m`` of shape ``(n, 2)``.

    ``rho ~ U[-2, 2]``, ``|m| ~ U[0, 2]`` in a uniform direction and ``gamma``
    log-uniform on ``[1e-3, 10]``.
    """
    rho = rng.uniform(-2.0, 2.0, n)
    direction = rng.normal(size=(n, 2))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    mom = direction * rng.uniform(0.0, 2.0, (n, 1))
    gamma = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), n))
    return rho, mom, gamma


def oracle_suite(samples: int = 1000, seed: int = 0):
    """Max absolute deviation between the specialized prox and the brute-force oracle.

    Returns a list of ``(label, deviation)``; every pair sees its own seeded
    stream of ``samples`` random queries.
    """
    from .perspective import prox_perspective

    out = []
    for j, (label, cost, energy) in enumerate(oracle_pairs()):
        if samples <= 0:
            out.append((label, 0.0))
            continue
        rng = np.random.default_rng([seed, j])
        rho, mom, gamma = sample_queries(rng, samples)
        res = prox_perspective(cost, rho, mom, gamma, energy)
        theta, w = brute_force_prox(cost, rho, np.linalg.norm(mom, axis=1), gamma, energy)
        vnorm = np.linalg.norm(res.v, axis=1)
        dev = max(float(np.max(np.abs(np.asarray(res.theta).ravel() - theta))),
                  float(np.max(np.abs(vnorm - w))))
        out.append((label, dev))
    return out
