"""Proximal maps of perspective functions plus a separable energy.

All routines here act pointwise on arrays of queries.  ``rho`` has shape
``S``; ``mom`` has shape ``S`` (scalar momentum) or ``S + (d,)``.  Each routine
returns ``(theta, v)`` such that ``v = factor * mom`` with ``factor`` in
``[0, 1]``.

For ``gamma * (Phi + F)``, the positive branch reduces to one increasing
scalar equation in ``theta`` bracketed by ``[Prox_{gamma F} rho, theta_bar]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import ConeLimit, CostSpec, Power, QuadraticLimit, Relativistic, prox_phi_star
from . import _kernels
from .energies import Indicator, Scaled, energy_code
from .roots import RootFindingError, solve_root

_INDICATOR = Indicator()


@dataclass
class ProxResult:
    theta: np.ndarray
    v: np.ndarray
    factor: np.ndarray
    iterations: np.ndarray = field(default=None, repr=False)
    lo: np.ndarray = field(default=None, repr=False)
    hi: np.ndarray = field(default=None, repr=False)

    def __iter__(self):
        yield self.theta
        yield self.v


def _split(rho, mom):
    rho = np.asarray(rho, dtype=float)
    mom = np.asarray(mom, dtype=float)
    if mom.shape == rho.shape:
        mnorm = np.abs(mom)
    elif mom.shape[:-1] == rho.shape:
        mnorm = np.sqrt(np.sum(mom ** 2, axis=-1))
    else:
        raise ValueError(f"momentum shape {mom.shape} does not match density shape {rho.shape}")
    return rho, mom, mnorm


def _apply_factor(factor, mom, rho_shape):
    if mom.shape == rho_shape:
        return factor * mom
    return factor[..., None] * mom


def _finish(theta, factor, mom, rho_shape, iters=None, lo=None, hi=None):
    theta = np.asarray(theta, dtype=float).reshape(rho_shape)
    factor = np.asarray(factor, dtype=float).reshape(rho_shape)
    return ProxResult(theta, _apply_factor(factor, mom, rho_shape), factor,
                      None if iters is None else np.asarray(iters).reshape(rho_shape),
                      None if lo is None else np.asarray(lo).reshape(rho_shape),
                      None if hi is None else np.asarray(hi).reshape(rho_shape))


def _energy(energy):
    return _INDICATOR if energy is None else energy


def _gamma_array(gamma, shape):
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), shape).ravel()
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive")
    return gamma


def _slack(energy, t, gamma, rho):
    """``t + gamma F'(t) - rho``, clipped at 0 (it is >= 0 on the bracket)."""
    return np.maximum(t + gamma * energy.deriv(t) - rho, 0.0)


# general route


def residual_general(cost, energy, gamma, rho, mnorm, t):
    """``t + g F'(t) - rho - g phi*(Prox_{(t/g) phi*}(|m|/g))``."""
    energy = _energy(energy)
    lam = np.maximum(t / gamma, 1e-300)
    chi = prox_phi_star(cost, lam, mnorm / gamma, rtol=1e-15)
    return t + gamma * energy.deriv(t) - rho - gamma * cost.phi_star(chi)


def prox_general(cost: CostSpec, rho, mom, gamma, energy=None, *, rtol: float = 1e-13) -> ProxResult:
    """Prox of ``gamma (Phi_c + F)`` through the generic residual.

    The inner ``Prox_{(t/gamma) phi*}`` is itself a scalar solve, and Newton
    slopes come from finite differences; this route is the slow reference.
    """
    if isinstance(cost, ConeLimit):
        raise ValueError("the cone limit has a nondifferentiable conjugate; use prox_cone")
    energy = _energy(energy)
    rho, mom, mnorm = _split(rho, mom)
    shape = rho.shape
    r, mn = rho.ravel(), mnorm.ravel()
    g = _gamma_array(gamma, r.shape)
    gate = r + g * cost.phi_star(mn / g) <= g * energy.L0
    theta = np.zeros_like(r)
    factor = np.zeros_like(r)
    iters = np.zeros(r.shape, dtype=int)
    lo_out = np.zeros_like(r)
    hi_out = np.zeros_like(r)
    act = np.flatnonzero(~gate)
    if act.size:
        ra, ma, ga = r[act], mn[act], g[act]
        lo = energy.prox(ga, ra)
        hi = energy.prox(ga, ra + ga * cost.phi_star(ma / ga))
        hi = np.maximum(hi, lo)
        th, it = solve_root(
            lambda t, i: residual_general(cost, energy, ga[i], ra[i], ma[i], t),
            lo, hi, rtol=rtol, return_info=True)
        theta[act], iters[act], lo_out[act], hi_out[act] = th, it, lo, hi
        nz = ma > 0
        fac = np.zeros_like(th)
        if np.any(nz):
            lam = np.maximum(th[nz] / ga[nz], 1e-300)
            chi = prox_phi_star(cost, lam, ma[nz] / ga[nz], rtol=1e-15)
            fac[nz] = 1.0 - ga[nz] * chi / ma[nz]
        factor[act] = np.clip(fac, 0.0, 1.0)
    return _finish(theta, factor, mom, shape, iters, lo_out, hi_out)


# relativistic cost


def residual_relativistic(alpha, k, energy, gamma, rho, mnorm, t):
    """Closed-form residual ``R^c`` written with ``s = t + g F'(t) - rho``.

    ``(k^2 t + s + a)/(s + a) * sqrt(s (s + 2a)) - k|m|`` with
    ``a = g k^2 / alpha``; equal to the textbook form and free of ``0 * inf``
    at ``s = 0``.
    """
    energy = _energy(energy)
    a = gamma * k ** 2 / alpha
    s = _slack(energy, t, gamma, rho)
    return (k ** 2 * t + s + a) / (s + a) * np.sqrt(s * (s + 2.0 * a)) - k * mnorm


def _relativistic_deriv(alpha, k, energy, gamma, rho, t):
    a = gamma * k ** 2 / alpha
    s = _slack(energy, t, gamma, rho)
    ds = 1.0 + gamma * energy.deriv2(t)
    P = (k ** 2 * t + s + a) / (s + a)
    dP = k ** 2 * ((s + a) - t * ds) / (s + a) ** 2
    Q = np.sqrt(s * (s + 2.0 * a))
    with np.errstate(divide="ignore", invalid="ignore"):
        dQ = (s + a) * ds / Q
    return dP * Q + P * dQ


def _kernel_call(batch, params, rho, mom, gamma, energy, rtol):
    rho, mom, mnorm = _split(rho, mom)
    shape = rho.shape
    r = np.ascontiguousarray(rho.ravel())
    mn = np.ascontiguousarray(mnorm.ravel())
    g = np.ascontiguousarray(_gamma_array(gamma, r.shape))
    kind, kap, eta = energy_code(energy)
    theta, fac, iters, lo, hi = batch(*params, kind, kap, eta, r, mn, g, float(rtol))
    bad = np.isnan(theta) | np.isnan(fac)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise RootFindingError("perspective prox failed to converge", index=idx, rho=r[idx],
                               mnorm=mn[idx], gamma=g[idx], lo=lo[idx], hi=hi[idx])
    return _finish(theta, fac, mom, shape, iters, lo, hi)


def prox_relativistic(alpha: float, k: float, rho, mom, gamma, energy=None, *,
                      rtol: float = 1e-13) -> ProxResult:
    """Prox of ``gamma (Phi_{alpha,k} + F)`` for the relativistic cost."""
    if not (alpha > 0 and k > 0):
        raise ValueError("alpha and k must be positive")
    return _kernel_call(_kernels.relativistic_prox_batch, (float(alpha), float(k)),
                        rho, mom, gamma, energy, rtol)


def prox_relativistic_np(alpha: float, k: float, rho, mom, gamma, energy=None, *,
                         rtol: float = 1e-13) -> ProxResult:
    """Vectorized numpy version of :func:`prox_relativistic` (reference route)."""
    energy = _energy(energy)
    rho, mom, mnorm = _split(rho, mom)
    shape = rho.shape
    r, mn = rho.ravel(), mnorm.ravel()
    g = _gamma_array(gamma, r.shape)
    a = g * k ** 2 / alpha
    # sqrt(a^2 + k^2 |m|^2) - a, rationalized
    lift = (k * mn) ** 2 / (np.hypot(a, k * mn) + a)
    gate = r + lift <= g * energy.L0
    theta = np.zeros_like(r)
    factor = np.zeros_like(r)
    iters = np.zeros(r.shape, dtype=int)
    lo_out = np.zeros_like(r)
    hi_out = np.zeros_like(r)
    act = np.flatnonzero(~gate)
    if act.size:
        ra, ma, ga, aa = r[act], mn[act], g[act], a[act]
        lo = energy.prox(ga, ra)
        # R^c + k|m| >= k^2 lo sqrt(1 - a^2/(s+a)^2) caps s when k|m| < k^2 lo
        ratio = np.where(lo > 0, ma / (k * np.where(lo > 0, lo, 1.0)), np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.minimum(ratio, 1.0) ** 2
            cap = np.where(ratio < 1.0, aa * r2 / (np.sqrt(1.0 - r2) * (1.0 + np.sqrt(1.0 - r2))),
                           np.inf)
        s_max = np.minimum(lift[act], cap)
        hi = np.maximum(energy.prox(ga, ra + s_max), lo)
        th, it = solve_root(
            lambda t, i: residual_relativistic(alpha, k, energy, ga[i], ra[i], ma[i], t),
            lo, hi,
            deriv=lambda t, i: _relativistic_deriv(alpha, k, energy, ga[i], ra[i], t),
            rtol=rtol, fscale=k * ma, return_info=True)
        s = _slack(energy, th, ga, ra)
        denom = k ** 2 * th + s + aa
        fac = np.where(denom > 0, k ** 2 * th / np.where(denom > 0, denom, 1.0), 0.0)
        theta[act], iters[act], lo_out[act], hi_out[act] = th, it, lo, hi
        factor[act] = np.clip(fac, 0.0, 1.0)
    res = _finish(theta, factor, mom, shape, iters, lo_out, hi_out)
    # |v| <= k theta holds analytically; trim roundoff
    vn = factor.reshape(shape) * mnorm
    over = vn > k * res.theta
    if np.any(over):
        fix = np.where(over, k * res.theta / np.where(vn > 0, vn, 1.0), 1.0)
        res.factor = res.factor * fix
        res.v = _apply_factor(res.factor, mom, shape)
    return res


# power cost


def residual_power(p, energy, gamma, rho, mnorm, t):
    """``R^p(t) = (g s^{1/p} + t (p/g)^{1-2/p} s^{1-1/p})^p - g |m|^p / p``."""
    energy = _energy(energy)
    s = _slack(energy, t, gamma, rho)
    inner = gamma * s ** (1.0 / p) + t * (p / gamma) ** (1.0 - 2.0 / p) * s ** (1.0 - 1.0 / p)
    return inner ** p - gamma * mnorm ** p / p


def _power_root_form(p, energy, gamma, rho, mnorm, t):
    # p-th root of R^p + g|m|^p/p, minus its target: same root, better scaled
    s = _slack(energy, t, gamma, rho)
    c1 = (p / gamma) ** (1.0 - 2.0 / p)
    return (gamma * s ** (1.0 / p) + t * c1 * s ** (1.0 - 1.0 / p)
            - (gamma / p) ** (1.0 / p) * mnorm)


def _power_root_deriv(p, energy, gamma, rho, t):
    s = _slack(energy, t, gamma, rho)
    ds = 1.0 + gamma * energy.deriv2(t)
    c1 = (p / gamma) ** (1.0 - 2.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (gamma / p * s ** (1.0 / p - 1.0) * ds
                + c1 * s ** (1.0 - 1.0 / p)
                + t * c1 * (1.0 - 1.0 / p) * s ** (-1.0 / p) * ds)


def prox_power(p: float, rho, mom, gamma, energy=None, *, rtol: float = 1e-13) -> ProxResult:
    """Prox of ``gamma (Phi_p + F)`` with ``Phi_p(rho, m) = |m|^q / (q rho^{q-1})``."""
    if not p > 1:
        raise ValueError(f"need p > 1, got {p}")
    return _kernel_call(_kernels.power_prox_batch, (float(p),), rho, mom, gamma, energy, rtol)


def prox_power_np(p: float, rho, mom, gamma, energy=None, *, rtol: float = 1e-13) -> ProxResult:
    """Vectorized numpy version of :func:`prox_power` (reference route)."""
    if not p > 1:
        raise ValueError(f"need p > 1, got {p}")
    energy = _energy(energy)
    q = p / (p - 1.0)
    rho, mom, mnorm = _split(rho, mom)
    shape = rho.shape
    r, mn = rho.ravel(), mnorm.ravel()
    g = _gamma_array(gamma, r.shape)
    lift = mn ** p / (p * g ** (p - 1.0))
    gate = r + lift <= g * energy.L0
    theta = np.zeros_like(r)
    factor = np.zeros_like(r)
    iters = np.zeros(r.shape, dtype=int)
    lo_out = np.zeros_like(r)
    hi_out = np.zeros_like(r)
    act = np.flatnonzero(~gate)
    if act.size:
        ra, ma, ga = r[act], mn[act], g[act]
        lo = energy.prox(ga, ra)
        # R^p + g|m|^p/p >= (t c1 s^{1-1/p})^p with t >= lo caps the slack s
        # far below |m|^p/(p g^{p-1}) when g is small
        c1 = (p / ga) ** (1.0 - 2.0 / p)
        with np.errstate(divide="ignore", over="ignore"):
            cap = ((ga / p) ** (1.0 / p) * ma / (lo * c1)) ** q
        s_max = np.minimum(lift[act], np.where(lo > 0, cap, np.inf))
        hi = np.maximum(energy.prox(ga, ra + s_max), lo)
        th, it = solve_root(
            lambda t, i: _power_root_form(p, energy, ga[i], ra[i], ma[i], t),
            lo, hi,
            deriv=lambda t, i: _power_root_deriv(p, energy, ga[i], ra[i], t),
            rtol=rtol, return_info=True)
        s = _slack(energy, th, ga, ra)
        e = 1.0 - 2.0 / q
        c = ga ** (2.0 / q) * p ** e
        with np.errstate(divide="ignore", invalid="ignore"):
            if e >= 0:
                fac = th / (th + c * s ** e)
            else:
                w = th * s ** (-e)
                fac = w / (w + c)
        fac = np.where((ma > 0) & (th > 0), fac, 0.0)
        theta[act], iters[act], lo_out[act], hi_out[act] = th, it, lo, hi
        factor[act] = np.clip(np.nan_to_num(fac), 0.0, 1.0)
    return _finish(theta, factor, mom, shape, iters, lo_out, hi_out)


# limits


def prox_cone(k: float, rho, mom) -> ProxResult:
    """Projection onto ``{(rho, m) : |m| <= k rho}``."""
    if not k > 0:
        raise ValueError(f"need k > 0, got {k}")
    rho, mom, mnorm = _split(rho, mom)
    shape = rho.shape
    r, mn = rho.ravel(), mnorm.ravel()
    theta = np.zeros_like(r)
    factor = np.zeros_like(r)
    live = r + k * mn > 0
    inside = live & (mn <= k * r)
    proj = live & ~inside
    theta[inside] = r[inside]
    factor[inside] = 1.0
    t = (r[proj] + k * mn[proj]) / (1.0 + k ** 2)
    theta[proj] = t
    factor[proj] = k * t / mn[proj]
    return _finish(theta, factor, mom, shape)


def _largest_cubic_root(b, c, d):
    """Largest real root of ``t^3 + b t^2 + c t + d`` (vectorized)."""
    p = c - b ** 2 / 3.0
    q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    out = np.empty_like(b)
    one = disc >= 0
    sq = np.sqrt(np.where(one, disc, 0.0))
    out[one] = (np.cbrt(-q[one] / 2.0 + sq[one]) + np.cbrt(-q[one] / 2.0 - sq[one])
                - b[one] / 3.0)
    three = ~one
    if np.any(three):
        pp = p[three]
        r = np.sqrt(-pp / 3.0)
        arg = np.clip(-q[three] / (2.0 * r ** 3), -1.0, 1.0)
        out[three] = 2.0 * r * np.cos(np.arccos(arg) / 3.0) - b[three] / 3.0
    return out


def prox_quadratic_limit(alpha: float, rho, mom, gamma) -> ProxResult:
    """Prox of ``gamma |m|^2 / (2 alpha rho)`` via the cubic
    ``(t + gamma/alpha)^2 (t - rho) = gamma |m|^2 / (2 alpha)``.
    """
    if not alpha > 0:
        raise ValueError(f"need alpha > 0, got {alpha}")
    rho, mom, mnorm = _split(rho, mom)
    shape = rho.shape
    r, mn = rho.ravel(), mnorm.ravel()
    g = _gamma_array(gamma, r.shape)
    gate = r + alpha * mn ** 2 / (2.0 * g) <= 0
    theta = np.zeros_like(r)
    factor = np.zeros_like(r)
    act = ~gate
    if np.any(act):
        ra, ma, ga = r[act], mn[act], g[act]
        c = ga / alpha
        K = ga * ma ** 2 / (2.0 * alpha)
        t = _largest_cubic_root(2.0 * c - ra, c ** 2 - 2.0 * c * ra, -(c ** 2 * ra + K))
        t = np.maximum(t, np.maximum(ra, 0.0))
        for _ in range(3):
            f = (t + c) ** 2 * (t - ra) - K
            df = 2.0 * (t + c) * (t - ra) + (t + c) ** 2
            t = np.maximum(t - np.where(df > 0, f / np.where(df > 0, df, 1.0), 0.0),
                           np.maximum(ra, 0.0))
        theta[act] = t
        factor[act] = np.where(ma > 0, t / (t + c), 0.0)
    return _finish(theta, factor, mom, shape)


def perspective_value(cost: CostSpec, rho, mnorm):
    """``Phi_c(rho, m) = rho phi(|m|/rho)``, with ``Phi(0, 0) = 0`` and ``+inf`` off the domain."""
    rho = np.asarray(rho, dtype=float)
    mnorm = np.asarray(mnorm, dtype=float)
    pos = rho > 0
    safe = np.where(pos, rho, 1.0)
    val = safe * cost.phi(mnorm / safe)
    return np.where(pos, val, np.where((rho == 0) & (mnorm == 0), 0.0, np.inf))


def prox_perspective(cost: CostSpec, rho, mom, gamma, energy=None, *,
                     rtol: float = 1e-13) -> ProxResult:
    """Dispatch to the specialized closed-form residual for ``cost``."""
    energy = _energy(energy)
    plain = isinstance(energy, Indicator) or (
        isinstance(energy, Scaled) and isinstance(energy.base, Indicator))
    if isinstance(cost, Power):
        return prox_power(cost.p, rho, mom, gamma, energy, rtol=rtol)
    if isinstance(cost, Relativistic):
        return prox_relativistic(cost.alpha, cost.k, rho, mom, gamma, energy, rtol=rtol)
    if isinstance(cost, QuadraticLimit):
        if plain:
            return prox_quadratic_limit(cost.alpha, rho, mom, gamma)
        # gamma (|m|^2/(2 alpha rho) + F) = (gamma/alpha) (Phi_2 + alpha F)
        g = np.asarray(gamma, dtype=float) / cost.alpha
        return prox_power(2.0, rho, mom, g, Scaled(energy, cost.alpha), rtol=rtol)
    if isinstance(cost, ConeLimit):
        if not plain:
            raise ValueError("the cone limit is only supported without an internal energy")
        return prox_cone(cost.k, rho, mom)
    raise TypeError(f"unknown cost {cost!r}")


__all__ = [
    "ProxResult", "RootFindingError", "prox_general", "prox_relativistic", "prox_power",
    "prox_cone", "prox_quadratic_limit", "prox_power_np", "prox_relativistic_np", "prox_perspective", "residual_general",
    "residual_relativistic", "residual_power", "perspective_value",
]
