"""Compiled scalar kernels behind the per-node proximal maps.

Energies are passed as ``(kind, kappa, eta)`` with ``kind`` 0 = indicator of
``[0, inf)``, 1 = ``kappa xi ln xi``, 2 = ``kappa xi^eta / (eta (eta - 1))``.
Scaling an energy by a positive factor only rescales ``kappa``.

Every solve is a safeguarded Newton iteration on an increasing residual with
a valid bracket; a NaN result marks a failed node (the Python caller raises).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

IND, ENT, POW = 0, 1, 2
MAX_ITER = 200
_TINY = 2.2250738585072014e-308

# residual modes for _solve
_M_POW_ENERGY = 0
_M_POWER = 1
_M_REL = 2


@njit(cache=True)
def e_deriv(kind, kap, eta, t):
    if kind == IND:
        return 0.0
    if kind == ENT:
        if t <= 0.0:
            return -math.inf
        return kap * (math.log(t) + 1.0)
    if t <= 0.0:
        return 0.0 if eta > 1.0 else -math.inf
    return kap * t ** (eta - 1.0) / (eta - 1.0)


@njit(cache=True)
def e_deriv2(kind, kap, eta, t):
    if kind == IND:
        return 0.0
    if kind == ENT:
        return kap / t if t > 0.0 else math.inf
    if t <= 0.0:
        return 0.0 if eta > 2.0 else (kap if eta == 2.0 else math.inf)
    return kap * t ** (eta - 2.0)


@njit(cache=True)
def e_L0(kind, eta):
    if kind == ENT:
        return -math.inf
    if kind == POW and eta < 1.0:
        return -math.inf
    return 0.0


@njit(cache=True)
def _omega(z):
    """Wright omega: the ``w > 0`` with ``w + ln w = z``, returned as ``ln w``."""
    if z > 1.0:
        y = math.log(z - math.log(z))
    elif z < -2.0:
        y = z
    else:
        y = math.log(0.5671432904097838) + (z - 1.0) * 0.36
    for _ in range(100):
        ey = math.exp(y)
        g = ey + y - z
        step = g / (ey + 1.0)
        y -= step
        if abs(step) <= 4e-16 * max(1.0, abs(y)):
            break
    return y


@njit(cache=True)
def _eval(mode, t, prm):
    """Residual and slope of the scalar equation ``mode`` at ``t``."""
    if mode == _M_POW_ENERGY:
        # t + c t^(eta-1) - r,  prm = (c, eta, r, gk)
        c, eta, r, gk = prm[0], prm[1], prm[2], prm[3]
        if t <= 0.0:
            return (-math.inf if eta < 1.0 else -r), math.inf
        f = t + c * t ** (eta - 1.0) - r
        return f, 1.0 + gk * t ** (eta - 2.0)
    kind, kap, eta = int(prm[0]), prm[1], prm[2]
    g, r, mn = prm[3], prm[4], prm[5]
    s = max(t + g * e_deriv(kind, kap, eta, t) - r, 0.0)
    ds = 1.0 + g * e_deriv2(kind, kap, eta, t)
    if mode == _M_POWER:
        p = prm[6]
        c1 = (p / g) ** (1.0 - 2.0 / p)
        f = g * s ** (1.0 / p) + t * c1 * s ** (1.0 - 1.0 / p) - (g / p) ** (1.0 / p) * mn
        if s == 0.0:
            return f, math.inf
        df = (g / p * s ** (1.0 / p - 1.0) * ds + c1 * s ** (1.0 - 1.0 / p)
              + t * c1 * (1.0 - 1.0 / p) * s ** (-1.0 / p) * ds)
        return f, df
    # relativistic: prm[6] = k, prm[7] = a = g k^2 / alpha
    k, a = prm[6], prm[7]
    P = (k * k * t + s + a) / (s + a)
    Q = math.sqrt(s * (s + 2.0 * a))
    f = P * Q - k * mn
    if Q == 0.0:
        return f, math.inf
    dP = k * k * ((s + a) - t * ds) / (s + a) ** 2
    return f, dP * Q + P * (s + a) * ds / Q


@njit(cache=True)
def _solve(mode, prm, lo, hi, rtol, fscale, x0=math.nan):
    """Root of an increasing residual on ``[lo, hi]``; returns ``(root, iterations)``.

    ``x0`` inside the bracket replaces the regula falsi starting point.
    """
    flo, _ = _eval(mode, lo, prm)
    if flo >= 0.0:
        return lo, 0
    fhi, _ = _eval(mode, hi, prm)
    if fhi <= 0.0:
        return hi, 0
    if hi - lo <= 1e-14 * max(1.0, abs(hi)):
        return hi, 0
    a, b = lo, hi
    w = b - a
    x = a - flo * w / (fhi - flo) if math.isfinite(flo) else 0.5 * (a + b)
    if not math.isfinite(x):
        x = 0.5 * (a + b)
    if a < x0 < b:
        x = x0
    x = min(max(x, a + 1e-6 * w), b - 1e-6 * w)
    dx_old = w
    for it in range(1, MAX_ITER + 1):
        f, df = _eval(mode, x, prm)
        if f != f:
            return math.nan, it
        if f == 0.0 or abs(f) <= rtol * fscale:
            return x, it
        if f < 0.0:
            a = x
        else:
            b = x
        ok = False
        xn = 0.5 * (a + b)
        step = 0.0
        if df > 0.0 and math.isfinite(df):
            step = f / df
            cand = x - step
            if a < cand < b and abs(2.0 * f) <= abs(dx_old * df):
                ok = True
                xn = cand
        if ok:
            dx_old = abs(step)
            if abs(step) <= rtol * max(abs(x), 1e-300):
                return xn, it
        else:
            dx_old = 0.5 * (b - a)
        if b - a <= 1e-14 * max(1.0, abs(b)):
            return xn, it
        x = xn
    return math.nan, MAX_ITER


@njit(cache=True)
def e_prox(kind, kap, eta, g, r, prm):
    """``Prox_{g F}(r)``; ``prm`` is scratch space of length >= 4."""
    if kind == IND:
        return max(r, 0.0)
    gk = g * kap
    if kind == ENT:
        # theta = gk * omega(r/gk - 1 - ln gk)
        y = _omega(r / gk - 1.0 - math.log(gk))
        return max(gk * math.exp(y), _TINY)
    if eta == 2.0:
        return max(r / (1.0 + gk), 0.0)
    c = gk / (eta - 1.0)
    prm[0], prm[1], prm[2], prm[3] = c, eta, r, gk
    if eta > 1.0:
        if r <= 0.0:
            return 0.0
        t, _ = _solve(_M_POW_ENERGY, prm, 0.0, r, 1e-15, 0.0)
        return t
    # eta < 1: the root exceeds max(r, 0); f(hi) >= 0 for hi below
    hi = max(r, 0.0) + (-c) ** (1.0 / (2.0 - eta))
    lo = hi
    for _ in range(4000):
        f, _ = _eval(_M_POW_ENERGY, lo, prm)
        if f <= 0.0:
            break
        lo *= 0.5
    t, _ = _solve(_M_POW_ENERGY, prm, lo, hi, 1e-15, 0.0)
    return t


@njit(cache=True)
def energy_prox_batch(kind, kap, eta, g, r):
    out = np.empty(r.size)
    prm = np.zeros(8)
    for i in range(r.size):
        out[i] = e_prox(kind, kap, eta, g[i], r[i], prm)
    return out


@njit(cache=True)
def power_prox_node(p, kind, kap, eta, g, r, m, rtol, prm, scratch, x0):
    """One node of the prox of ``g (Phi_p + F)``; returns theta, factor, iterations, lo, hi."""
    L0 = e_L0(kind, eta)
    lift = m ** p / (p * g ** (p - 1.0))
    if r + lift <= g * L0:
        return 0.0, 0.0, 0, 0.0, 0.0
    q = p / (p - 1.0)
    lo = e_prox(kind, kap, eta, g, r, scratch)
    c1 = (p / g) ** (1.0 - 2.0 / p)
    s_max = lift
    if lo > 0.0:
        # t c1 s^(1-1/p) <= (g/p)^(1/p) |m| with t >= lo caps the slack
        s_max = min(lift, ((g / p) ** (1.0 / p) * m / (lo * c1)) ** q)
    hi = max(e_prox(kind, kap, eta, g, r + s_max, scratch), lo)
    prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6] = kind, kap, eta, g, r, m, p
    t, it = _solve(_M_POWER, prm, lo, hi, rtol, 0.0, x0)
    if t != t:
        return t, math.nan, it, lo, hi
    fac = 0.0
    if m > 0.0 and t > 0.0:
        s = max(t + g * e_deriv(kind, kap, eta, t) - r, 0.0)
        e = 1.0 - 2.0 / q
        c = g ** (2.0 / q) * p ** e
        if e >= 0.0:
            v = t / (t + c * s ** e)
        else:
            wv = t * s ** (-e)
            v = wv / (wv + c)
        fac = min(max(v, 0.0), 1.0) if v == v else 0.0
    return t, fac, it, lo, hi


@njit(cache=True)
def relativistic_prox_node(alpha, k, kind, kap, eta, g, r, m, rtol, prm, scratch, x0):
    """One node of the prox of ``g (Phi_{alpha,k} + F)``; same outputs as :func:`power_prox_node`."""
    L0 = e_L0(kind, eta)
    a = g * k * k / alpha
    km = k * m
    lift = km * km / (math.hypot(a, km) + a)
    if r + lift <= g * L0:
        return 0.0, 0.0, 0, 0.0, 0.0
    lo = e_prox(kind, kap, eta, g, r, scratch)
    s_max = lift
    if lo > 0.0:
        ratio = m / (k * lo)
        if ratio < 1.0:
            r2 = ratio * ratio
            sq = math.sqrt(1.0 - r2)
            s_max = min(lift, a * r2 / (sq * (1.0 + sq)))
    hi = max(e_prox(kind, kap, eta, g, r + s_max, scratch), lo)
    prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7] = kind, kap, eta, g, r, m, k, a
    t, it = _solve(_M_REL, prm, lo, hi, rtol, km, x0)
    if t != t:
        return t, math.nan, it, lo, hi
    s = max(t + g * e_deriv(kind, kap, eta, t) - r, 0.0)
    den = k * k * t + s + a
    v = k * k * t / den if den > 0.0 else 0.0
    v = min(max(v, 0.0), 1.0)
    # |v m| <= k theta holds analytically; trim roundoff
    if v * m > k * t:
        v = k * t / m if m > 0.0 else 0.0
    return t, v, it, lo, hi


@njit(cache=True)
def power_prox_batch(p, kind, kap, eta, rho, mn, gam, rtol):
    """Per-node prox of ``g (Phi_p + F)``; returns theta, factor, iterations, lo, hi."""
    n = rho.size
    theta, fac, lo, hi = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    iters = np.zeros(n, dtype=np.int64)
    prm, scratch = np.zeros(8), np.zeros(8)
    for i in range(n):
        theta[i], fac[i], iters[i], lo[i], hi[i] = power_prox_node(
            p, kind, kap, eta, gam[i], rho[i], mn[i], rtol, prm, scratch, math.nan)
    return theta, fac, iters, lo, hi


@njit(cache=True)
def relativistic_prox_batch(alpha, k, kind, kap, eta, rho, mn, gam, rtol):
    """Per-node prox of ``g (Phi_{alpha,k} + F)``; same outputs as :func:`power_prox_batch`."""
    n = rho.size
    theta, fac, lo, hi = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n)
    iters = np.zeros(n, dtype=np.int64)
    prm, scratch = np.zeros(8), np.zeros(8)
    for i in range(n):
        theta[i], fac[i], iters[i], lo[i], hi[i] = relativistic_prox_node(
            alpha, k, kind, kap, eta, gam[i], rho[i], mn[i], rtol, prm, scratch, math.nan)
    return theta, fac, iters, lo, hi


@njit(cache=True)
def _matvec(indptr, indices, data, x, out):
    for i in range(out.size):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            acc += data[j] * x[indices[j]]
        out[i] = acc


@njit(cache=True)
def _norm(x):
    acc = 0.0
    for v in x:
        acc += v * v
    return math.sqrt(acc)


@njit(cache=True)
def _grad_block(gkind, gkap, geta, hw, floor, u, n, out):
    # the floor only guards energies whose curvature blows up at 0
    if gkind == ENT or (gkind == POW and geta < 2.0):
        lo = floor
    else:
        lo = 0.0
    for i in range(n):
        out[i] = hw[i] * e_deriv(gkind, gkap, geta, max(u[i], lo))


@njit(cache=True)
def pd_loop(cost_mode, c0, c1, ekind, ekap, eeta, gkind, gkap, geta, separate, yan,
            Ap, Ai, Ax, Tp, Ti, Tx, b, delta, sigma, lam, gamma, rtol, hw, floor,
            n, d, u, phi, ubar, tol, feas_bound, max_iter):
    """Primal-dual loop for one implicit step, updating ``u, phi, ubar`` in place.

    ``cost_mode`` 0 is the power cost (``c0 = p``), 1 the relativistic cost
    (``c0 = alpha, c1 = k``).  ``separate`` turns on explicit gradient steps on
    the energy ``(gkind, gkap, geta)``; ``yan`` adds the gradient correction
    to the extrapolation.  ``gamma`` and ``hw`` are per-node prox parameters and
    quadrature weights times ``h``.  Returns ``(iterations, status, change, residual)``
    with status 1 converged, 0 out of iterations, -1 non-finite iterate.
    """
    nr, nc = b.size, u.size
    Au = np.empty(nr)
    v = np.empty(nc)
    u_new = np.empty(nc)
    g = np.zeros(nc)
    g_new = np.zeros(nc)
    prm, scratch = np.zeros(8), np.zeros(8)
    if separate:
        _grad_block(gkind, gkap, geta, hw, floor, u, n, g)
    change, resid = math.inf, math.inf
    for it in range(1, max_iter + 1):
        # dual step: prox of the conjugate of the ball indicator
        _matvec(Ap, Ai, Ax, ubar, Au)
        acc = 0.0
        for i in range(nr):
            Au[i] = phi[i] / sigma + Au[i]
            acc += (Au[i] - b[i]) ** 2
        nrm = math.sqrt(acc)
        scale = 1.0 if nrm <= delta else delta / nrm
        for i in range(nr):
            proj = b[i] + scale * (Au[i] - b[i])
            phi[i] = sigma * (Au[i] - proj)
        # primal step
        _matvec(Tp, Ti, Tx, phi, v)
        for j in range(nc):
            v[j] = u[j] - lam * (v[j] + g[j])
        for i in range(n):
            acc = 0.0
            for l in range(d):
                acc += v[(l + 1) * n + i] ** 2
            mn = math.sqrt(acc)
            x0 = u[i] if u[i] > 0.0 else math.nan
            if cost_mode == 0:
                t, fac, _, _, _ = power_prox_node(c0, ekind, ekap, eeta, gamma[i], v[i], mn,
                                                  rtol, prm, scratch, x0)
            else:
                t, fac, _, _, _ = relativistic_prox_node(c0, c1, ekind, ekap, eeta, gamma[i], v[i],
                                                         mn, rtol, prm, scratch, x0)
            if not (math.isfinite(t) and math.isfinite(fac)):
                return it, -1, change, resid
            u_new[i] = t
            for l in range(d):
                u_new[(l + 1) * n + i] = fac * v[(l + 1) * n + i]
        acc = 0.0
        for j in range(nc):
            acc += (u_new[j] - u[j]) ** 2
        change = math.sqrt(acc) / max(1.0, _norm(u))
        if separate:
            _grad_block(gkind, gkap, geta, hw, floor, u_new, n, g_new)
        for j in range(nc):
            ubar[j] = 2.0 * u_new[j] - u[j]
            if separate:
                if yan:
                    ubar[j] += lam * (g[j] - g_new[j])
                g[j] = g_new[j]
            u[j] = u_new[j]
        if change <= tol:
            _matvec(Ap, Ai, Ax, u, Au)
            acc = 0.0
            for i in range(nr):
                acc += (Au[i] - b[i]) ** 2
            resid = math.sqrt(acc)
            if resid <= feas_bound:
                return it, 1, change, resid
    _matvec(Ap, Ai, Ax, u, Au)
    acc = 0.0
    for i in range(nr):
        acc += (Au[i] - b[i]) ** 2
    return max_iter, 0, change, math.sqrt(acc)
