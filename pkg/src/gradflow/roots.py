"""Vectorized safeguarded Newton-bisection for increasing scalar functions.

Each entry of the input arrays is an independent root problem.  The residual
is called as ``f(x, idx)`` where ``idx`` indexes the entries still being
iterated, so closures can slice their own parameter arrays.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

Residual = Callable[[np.ndarray, np.ndarray], np.ndarray]


class RootFindingError(RuntimeError):
    """Raised when the root iteration fails; carries the offending entries."""

    def __init__(self, message: str, **diagnostics):
        self.diagnostics = diagnostics
        detail = ", ".join(f"{k}={np.asarray(v)[:5]!r}" for k, v in diagnostics.items())
        super().__init__(f"{message} ({detail})")


def _fd_derivative(f: Residual, x, idx, lo, hi):
    step = 1e-7 * np.maximum(1.0, np.abs(x))
    x1 = np.maximum(x - step, lo)
    x2 = np.minimum(x + step, hi)
    width = x2 - x1
    ok = width > 0
    df = np.full_like(x, np.nan)
    if np.any(ok):
        df[ok] = (f(x2[ok], idx[ok]) - f(x1[ok], idx[ok])) / width[ok]
    return df


def solve_root(f: Residual, lo, hi, *, deriv: Residual | None = None,
               atol: float = 0.0, rtol: float = 1e-13,
               fscale=None, max_iter: int = 200,
               return_info: bool = False):
    """Root of an increasing ``f`` in ``[lo, hi]`` for every entry.

    Terminates per entry when ``|f(x)| <= atol + rtol * fscale``, when the
    Newton correction falls below ``rtol * max(|x|, 1e-300)``, or when the
    bracket width drops below ``1e-14 * max(1, hi)``.  If ``f(lo) >= 0`` the
    root is ``lo``; if ``f(hi) <= 0`` it is ``hi``.

    Without ``deriv`` the Newton slope comes from a finite difference kept
    inside the bracket.
    """
    shape = np.broadcast_shapes(np.shape(lo), np.shape(hi))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo = np.broadcast_to(lo, shape).ravel().copy()
    hi = np.broadcast_to(hi, shape).ravel().copy()
    if np.any(hi < lo):
        bad = np.flatnonzero(hi < lo)
        raise RootFindingError("bracket violation: hi < lo", index=bad, lo=lo[bad], hi=hi[bad])
    scale = (np.zeros_like(lo) if fscale is None
             else np.broadcast_to(np.asarray(fscale, dtype=float), shape).ravel())
    lo0, hi0 = lo.copy(), hi.copy()
    n = lo.size
    root = np.empty(n)
    iters = np.zeros(n, dtype=int)
    all_idx = np.arange(n)

    if deriv is None:
        def slope(x, idx):
            return _fd_derivative(f, x, idx, lo0[idx], hi0[idx])
    else:
        slope = deriv

    flo = f(lo, all_idx)
    fhi = f(hi, all_idx)
    if np.any(np.isnan(flo)) or np.any(np.isnan(fhi)):
        bad = np.flatnonzero(np.isnan(flo) | np.isnan(fhi))
        raise RootFindingError("residual is NaN at bracket ends", index=bad,
                               lo=lo[bad], hi=hi[bad])
    thin = (hi - lo) <= 1e-14 * np.maximum(1.0, np.abs(hi))
    at_lo = (flo >= 0) & ~thin
    at_hi = (fhi <= 0) & ~thin & ~at_lo
    root[thin] = hi[thin]
    root[at_lo] = lo[at_lo]
    root[at_hi] = hi[at_hi]
    active = ~(thin | at_lo | at_hi)

    idx = all_idx[active]
    a, b = lo[active], hi[active]
    fa, fb = flo[active], fhi[active]
    # regula falsi start, pulled off the ends
    with np.errstate(divide="ignore", invalid="ignore"):
        x = a - fa * (b - a) / (fb - fa)
    x = np.where(np.isfinite(x), x, 0.5 * (a + b))
    x = np.clip(x, a + 1e-6 * (b - a), b - 1e-6 * (b - a))
    dx_old = b - a
    it = 0
    while idx.size:
        it += 1
        if it > max_iter:
            raise RootFindingError("root solver hit the iteration cap", index=idx,
                                   lo=a, hi=b, x=x, f=f(x, idx))
        fx = f(x, idx)
        if np.any(np.isnan(fx)):
            bad = np.isnan(fx)
            raise RootFindingError("residual is NaN inside the bracket", index=idx[bad],
                                   lo=a[bad], hi=b[bad], x=x[bad])
        neg = fx < 0
        a = np.where(neg, x, a)
        b = np.where(neg, b, x)
        df = slope(x, idx)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fx / df
            x_newton = x - step
        use_newton = (np.isfinite(x_newton) & (df > 0)
                      & (x_newton > a) & (x_newton < b)
                      & (np.abs(2.0 * fx) <= np.abs(dx_old * df)))
        x_new = np.where(use_newton, x_newton, 0.5 * (a + b))
        dx_old = np.where(use_newton, np.abs(step), 0.5 * (b - a))
        done = ((fx == 0)
                | (np.abs(fx) <= atol + rtol * scale[idx])
                | (use_newton & (np.abs(step) <= rtol * np.maximum(np.abs(x), 1e-300)))
                | ((b - a) <= 1e-14 * np.maximum(1.0, np.abs(b))))
        x_fin = np.where(use_newton & ~(fx == 0), x_new, x)
        root[idx[done]] = x_fin[done]
        iters[idx[done]] = it
        keep = ~done
        idx, a, b, x, dx_old = idx[keep], a[keep], b[keep], x_new[keep], dx_old[keep]

    root = np.clip(root, lo0, hi0).reshape(shape)
    iters = iters.reshape(shape)
    if shape == ():
        root, iters = float(root), int(iters)
    if return_info:
        return root, iters
    return root
