"""Primal-dual splitting for one fully discrete implicit step.

One step solves

    min_u  dt h sum_i Phi_c(rho_i, m_i) + h sum_i U(rho_i)
    s.t.   |A u - b| <= delta

over ``u = (rho, m)``.  Both solvers (Yan's PD3O-type scheme and Condat-Vu)
share the dual update through the conjugate of the ball indicator and the
per-node perspective prox with ``gamma = lam dt h``.  In the *joint*
formulation the energy enters the prox as ``F = U / dt``; in the *separate*
formulation it is handled by explicit gradient steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import _kernels
from .costs import CostSpec, Power, Relativistic
from .energies import Indicator, Scaled, energy_code, grad_Psi, lipschitz_bound
from .grid import ConstraintSystem, GridSpec, build_constraint, estimate_operator_norm
from .perspective import perspective_value, prox_perspective

Algorithm = Literal["yan", "condat-vu"]
Formulation = Literal["joint", "separate"]
LamRule = Literal["balanced", "capped"]


class DivergenceError(RuntimeError):
    """Non-finite iterate in the primal-dual loop."""


@dataclass(frozen=True)
class PDConfig:
    """Solver settings.  ``sigma``/``lam`` set to ``None`` select the automatic rule.

    The automatic primal step is ``lam = lam_scale / sqrt(dt h)`` under the
    ``balanced`` rule and ``lam = lam_cap`` under ``capped``; either is then
    limited to ``1.9 / L`` when the energy is treated explicitly.  The dual step
    takes the fraction ``margin`` of its admissible bound.

    In the separate formulation ``rho_floor`` regularizes the energy gradient of
    energies with singular curvature, while ``lipschitz_floor`` (default:
    ``rho_floor``) is the density at which the curvature is bounded for the step
    size.  ``dual_init="energy"`` starts cold steps from the dual guess
    ``-h w U'(rho_prev)`` (``w`` the nodal quadrature weights) on the continuity
    rows instead of zero.
    """

    algorithm: Algorithm = "yan"
    formulation: Formulation = "joint"
    sigma: float | None = None
    lam: float | None = None
    tol: float = 1e-6
    tol_feas: float = 1e-2
    max_iter: int = 50_000
    warm_start: bool = True
    rho_floor: float = 1e-10
    lipschitz_floor: float | None = None
    lam_rule: LamRule = "capped"
    lam_scale: float = 1.0
    lam_cap: float = 1.0
    margin: float = 0.95
    norm_iters: int = 50
    seed: int = 0
    prox_rtol: float | None = None
    dual_init: Literal["zero", "energy"] = "zero"

    def __post_init__(self):
        if self.algorithm not in ("yan", "condat-vu"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.formulation not in ("joint", "separate"):
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.dual_init not in ("zero", "energy"):
            raise ValueError(f"unknown dual_init {self.dual_init!r}")
        if self.lam_rule not in ("balanced", "capped"):
            raise ValueError(f"unknown lam_rule {self.lam_rule!r}")
        if not (self.lam_scale > 0 and self.lam_cap > 0):
            raise ValueError("lam_scale and lam_cap must be positive")
        if not self.tol > 0 or not self.tol_feas >= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.margin < 1:
            raise ValueError("margin must lie in (0, 1)")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.lipschitz_floor is not None and not self.lipschitz_floor > 0:
            raise ValueError("lipschitz_floor must be positive")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")

    @property
    def curvature_floor(self) -> float:
        """Density at which ``U''`` is evaluated for the Lipschitz bound."""
        return self.rho_floor if self.lipschitz_floor is None else self.lipschitz_floor

    @property
    def inner_rtol(self) -> float:
        return self.prox_rtol if self.prox_rtol is not None else self.tol / 100.0


@dataclass
class StepStats:
    iterations: int
    converged: bool
    primal_change: float
    residual: float
    feasibility: float
    objective: float
    sigma: float
    lam: float
    lipschitz: float


@dataclass
class PDState:
    """Iterates carried between iterations (and between steps for warm starts)."""

    u: np.ndarray
    phi: np.ndarray
    ubar: np.ndarray
    grad: np.ndarray = field(default=None)


def prox_ball_conjugate(sigma: float, delta: float, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``Prox_{sigma iota*_B}(w) = w - sigma P_B(w / sigma)`` for the ball ``B = B_delta(b)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    y = w / sigma
    r = y - b
    nr = float(np.linalg.norm(r))
    proj = y if nr <= delta else b + (delta / nr) * r
    return w - sigma * proj


class StepProblem:
    """All data of one implicit step: constraint, cost, energy, step sizes."""

    def __init__(self, grid: GridSpec, cost: CostSpec, energy, dt: float,
                 sys: ConstraintSystem, cfg: PDConfig, norm: float | None = None,
                 rho_max: float = 1.0):
        self.grid, self.cost, self.dt, self.sys, self.cfg = grid, cost, float(dt), sys, cfg
        self.energy = Indicator() if energy is None else energy
        self.joint = cfg.formulation == "joint" or isinstance(self.energy, Indicator)
        self.n = grid.size
        if norm is None:
            norm = estimate_operator_norm(sys, iters=cfg.norm_iters, seed=cfg.seed)
        self.norm = float(norm)
        self.L = 0.0 if self.joint else lipschitz_bound(grid, self.energy, cfg.curvature_floor, rho_max)
        self.sigma, self.lam = self._step_sizes()
        self.gamma = self.lam * self.dt * grid.h
        # with the boundary continuity rows the conserved mass is the trapezoid
        # sum, so the objective carries the same nodal weights
        self.weights = (np.asarray(grid.trapezoid_weights, dtype=float).ravel()
                        if sys.boundary_continuity else np.ones(grid.size))
        self.hw = grid.h * self.weights
        self.prox_energy = Scaled(self.energy, 1.0 / self.dt) if self.joint else None
        self.A = sys.matrix()
        self.AT = self.A.T.tocsr()
        self._gam = self.gamma * self.weights
        kind, kap, eta = energy_code(self.prox_energy)
        self._batch = None
        self._loop_cost = None
        if isinstance(cost, Power):
            self._batch = _kernels.power_prox_batch
            self._batch_args = (float(cost.p), kind, kap, eta)
            self._loop_cost = (0, float(cost.p), 0.0, kind, kap, eta)
        elif isinstance(cost, Relativistic):
            self._batch = _kernels.relativistic_prox_batch
            self._batch_args = (float(cost.alpha), float(cost.k), kind, kap, eta)
            self._loop_cost = (1, float(cost.alpha), float(cost.k), kind, kap, eta)

    def _step_sizes(self):
        cfg, L, K2 = self.cfg, self.L, self.norm ** 2
        lam = cfg.lam
        if lam is None:
            if cfg.lam_rule == "balanced":
                lam = cfg.lam_scale / np.sqrt(self.dt * self.grid.h)
            else:
                lam = cfg.lam_cap
            if L > 0:
                lam = min(lam, 1.9 / L)
        if L > 0 and not lam < 2.0 / L:
            raise ValueError(f"lam={lam} violates lam < 2/L = {2.0 / L}")
        sigma = cfg.sigma
        if sigma is None:
            if cfg.algorithm == "yan":
                sigma = cfg.margin / (lam * K2)
            else:
                sigma = cfg.margin * (1.0 / lam - L / 2.0) / K2
        bound = 1.0 / (lam * K2) if cfg.algorithm == "yan" else (1.0 / lam - L / 2.0) / K2
        if not sigma < bound:
            raise ValueError(f"sigma={sigma} violates the step-size condition (bound {bound})")
        return float(sigma), float(lam)

    # pieces of the iteration

    def grad(self, u: np.ndarray) -> np.ndarray:
        g = np.zeros_like(u)
        if not self.joint:
            g[: self.n] = self.weights * grad_Psi(self.grid, self.energy, u[: self.n],
                                                  self.cfg.rho_floor)
        return g

    def prox_primal(self, u: np.ndarray) -> np.ndarray:
        """Per-node perspective prox with ``gamma = lam dt h``."""
        n, d = self.n, self.grid.d
        rho = u[:n]
        mom = u[n:].reshape(d, n)
        if self._batch is not None:
            mn = np.abs(mom[0]) if d == 1 else np.sqrt(np.sum(mom ** 2, axis=0))
            theta, fac, _, _, _ = self._batch(*self._batch_args, rho, mn, self._gam,
                                              self.cfg.inner_rtol)
            if np.any(np.isnan(theta)) or np.any(np.isnan(fac)):
                # rerun through the checked wrapper to get diagnostics
                prox_perspective(self.cost, rho, mom.T, self._gam, self.prox_energy,
                                 rtol=self.cfg.inner_rtol)
            out = np.empty_like(u)
            out[:n] = theta
            out[n:] = (fac * mom).ravel()
            return out
        res = prox_perspective(self.cost, rho, mom.T, self._gam, self.prox_energy,
                               rtol=self.cfg.inner_rtol)
        return np.concatenate([res.theta, res.v.T.ravel()])

    def objective(self, u: np.ndarray) -> float:
        rho, mom = self.grid.unpack(u)
        mnorm = np.sqrt(np.sum(mom ** 2, axis=0))
        hw = self.hw.reshape(rho.shape)
        val = self.dt * np.sum(hw * perspective_value(self.cost, rho, mnorm))
        val += np.sum(hw * self.energy.value(rho))
        return float(val)

    def initial_state(self, rho_prev: np.ndarray) -> PDState:
        """Cold start ``u = (rho_prev, 0)``; ``phi = 0`` or the energy multiplier guess.

        With ``dual_init="energy"`` the multiplier of every row carrying a
        density is set to ``-h w_i U'(rho_prev)`` (``w`` the objective's nodal
        weights), which makes ``rho_prev`` a fixed
        point of the density prox while the momentum is still zero.
        """
        u = np.zeros(self.sys.n_cols)
        rho = np.asarray(rho_prev, dtype=float).ravel()
        u[: self.n] = rho
        phi = np.zeros(self.sys.n_rows)
        if self.cfg.dual_init == "energy" and not isinstance(self.energy, Indicator):
            tiny = np.finfo(float).tiny
            guess = -self.hw * self.energy.deriv(np.maximum(rho, tiny))
            bmask = np.asarray(self.grid.boundary_mask).ravel()
            phi[: self.n] = np.where(bmask, 0.0, guess)
            if self.sys.boundary_continuity:
                phi[self.n:] = guess[bmask]
        return PDState(u, phi, u.copy(), self.grad(u))

    def residual(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(self.A @ u - self.sys.b))

    def iterate(self, st: PDState) -> PDState:
        """One iteration of the configured scheme."""
        sigma, lam = self.sigma, self.lam
        phi = prox_ball_conjugate(sigma, self.sys.delta, self.sys.b, st.phi + sigma * (self.A @ st.ubar))
        g = st.grad if st.grad is not None else self.grad(st.u)
        v = st.u - lam * (self.AT @ phi)
        if not self.joint:
            v -= lam * g
        u_new = self.prox_primal(v)
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(phi))):
            raise DivergenceError("non-finite iterate in the primal-dual loop")
        ubar = 2.0 * u_new - st.u
        if self.joint:
            return PDState(u_new, phi, ubar, g)
        g_new = self.grad(u_new)
        if self.cfg.algorithm == "yan":
            ubar += lam * (g - g_new)
        return PDState(u_new, phi, ubar, g_new)


def yan_iteration(state: PDState, problem: StepProblem) -> PDState:
    if problem.cfg.algorithm != "yan":
        problem = StepProblem(problem.grid, problem.cost, problem.energy, problem.dt, problem.sys,
                              replace(problem.cfg, algorithm="yan"), problem.norm)
    return problem.iterate(state)


def condat_vu_iteration(state: PDState, problem: StepProblem) -> PDState:
    if problem.cfg.algorithm != "condat-vu":
        problem = StepProblem(problem.grid, problem.cost, problem.energy, problem.dt, problem.sys,
                              replace(problem.cfg, algorithm="condat-vu"), problem.norm)
    return problem.iterate(state)


@dataclass
class StepResult:
    rho: np.ndarray
    mom: np.ndarray
    stats: StepStats
    state: PDState


def _run_compiled(problem: StepProblem, state: PDState) -> tuple[PDState, StepStats]:
    cfg, sys = problem.cfg, problem.sys
    A, AT = problem.A, problem.AT
    u, phi, ubar = state.u.copy(), state.phi.copy(), state.ubar.copy()
    gkind, gkap, geta = energy_code(problem.energy)
    it, status, change, resid = _kernels.pd_loop(
        *problem._loop_cost, gkind, gkap, geta, not problem.joint, cfg.algorithm == "yan",
        A.indptr, A.indices, A.data, AT.indptr, AT.indices, AT.data,
        sys.b, sys.delta, problem.sigma, problem.lam, problem._gam, cfg.inner_rtol,
        problem.hw, cfg.rho_floor, problem.n, problem.grid.d, u, phi, ubar,
        cfg.tol, sys.delta * (1.0 + cfg.tol_feas), cfg.max_iter)
    if status < 0:
        raise DivergenceError(f"non-finite iterate after {it} primal-dual iterations")
    final = PDState(u, phi, ubar, problem.grad(u))
    stats = StepStats(int(it), status == 1, float(change), float(resid), float(resid) - sys.delta,
                      problem.objective(u), problem.sigma, problem.lam, problem.L)
    return final, stats


def run_pd(problem: StepProblem, state: PDState, *, compiled: bool = True) -> tuple[PDState, StepStats]:
    """Iterate until the relative primal change and the feasibility test both pass.

    Power and relativistic costs run in a compiled loop unless ``compiled`` is
    off; other costs use :meth:`StepProblem.iterate`.
    """
    if compiled and problem._loop_cost is not None:
        return _run_compiled(problem, state)
    cfg, sys = problem.cfg, problem.sys
    feas_bound = sys.delta * (1.0 + cfg.tol_feas)
    change, resid = np.inf, np.inf
    it = 0
    converged = False
    while it < cfg.max_iter:
        new = problem.iterate(state)
        it += 1
        change = float(np.linalg.norm(new.u - state.u)) / max(1.0, float(np.linalg.norm(state.u)))
        state = new
        if change <= cfg.tol:
            resid = problem.residual(state.u)
            if resid <= feas_bound:
                converged = True
                break
    if not converged:
        resid = problem.residual(state.u)
    stats = StepStats(it, converged, change, resid, resid - sys.delta,
                      problem.objective(state.u), problem.sigma, problem.lam, problem.L)
    return state, stats


def solve_jko_step(rho_prev, cfg: PDConfig, grid: GridSpec, cost: CostSpec, energy, dt: float,
                   delta: float | None = None, *, state: PDState | None = None,
                   boundary_continuity: bool = True, norm: float | None = None) -> StepResult:
    """One implicit step from ``rho_prev``.

    ``state`` (from a previous step) is used as the starting point when
    ``cfg.warm_start`` is set; otherwise the start is ``((rho_prev, 0), 0)``.
    """
    rho_prev = np.asarray(rho_prev, dtype=float).ravel()
    if np.any(rho_prev < 0) or not np.all(np.isfinite(rho_prev)):
        raise ValueError("rho_prev must be finite and nonnegative")
    sys = build_constraint(grid, dt, rho_prev, delta, boundary_continuity=boundary_continuity)
    problem = StepProblem(grid, cost, energy, dt, sys, cfg, norm,
                          rho_max=2.0 * float(rho_prev.max()) + 1.0)
    if state is not None and cfg.warm_start and state.phi.shape == (sys.n_rows,):
        start = PDState(state.u.copy(), state.phi.copy(), state.u.copy(), problem.grad(state.u))
    else:
        start = problem.initial_state(rho_prev)
    final, stats = run_pd(problem, start)
    rho, mom = grid.unpack(final.u)
    return StepResult(rho, mom, stats, final)
