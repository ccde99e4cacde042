import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from gradflow.costs import Power, Relativistic
from gradflow.energies import Entropy, Indicator, PowerEnergy
from gradflow.grid import GridSpec, build_constraint
from gradflow.pd import (PDConfig, PDState, StepProblem, condat_vu_iteration, prox_ball_conjugate,
                         run_pd, solve_jko_step, yan_iteration)

import cvx_oracle

G8 = GridSpec((0.0,), (1.0,), (7,))
RHO8 = 1.0 + 0.5 * np.cos(np.pi * G8.axes[0])
TIGHT = dict(tol=1e-11, tol_feas=0.0, max_iter=2_000_000)


# dual prox


def test_prox_ball_conjugate_examples(rng):
    b, w = rng.normal(size=6), rng.normal(size=6)
    assert np.allclose(prox_ball_conjugate(0.7, 0.0, b, w), w - 0.7 * b, atol=1e-15)
    inside = 0.7 * (b + 1e-3 * rng.normal(size=6))
    assert np.allclose(prox_ball_conjugate(0.7, 1.0, b, inside), 0.0, atol=1e-15)
    with pytest.raises(ValueError):
        prox_ball_conjugate(0.0, 1.0, b, w)


@given(st.floats(1e-3, 10), st.floats(0, 5), st.integers(0, 2 ** 31))
def test_prox_ball_conjugate_moreau_reconstruction(sigma, delta, seed):
    r = np.random.default_rng(seed)
    b, w = r.normal(size=5), 3 * r.normal(size=5)
    out = prox_ball_conjugate(sigma, delta, b, w)
    y = w / sigma
    proj = y if np.linalg.norm(y - b) <= delta else b + delta * (y - b) / np.linalg.norm(y - b)
    assert np.allclose(out + sigma * proj, w, rtol=0, atol=1e-14 * max(1.0, np.abs(w).max()))


# step sizes and iteration structure


def _problem(cost=Power(2.0), energy=PowerEnergy(2.0), **kw):
    sys = build_constraint(G8, 0.05, RHO8, 1e-8)
    return StepProblem(G8, cost, energy, 0.05, sys, PDConfig(**kw), rho_max=3.0)


@pytest.mark.parametrize("alg", ["yan", "condat-vu"])
@pytest.mark.parametrize("form", ["joint", "separate"])
def test_step_sizes_have_margin(alg, form):
    p = _problem(algorithm=alg, formulation=form)
    K2 = p.norm ** 2
    bound = 1.0 / (p.lam * K2) if alg == "yan" else (1.0 / p.lam - p.L / 2.0) / K2
    assert p.sigma <= 0.95 * bound * (1 + 1e-12)
    if form == "separate":
        assert p.L > 0 and p.lam < 2.0 / p.L


def test_step_size_violation_is_rejected():
    with pytest.raises(ValueError, match="sigma"):
        _problem(sigma=1e6)
    with pytest.raises(ValueError, match="lam"):
        _problem(formulation="separate", lam=1e6)


def test_joint_yan_and_condat_vu_coincide_step_by_step():
    p = _problem(energy=Entropy())
    st_y = st_c = p.initial_state(RHO8)
    for _ in range(50):
        st_y = yan_iteration(st_y, p)
        st_c = condat_vu_iteration(st_c, p)
        assert np.array_equal(st_y.u, st_c.u) and np.array_equal(st_y.phi, st_c.phi)


@pytest.mark.parametrize("alg", ["yan", "condat-vu"])
def test_fixed_point_is_invariant(alg):
    p = _problem(algorithm=alg, formulation="separate", **TIGHT)
    st, stats = run_pd(p, p.initial_state(RHO8))
    assert stats.converged
    fixed = PDState(st.u, st.phi, st.u.copy(), st.grad)
    nxt = p.iterate(fixed)
    # the stopping rule leaves a relative change of order tol
    assert np.max(np.abs(nxt.u - st.u)) <= 10 * TIGHT["tol"] * max(1.0, np.linalg.norm(st.u))
    assert np.max(np.abs(nxt.phi - st.phi)) <= 1e-8 * max(1.0, np.abs(st.phi).max())


# whole steps


def test_constant_density_is_stationary():
    g = GridSpec((0.0,), (1.0,), (20,))
    rho = np.full(g.size, 0.8)
    # a small ball radius: the relaxed minimizer may move by O(delta)
    res = solve_jko_step(rho, PDConfig(tol=1e-11, max_iter=10 ** 6), g, Power(2.0), PowerEnergy(2.0),
                         0.01, 1e-10)
    assert res.stats.converged
    assert np.max(np.abs(res.rho - rho)) <= 1e-6
    assert np.max(np.abs(res.mom)) <= 1e-6


def test_tiny_problem_matches_convex_solver():
    g = GridSpec((0.0,), (1.0,), (3,))
    rho = np.array([1.5, 1.0, 0.6, 0.4])
    sys = build_constraint(g, 0.05, rho, 1e-9)
    r_ref, m_ref = cvx_oracle.solve_step(g, sys, Power(2.0), Indicator(), 0.05)
    res = solve_jko_step(rho, PDConfig(**TIGHT), g, Power(2.0), Indicator(), 0.05, 1e-9)
    assert np.max(np.abs(res.rho - r_ref)) <= 1e-6
    assert np.max(np.abs(res.mom.ravel() - m_ref)) <= 1e-6


def test_porous_medium_step_matches_convex_solver():
    sys = build_constraint(G8, 0.05, RHO8, 1e-8)
    r_ref, _ = cvx_oracle.solve_step(G8, sys, Power(2.0), PowerEnergy(2.0), 0.05)
    res = solve_jko_step(RHO8, PDConfig(**TIGHT), G8, Power(2.0), PowerEnergy(2.0), 0.05, 1e-8)
    assert np.max(np.abs(res.rho - r_ref)) <= 1e-5


@pytest.mark.parametrize("alg", ["yan", "condat-vu"])
def test_joint_and_separate_agree(alg):
    out = [solve_jko_step(RHO8, PDConfig(algorithm=alg, formulation=f, **TIGHT), G8, Power(2.0),
                          PowerEnergy(2.0), 0.05, 1e-8).rho for f in ("joint", "separate")]
    assert np.max(np.abs(out[0] - out[1])) <= 1e-6


def test_mass_change_bounded_by_ball_radius():
    g = GridSpec((0.0,), (2.0,), (30,))
    rho = 1.0 + 0.5 * np.cos(np.pi * g.axes[0])
    delta = 1e-4
    cfg = PDConfig(tol=1e-8, tol_feas=1e-2)
    res = solve_jko_step(rho, cfg, g, Relativistic(1.0, 1.0), Entropy(), 0.01, delta)
    w = np.asarray(g.trapezoid_weights).ravel()
    bound = g.h * np.linalg.norm(w) * delta * (1 + cfg.tol_feas)
    assert abs(g.mass(res.rho) - g.mass(rho)) <= bound


def test_warm_start_does_not_change_solution():
    cfg = PDConfig(tol=1e-10, tol_feas=0.0, max_iter=1_000_000)
    first = solve_jko_step(RHO8, cfg, G8, Power(2.0), Entropy(), 0.05, 1e-8)
    warm = solve_jko_step(first.rho, cfg, G8, Power(2.0), Entropy(), 0.05, 1e-8, state=first.state)
    cold = solve_jko_step(first.rho, replace(cfg, warm_start=False), G8, Power(2.0), Entropy(),
                          0.05, 1e-8, state=first.state)
    assert np.max(np.abs(warm.rho - cold.rho)) <= 1e-7


def test_determinism():
    cfg = PDConfig(tol=1e-8)
    a = solve_jko_step(RHO8, cfg, G8, Relativistic(1.0, 1.0), Entropy(), 0.05)
    b = solve_jko_step(RHO8, cfg, G8, Relativistic(1.0, 1.0), Entropy(), 0.05)
    assert a.stats.iterations == b.stats.iterations
    assert np.array_equal(a.rho, b.rho) and np.array_equal(a.mom, b.mom)


def test_compiled_and_python_loops_agree():
    p = _problem(cost=Relativistic(1.0, 1.0), energy=Entropy(), tol=1e-9, max_iter=100_000)
    a, sa = run_pd(p, p.initial_state(RHO8), compiled=True)
    b, sb = run_pd(p, p.initial_state(RHO8), compiled=False)
    assert sa.iterations == sb.iterations
    assert np.max(np.abs(a.u - b.u)) <= 1e-10


def test_objective_tail_is_nonincreasing():
    p = _problem(cost=Power(2.0), energy=PowerEnergy(2.0), tol=1e-12, max_iter=1)
    st = p.initial_state(RHO8)
    vals = []
    for _ in range(3000):
        st = p.iterate(st)
        vals.append(p.objective(np.maximum(st.u, np.r_[np.zeros(G8.size), -np.inf * np.ones(G8.size)])))
    tail = np.array(vals[1500:])
    assert np.all(np.diff(tail) <= 10 * 1e-9 * np.abs(tail[:-1]).max())


def test_config_validation():
    for kw in (dict(algorithm="x"), dict(formulation="x"), dict(tol=0.0), dict(max_iter=0),
               dict(margin=1.0), dict(sigma=-1.0), dict(lam=0.0), dict(dual_init="x"),
               dict(lipschitz_floor=0.0)):
        with pytest.raises(ValueError):
            PDConfig(**kw)
    with pytest.raises(ValueError):
        solve_jko_step(-RHO8, PDConfig(), G8, Power(2.0), None, 0.05)


def test_energy_dual_init_fixes_density_prox():
    p = _problem(energy=Entropy(), dual_init="energy")
    st = p.initial_state(RHO8)
    interior = ~np.asarray(G8.boundary_mask).ravel()
    assert np.allclose(st.phi[: G8.size][interior], -G8.h * Entropy().deriv(RHO8)[interior])
    # continuity rows on the boundary carry the half-cell weight
    bnd = np.asarray(G8.boundary_mask).ravel()
    assert np.allclose(st.phi[G8.size:], -0.5 * G8.h * Entropy().deriv(RHO8)[bnd])
