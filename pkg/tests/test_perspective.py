import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradflow.costs import ConeLimit, Power, QuadraticLimit, Relativistic
from gradflow.energies import Entropy, Indicator, PowerEnergy
from gradflow.oracles import brute_force_prox
from gradflow.perspective import (perspective_value, prox_cone, prox_general, prox_perspective,
                                  prox_power, prox_power_np, prox_quadratic_limit,
                                  prox_relativistic, prox_relativistic_np, residual_general,
                                  residual_power, residual_relativistic)

COSTS = [Power.from_p(1.5), Power.from_p(2.0), Power.from_p(3.0), Relativistic(1.0, 1.0),
         Relativistic(2.0, 0.5), Relativistic(1.0, 10.0)]
ENERGIES = [Indicator(), Entropy(), PowerEnergy(1.5), PowerEnergy(2.0), PowerEnergy(3.0)]
PAIRS = [(c, e) for c in COSTS for e in ENERGIES]
pair_ids = [f"{c!r}-{e!r}" for c, e in PAIRS]

floats = st.floats(allow_nan=False, allow_infinity=False)


def queries(rng, n):
    rho = rng.uniform(-2, 2, n)
    d = rng.normal(size=(n, 2))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    mom = d * rng.uniform(0, 2, (n, 1))
    gamma = np.exp(rng.uniform(np.log(1e-3), np.log(10.0), n))
    return rho, mom, gamma


def objective(cost, energy, gamma, rho, mnorm, t, w):
    return (gamma * (perspective_value(cost, t, w) + energy.value(t))
            + 0.5 * (t - rho) ** 2 + 0.5 * (w - mnorm) ** 2)


# worked examples


def test_trivial_cases():
    for c in COSTS:
        r = prox_perspective(c, 1.0, 0.0, 0.7)
        assert np.isclose(r.theta, 1.0, rtol=0, atol=1e-13) and r.v == 0.0
        r = prox_perspective(c, -2.0, 0.0, 0.7)
        assert r.theta == 0.0 and r.v == 0.0
        r = prox_general(c, 1.0, 0.0, 0.7)
        assert np.isclose(r.theta, 1.0, rtol=0, atol=1e-13) and r.v == 0.0


def test_quadratic_cubic_oracle():
    # (t + 1)^2 (t - 0.5) = 0.32
    roots = np.roots(np.polyfit([0, 1, 2, 3], [(t + 1) ** 2 * (t - 0.5) - 0.32 for t in range(4)], 3))
    ref = max(r.real for r in roots if abs(r.imag) < 1e-12)
    for r in (prox_power(2.0, 0.5, 0.8, 1.0), prox_quadratic_limit(1.0, 0.5, 0.8, 1.0)):
        assert abs(r.theta - ref) <= 1e-8
    th, w = brute_force_prox(Power(2.0), np.array([0.5]), np.array([0.8]), np.array([1.0]))
    assert abs(prox_power(2.0, 0.5, 0.8, 1.0).theta - th[0]) <= 1e-8
    assert abs(prox_power(2.0, 0.5, 0.8, 1.0).v - w[0]) <= 1e-8


def test_power_entropy_example():
    r = prox_power(3.0, 0.7, 0.2, 0.05, Entropy())
    th, w = brute_force_prox(Power.from_p(3.0), np.array([0.7]), np.array([0.2]),
                             np.array([0.05]), Entropy())
    assert abs(r.theta - th[0]) <= 1e-6 and abs(r.v - w[0]) <= 1e-6


def test_relativistic_example():
    r = prox_relativistic(1.0, 1.0, 0.5, 0.3, 1.0)
    th, w = brute_force_prox(Relativistic(1.0, 1.0), np.array([0.5]), np.array([0.3]), np.array([1.0]))
    assert abs(r.theta - th[0]) <= 1e-6 and abs(r.v - w[0]) <= 1e-6
    g = prox_general(Relativistic(1.0, 1.0), 0.5, 0.3, 1.0)
    assert abs(r.theta - g.theta) <= 1e-9 and abs(r.v - g.v) <= 1e-9


def test_cone_examples():
    assert np.allclose(tuple(prox_cone(1.0, 1.0, 0.5)), (1.0, 0.5))
    assert np.allclose(tuple(prox_cone(1.0, -2.0, 1.0)), (0.0, 0.0))
    assert np.allclose(tuple(prox_cone(1.0, 0.0, 1.0)), (0.5, 0.5))
    r = prox_cone(2.0, np.array([0.3]), np.array([[3.0, 4.0]]))
    assert np.isclose(np.linalg.norm(r.v), 2.0 * r.theta[0])


def test_quadratic_limit_examples():
    assert np.allclose(tuple(prox_quadratic_limit(1.0, 1.0, 0.0, 1.0)), (1.0, 0.0))
    assert np.allclose(tuple(prox_quadratic_limit(1.0, -1.0, 0.0, 1.0)), (0.0, 0.0))


# cross-formula identities


def test_power_two_equals_quadratic_limit(rng):
    rho, mom, gamma = queries(rng, 2000)
    a = prox_power(2.0, rho, mom, gamma)
    b = prox_quadratic_limit(1.0, rho, mom, gamma)
    assert np.max(np.abs(a.theta - b.theta)) <= 1e-10
    assert np.max(np.abs(a.v - b.v)) <= 1e-10


@pytest.mark.parametrize("c, e", PAIRS, ids=pair_ids)
def test_specialized_matches_general(c, e, rng):
    rho, mom, gamma = queries(rng, 150)
    a = prox_perspective(c, rho, mom, gamma, e)
    b = prox_general(c, rho, mom, gamma, e, rtol=1e-14)
    assert np.max(np.abs(a.theta - b.theta)) <= 1e-9
    assert np.max(np.abs(a.v - b.v)) <= 1e-9


@pytest.mark.parametrize("c, e", PAIRS, ids=pair_ids)
def test_kernel_matches_numpy(c, e, rng):
    rho, mom, gamma = queries(rng, 400)
    a = prox_perspective(c, rho, mom, gamma, e)
    if isinstance(c, Power):
        b = prox_power_np(c.p, rho, mom, gamma, e)
    else:
        b = prox_relativistic_np(c.alpha, c.k, rho, mom, gamma, e)
    assert np.max(np.abs(a.theta - b.theta)) <= 1e-11 * (1 + np.abs(b.theta).max())
    assert np.max(np.abs(a.v - b.v)) <= 1e-11 * (1 + np.abs(b.v).max())


def test_cone_limit_of_relativistic(rng):
    rho, mom, gamma = queries(rng, 1000)
    a = prox_relativistic(1e8, 1.0, rho, mom, gamma)
    b = prox_cone(1.0, rho, mom)
    assert np.max(np.abs(a.theta - b.theta)) <= 1e-4
    assert np.max(np.abs(a.v - b.v)) <= 1e-4


def test_quadratic_limit_of_relativistic(rng):
    rho, mom, gamma = queries(rng, 1000)
    a = prox_relativistic(1.0, 1e6, rho, mom, gamma)
    b = prox_quadratic_limit(1.0, rho, mom, gamma)
    assert np.max(np.abs(a.theta - b.theta)) <= 1e-4
    assert np.max(np.abs(a.v - b.v)) <= 1e-4


def test_quadratic_limit_with_energy_goes_through_power():
    e = Entropy()
    a = prox_perspective(QuadraticLimit(2.0), 0.7, 0.4, 0.3, e)
    th, w = brute_force_prox(QuadraticLimit(2.0), np.array([0.7]), np.array([0.4]),
                             np.array([0.3]), e)
    assert abs(a.theta - th[0]) <= 1e-6 and abs(a.v - w[0]) <= 1e-6
    with pytest.raises(ValueError):
        prox_perspective(ConeLimit(1.0), 0.7, 0.4, 0.3, e)


# structural properties


@pytest.mark.parametrize("c, e", PAIRS, ids=pair_ids)
def test_residual_vanishes_at_returned_theta(c, e, rng):
    rho, mom, gamma = queries(rng, 300)
    mn = np.linalg.norm(mom, axis=1)
    r = prox_perspective(c, rho, mom, gamma, e)
    # roots below ~1e-300 are clamped at the smallest normal double
    pos = r.theta > 1e-300
    t = r.theta[pos]
    if isinstance(c, Power):
        res = residual_power(c.p, e, gamma[pos], rho[pos], mn[pos], t)
        scale = gamma[pos] * mn[pos] ** c.p / c.p
    else:
        res = residual_relativistic(c.alpha, c.k, e, gamma[pos], rho[pos], mn[pos], t)
        scale = c.k * mn[pos]
    assert np.all(np.abs(res) <= 1e-8 * np.maximum(scale, 1e-3))


@pytest.mark.parametrize("c", COSTS, ids=repr)
def test_general_residual_increasing(c, rng):
    for _ in range(20):
        rho, mn, g = rng.uniform(-1, 2), rng.uniform(0, 2), 10 ** rng.uniform(-2, 1)
        t = np.linspace(0.01, 3, 50)
        R = residual_general(c, Entropy(), g, rho, mn, t)
        assert np.all(np.diff(R) > 0)


@pytest.mark.parametrize("c, e", PAIRS, ids=pair_ids)
def test_result_structure(c, e, rng):
    rho, mom, gamma = queries(rng, 500)
    r = prox_perspective(c, rho, mom, gamma, e)
    assert np.all(r.theta >= 0)
    assert np.all((r.factor >= 0) & (r.factor <= 1))
    assert np.allclose(r.v, r.factor[:, None] * mom)
    # bracket contains the root
    act = r.theta > 0
    assert np.all(r.lo[act] <= r.theta[act] * (1 + 1e-14) + 1e-300)
    assert np.all(r.theta[act] <= r.hi[act] * (1 + 1e-14))
    if isinstance(c, Relativistic):
        assert np.all(np.linalg.norm(r.v, axis=1) <= c.k * r.theta * (1 + 1e-12))
    # gate: (0, 0) exactly when the closed-form condition says so
    assert np.all(r.v[r.theta == 0] == 0)


@pytest.mark.parametrize("c, e", PAIRS, ids=pair_ids)
def test_prox_is_optimal_among_perturbations(c, e, rng):
    rho, mom, gamma = queries(rng, 200)
    mn = np.linalg.norm(mom, axis=1)
    r = prox_perspective(c, rho, mom, gamma, e)
    w = np.linalg.norm(r.v, axis=1)
    f0 = objective(c, e, gamma, rho, mn, r.theta, w)
    for _ in range(10):
        dt, dw = rng.normal(size=(2, rho.size)) * 1e-3
        t1, w1 = np.maximum(r.theta + dt, 0.0), np.maximum(w + dw, 0.0)
        f1 = objective(c, e, gamma, rho, mn, t1, w1)
        assert np.all(f1 >= f0 - 1e-12 * (1 + np.abs(f0)))


@pytest.mark.parametrize("c, e", [PAIRS[i] for i in (1, 7, 16, 28)],
                         ids=[pair_ids[i] for i in (1, 7, 16, 28)])
@settings(max_examples=40)
@given(r1=st.floats(-2, 2), r2=st.floats(-2, 2), m1=st.floats(-2, 2), m2=st.floats(-2, 2),
       g=st.floats(1e-2, 5))
def test_nonexpansive(c, e, r1, r2, m1, m2, g):
    a = prox_perspective(c, np.array([r1, r2]), np.array([m1, m2]), g, e)
    d_out = np.hypot(a.theta[0] - a.theta[1], a.v[0] - a.v[1])
    d_in = np.hypot(r1 - r2, m1 - m2)
    assert d_out <= d_in + 1e-9


@pytest.mark.parametrize("c, e", PAIRS, ids=pair_ids)
def test_oracle_equivalence_sample(c, e):
    rng = np.random.default_rng(2024)
    rho, mom, gamma = queries(rng, 200)
    r = prox_perspective(c, rho, mom, gamma, e)
    th, w = brute_force_prox(c, rho, np.linalg.norm(mom, axis=1), gamma, e)
    assert np.max(np.abs(r.theta - th)) <= 1e-6
    assert np.max(np.abs(np.linalg.norm(r.v, axis=1) - w)) <= 1e-6


def test_shape_errors():
    with pytest.raises(ValueError):
        prox_power(2.0, np.zeros(3), np.zeros((4, 2)), 1.0)
    with pytest.raises(ValueError):
        prox_power(2.0, 1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        prox_cone(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        prox_general(ConeLimit(1.0), 1.0, 0.0, 1.0)
