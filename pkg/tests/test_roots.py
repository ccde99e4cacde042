import numpy as np
import pytest
from hypothesis import given, strategies as st

from gradflow.roots import RootFindingError, solve_root


def test_linear_root():
    assert abs(solve_root(lambda t, i: t - 1.0, 0.0, 3.0) - 1.0) <= 1e-14


def test_cubic_root_with_and_without_derivative():
    ref = 2.0 ** (1.0 / 3.0)
    x = solve_root(lambda t, i: t ** 3 - 2.0, 0.0, 2.0)
    xd = solve_root(lambda t, i: t ** 3 - 2.0, 0.0, 2.0, deriv=lambda t, i: 3 * t ** 2)
    assert abs(x - ref) <= 1e-13 and abs(xd - ref) <= 1e-13


def test_vectorized_entries_are_independent():
    c = np.array([0.5, 2.0, 7.0, 30.0])
    x = solve_root(lambda t, i: t ** 3 - c[i], np.zeros(4), np.full(4, 4.0))
    assert np.allclose(x, np.cbrt(c), rtol=1e-13)


def test_root_at_bracket_ends():
    assert solve_root(lambda t, i: t + 1.0, 0.0, 1.0) == 0.0
    assert solve_root(lambda t, i: t - 5.0, 0.0, 1.0) == 1.0


def test_iteration_cap_raises():
    # step function: no Newton progress, bisection needs ~50 halvings
    with pytest.raises(RootFindingError, match="iteration cap"):
        solve_root(lambda t, i: np.where(t < np.pi / 4, -1.0, 1.0), 0.0, 1.0, max_iter=5,
                   deriv=lambda t, i: np.zeros_like(t))


def test_bad_bracket_and_nan():
    with pytest.raises(RootFindingError, match="bracket"):
        solve_root(lambda t, i: t, 1.0, 0.0)
    with pytest.raises(RootFindingError, match="NaN"):
        solve_root(lambda t, i: np.full_like(t, np.nan), 0.0, 1.0)


@given(st.floats(-5, 5), st.floats(0.1, 5))
def test_monotone_oracle(a, s):
    f = lambda t, i: s * t + np.tanh(t) - a  # noqa: E731
    x = solve_root(f, -100.0, 100.0)
    assert abs(f(np.asarray(x), None)) <= 1e-12 * (1 + abs(a))
