import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatedq import numerics, vacation


def test_monomial_inversion():
    grid = numerics.InversionGrid.for_order(8)
    pmf = numerics.invert_pgf(lambda z: z ** 3, grid)
    want = np.zeros(9)
    want[3] = 1.0
    assert np.allclose(pmf, want, atol=1e-9)


def test_geometric_inversion():
    grid = numerics.InversionGrid.for_order(40)
    pmf = numerics.invert_pgf(lambda z: 0.5 / (1 - 0.5 * z), grid)
    assert np.allclose(pmf, 0.5 ** (np.arange(41) + 1), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(p=st.floats(0.01, 0.9), K=st.integers(1, 60))
def test_geometric_inversion_property(p, K):
    grid = numerics.InversionGrid.for_order(K)
    pmf = numerics.invert_pgf(lambda z: (1 - p) / (1 - p * z), grid)
    assert np.allclose(pmf, (1 - p) * p ** np.arange(K + 1), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(0.01, 8.0))
def test_poisson_inversion_property(mu):
    grid = numerics.InversionGrid.for_order(30)
    pmf = numerics.invert_pgf(lambda z: np.exp(mu * (z - 1)), grid)
    k = np.arange(31)
    want = np.exp(-mu + k * math.log(mu) - np.array([math.lgamma(j + 1) for j in k]))
    assert np.allclose(pmf, want, atol=1e-9)


def test_grid_error_bound_is_small():
    grid = numerics.InversionGrid.for_order(64)
    assert grid.error_bound(64) < 1e-9


def test_clip_pmf():
    out = numerics.clip_pmf(np.array([0.5, -1e-13, 0.5]))
    assert np.all(out >= 0)
    with pytest.raises(Exception):
        numerics.clip_pmf(np.array([0.5, -1e-3, 0.5]))


def test_inversion_matches_taylor_coefficients(mm):
    # independent oracle: Taylor coefficients of ell_star at 0 by finite differences
    pmf = vacation.queue_pmf(mm, K=20)
    g = lambda z: vacation.ell_star(mm, z=z)
    assert pmf[0] == pytest.approx(g(0.0), abs=1e-12)
    for k in range(1, 5):
        d, err = numerics.derivative_at(g, 0.0, k, h=0.05, mode="forward")
        assert abs(pmf[k] - d / math.factorial(k)) <= max(err, 1e-8)


def test_derivatives_simple():
    v, _ = numerics.derivative_at(lambda x: x ** 2, 1.0, 1, h=1e-3)
    assert v == pytest.approx(2.0, abs=1e-9)
    v, _ = numerics.derivative_at(np.exp, 0.0, 3, h=1e-2)
    assert v == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("mode", ["central", "forward", "backward"])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_derivative_modes(mode, n):
    v, err = numerics.derivative_at(np.exp, 0.3, n, h=0.02, mode=mode)
    # the error estimate must cover the actual error
    assert abs(v - math.exp(0.3)) <= err
    assert err < 1e-2


def test_derivative_order_range():
    with pytest.raises(ValueError):
        numerics.derivative_at(np.exp, 0.0, 5)


def test_derivative_of_ell_star_at_one(mm):
    v, _ = numerics.derivative_at(lambda z: vacation.ell_star(mm, z=z), 1.0, 1, h=0.01 * (1 - math.sqrt(0.5)) ** 2, mode="backward")
    assert v == pytest.approx(vacation.mean_queue_length(mm), rel=1e-6)


def test_fd_weights_exact_on_polynomials():
    w = numerics.fd_weights(np.arange(-2, 3), 2)
    x = np.arange(-2, 3, dtype=float)
    assert float(w @ x ** 2) == pytest.approx(2.0)
    assert float(w @ x ** 3) == pytest.approx(0.0, abs=1e-12)


def test_falling_factorial_moments():
    pmf = np.array([0.25, 0.5, 0.25])  # binomial(2, 1/2)
    assert np.allclose(numerics.falling_factorial_moments(pmf, 2), [1.0, 0.5])


def test_geometric_tail():
    assert numerics.geometric_tail(0.5, 0.5) == pytest.approx(0.5)
