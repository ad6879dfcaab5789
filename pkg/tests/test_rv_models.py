import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from gatedq import numerics
from gatedq.errors import ConfigError
from gatedq.rv_models import (
    Deterministic,
    Erlang,
    Exponential,
    HyperExponential,
    UniformInterval,
    dist_from_dict,
    lst,
    pgf_count,
    raw_moment,
    sample,
)

ALL = [
    Deterministic(2.0),
    Exponential(1.5),
    Erlang(3, 2.0),
    HyperExponential((0.3, 0.7), (0.5, 3.0)),
    UniformInterval(0.5, 2.5),
]


def density_lst(d, s):
    """Numerical e^{-sx} integral against the scipy density."""
    frozen = {
        Exponential: lambda: stats.expon(scale=1 / d.rate),
        Erlang: lambda: stats.gamma(d.shape, scale=1 / d.rate),
        UniformInterval: lambda: stats.uniform(d.a, d.b - d.a),
    }[type(d)]()
    return integrate.quad(lambda x: math.exp(-s * x) * frozen.pdf(x), *frozen.support())[0]


def test_lst_at_zero_deterministic():
    assert lst(Deterministic(2.0), 0.0) == 1.0


def test_lst_exponential():
    assert lst(Exponential(1.0), 1.0) == pytest.approx(0.5, abs=1e-15)


def test_lst_erlang_against_quadrature():
    d = Erlang(2, 3.0)
    assert lst(d, 1.5) == pytest.approx(4 / 9, abs=1e-14)
    assert lst(d, 1.5) == pytest.approx(density_lst(d, 1.5), abs=1e-10)


@pytest.mark.parametrize("d", [Exponential(0.7), Erlang(4, 1.3), UniformInterval(0.2, 1.9)])
@pytest.mark.parametrize("s", [0.01, 0.3, 2.0])
def test_lst_matches_quadrature(d, s):
    assert lst(d, s) == pytest.approx(density_lst(d, s), abs=1e-10)


def test_lst_complex_argument():
    d = Exponential(2.0)
    assert lst(d, 1j) == pytest.approx(2 / (2 + 1j))


@pytest.mark.parametrize("d", ALL, ids=lambda d: type(d).__name__)
def test_excess_and_complement_forms(d):
    s = np.array([1e-9, 1e-4, 0.1, 1.0, 5.0])
    # 1 - h(s) = s E[H] h_e(s)
    assert np.allclose(d.one_minus_lst(s), s * d.mean * d.excess_lst(s), rtol=1e-12, atol=0)
    assert np.allclose(d.one_minus_lst(s[2:]), 1 - d.lst(s[2:]), rtol=1e-10)
    assert d.excess_lst(0.0) == pytest.approx(1.0)


def test_pgf_count_normalized():
    for d in ALL:
        assert pgf_count(d, 0.8, 1.0) == pytest.approx(1.0, abs=1e-15)


def test_pgf_count_exponential():
    assert pgf_count(Exponential(1.0), 1.0, 0.0) == pytest.approx(0.5)


def test_pgf_count_deterministic_monte_carlo():
    rng = np.random.default_rng(3)
    counts = rng.poisson(2.0 * 1.0, 10_000_000)
    mc = np.mean(0.5 ** counts)
    assert pgf_count(Deterministic(1.0), 2.0, 0.5) == pytest.approx(math.exp(-1))
    assert abs(pgf_count(Deterministic(1.0), 2.0, 0.5) - mc) < 1e-3


def test_raw_moments():
    assert raw_moment(Exponential(1.0), 2) == pytest.approx(2.0)
    assert raw_moment(Deterministic(3.0), 2) == pytest.approx(9.0)
    assert raw_moment(HyperExponential((0.5, 0.5), (1.0, 2.0)), 1) == pytest.approx(0.75)


@pytest.mark.parametrize("d", ALL, ids=lambda d: type(d).__name__)
def test_raw_moments_match_lst_derivatives(d):
    # E[H^n] = (-1)^n h^(n)(0), differentiated forward from 0
    for n in (1, 2, 3):
        v, err = numerics.derivative_at(d.lst, 0.0, n, h=0.01 / d.mean, mode="forward")
        assert abs(raw_moment(d, n) - (-1) ** n * v) <= max(err, 1e-9 * raw_moment(d, n))
        assert err < 1e-4 * raw_moment(d, n)


def test_raw_moment_order_range():
    with pytest.raises(ValueError):
        raw_moment(Exponential(1.0), 7)


def test_sampling():
    rng = np.random.default_rng(11)
    assert np.all(sample(Deterministic(2.0), rng, 5) == 2.0)
    assert abs(sample(Exponential(1.0), rng, 1_000_000).mean() - 1.0) < 0.01
    assert abs(sample(Erlang(2, 2.0), rng, 1_000_000).var() - 0.5) < 0.01


@pytest.mark.parametrize("d", ALL, ids=lambda d: type(d).__name__)
def test_sample_mean_matches(d):
    x = d.sample(np.random.default_rng(5), 400_000)
    se = math.sqrt(max(d.variance, 1e-30) / len(x))
    assert abs(x.mean() - d.mean) <= 5 * se + 1e-12
    assert np.all(x >= 0)


@pytest.mark.parametrize("d", ALL, ids=lambda d: type(d).__name__)
def test_count_pmf_is_mixed_poisson(d):
    theta = 1.7
    w = d.count_pmf(theta, 400)
    assert w.sum() == pytest.approx(1.0, abs=1e-10)
    z = 0.6
    assert float(w @ z ** np.arange(len(w))) == pytest.approx(pgf_count(d, theta, z), abs=1e-12)


@pytest.mark.parametrize(
    "bad",
    [
        lambda: Deterministic(-1.0),
        lambda: Exponential(0.0),
        lambda: Erlang(0, 1.0),
        lambda: HyperExponential((0.4, 0.4), (1.0, 2.0)),
        lambda: HyperExponential((0.5, 0.5), (1.0,)),
        lambda: UniformInterval(2.0, 1.0),
    ],
)
def test_invalid_parameters(bad):
    with pytest.raises(ConfigError):
        bad()


@pytest.mark.parametrize("d", ALL, ids=lambda d: type(d).__name__)
def test_dict_round_trip(d):
    assert dist_from_dict(d.to_dict()) == d


def test_dict_rejects_unknown():
    with pytest.raises(ConfigError):
        dist_from_dict({"family": "lognormal", "mu": 0.0})
    with pytest.raises(ConfigError):
        dist_from_dict({"family": "exponential", "rate": 1.0, "shape": 2})


@settings(max_examples=60, deadline=None)
@given(
    rate=st.floats(0.05, 20.0),
    s1=st.floats(0.0, 50.0),
    s2=st.floats(0.0, 50.0),
)
def test_lst_completely_monotone_on_real_axis(rate, s1, s2):
    d = HyperExponential((0.25, 0.75), (rate, 1.0))
    lo, hi = sorted((s1, s2))
    a, b = d.lst(lo), d.lst(hi)
    assert 0.0 <= b <= a <= 1.0
