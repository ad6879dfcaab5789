import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatedq import des, vacation
from gatedq.branching import ModelParams, ell_E
from gatedq.rv_models import Deterministic, Erlang, Exponential, HyperExponential

from conftest import BATTERY, within_ci
from oracles import VacationEndChain


@pytest.fixture(scope="module")
def sim_single():
    m = ModelParams(0.5, Exponential(1.0), Exponential(1.0))
    return des.run(des.SimConfig("single_vacation_gated", m, horizon=200_000, replications=10, seed=101))


def test_mg1_normalization_and_values():
    mm1 = ModelParams(0.5, Exponential(1.0), Exponential(1.0))
    assert vacation.ell_mg1(mm1, 1.0) == 1.0
    d, _ = vacation.pgf_derivative_at_one(lambda z: vacation.ell_mg1(mm1, z), mm1, 1)
    assert d == pytest.approx(1.0, rel=1e-7)  # rho / (1 - rho)
    md1 = ModelParams(0.5, Deterministic(1.0), Exponential(1.0))
    assert vacation.ell_mg1(md1, 0.0) == pytest.approx(0.5)


def test_mg1_factorial_moments_pollaczek_khinchine():
    m = ModelParams(0.6, Erlang(3, 3.0), Exponential(1.0))
    EH2 = m.service.raw_moment(2)
    pk = m.rho + m.lam ** 2 * EH2 / (2 * (1 - m.rho))
    assert vacation.mg1_factorial_moments(m, 1)[1] == pytest.approx(pk, rel=1e-13)


def test_ell_star_endpoints(mm):
    assert vacation.ell_star(mm, z=1.0) == pytest.approx(1.0, abs=1e-14)
    assert vacation.decomposition_factor(mm, z=1.0) == pytest.approx(1.0, abs=1e-14)
    z = np.linspace(0, 0.99, 7)
    assert np.allclose(vacation.ell_star(mm, z=z), vacation.ell_mg1(mm, z) * vacation.decomposition_factor(mm, z=z))


def test_frozen_moments(mm):
    # closed-form values, confirmed by the simulator below and by differentiation
    L = vacation.factorial_moments(mm, N=4)
    assert L == pytest.approx([1.7892089256846573, 5.297363085615524, 21.169374, 105.8828], rel=1e-6)
    assert vacation.mean_queue_length(mm) == pytest.approx(L[0], rel=1e-14)


def test_vacation_end_moments_against_chain(mm):
    pi = VacationEndChain(mm, K=200).stationary()
    k = np.arange(len(pi))
    L1, L2 = vacation.ell_E_moments_closed(mm)
    assert L1 == pytest.approx(pi @ k, rel=1e-9)
    assert L2 == pytest.approx(pi @ (k * (k - 1)), rel=1e-9)


def test_light_traffic_mean_vanishes():
    m = ModelParams(1e-4, Exponential(1.0), Exponential(1.0))
    assert vacation.mean_queue_length(m) < 1e-3


@pytest.mark.parametrize("name", sorted(BATTERY))
def test_moment_paths_agree(name):
    m = BATTERY[name]
    L = vacation.factorial_moments(m, N=2)
    num, _ = vacation.ell_star_moments_numeric(m, N=2)
    assert np.allclose(num, L, rtol=1e-6, atol=0)
    assert np.allclose(vacation.delay_moments(m, N=2), L / m.lam ** np.arange(1, 3), rtol=1e-15)


def test_higher_moments_two_paths():
    m = ModelParams(0.5, Erlang(2, 2.0), HyperExponential((0.5, 0.5), (2.0, 2 / 3)))
    rep = vacation.solve(m)
    assert max(rep.diagnostics["recursion_crosscheck_rel"]) < 1e-4


def test_moment_order_limit(mm):
    with pytest.raises(ValueError):
        vacation.factorial_moments(mm, N=5)


def test_delay_lst(mm):
    assert vacation.delay_lst(mm, s=1e-12) == pytest.approx(1.0, abs=1e-10)
    assert vacation.delay_lst(mm, s=0.0) == pytest.approx(1.0, abs=1e-14)
    z = np.array([0.0, 0.25, 0.5, 0.75])
    little = vacation.delay_lst(mm, s=mm.lam * (1 - z))
    assert np.allclose(little, vacation.ell_star(mm, z=z), atol=1e-12)
    # beyond lam the delay LST continues below ell_star(0)
    s = np.array([1.0, 2.0, 10.0])
    vals = vacation.delay_lst(mm, s=s)
    assert np.all(np.diff(vals) < 0) and np.all(vals > 0)


def test_delay_mean_by_differentiation(mm):
    h = 1e-4
    d = -(vacation.delay_lst(mm, s=h) - 1.0) / h
    assert d == pytest.approx(vacation.delay_moments(mm, N=1)[0], rel=1e-3)


def test_mv_comparison(mm):
    mv, gap = vacation.mv_comparison(mm)
    assert gap > 0
    assert mv - vacation.mean_queue_length(mm) == pytest.approx(gap, abs=1e-10)
    assert mv == pytest.approx(2.0, rel=1e-12)  # M/M/1 mean plus lam E[V^2] / (2 E[V])


def test_queue_pmf(mm):
    pmf = vacation.queue_pmf(mm)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-6)
    assert pmf[0] == pytest.approx(vacation.ell_star(mm, z=0.0), abs=1e-10)
    assert np.all(pmf >= 0)
    k = np.arange(len(pmf))
    assert pmf @ k == pytest.approx(vacation.mean_queue_length(mm), rel=1e-5)
    pE = vacation.vacation_end_pmf(mm, K=30)
    assert np.allclose(pE, VacationEndChain(mm, K=200).stationary()[:31], atol=1e-10)


def test_p_idle(mm):
    # idle periods are Exp(lam) and start after each empty vacation end
    assert vacation.p_idle(mm) == pytest.approx(0.21079107431534272, rel=1e-12)


def test_solve_report(mm):
    rep = vacation.solve(mm)
    d = rep.to_dict()
    assert d["ell_E0"] == pytest.approx(0.36442698615944774)
    assert d["mean_queue_length"] == pytest.approx(1.7892089256846573)
    assert d["diagnostics"]["pmf_mass"] == pytest.approx(1.0, abs=1e-6)
    assert max(d["diagnostics"]["moment_crosscheck_rel"]) < 1e-6


def test_against_simulation(mm, sim_single):
    s = sim_single
    L = vacation.factorial_moments(mm, N=2)
    checks = {
        "mean_queue": L[0],
        "second_factorial_queue": L[1],
        "p_empty": vacation.ell_star(mm, z=0.0),
        "queue_pgf": [vacation.ell_star(mm, z=0.5)],
        "mean_sojourn": L[0] / mm.lam,
        "second_moment_sojourn": L[1] / mm.lam ** 2,
        "sojourn_lst": vacation.delay_lst(mm, s=np.array([0.5, 1.0])),
        "mean_vacation_end": vacation.ell_E_moments_closed(mm)[0],
        "idle_fraction": vacation.p_idle(mm),
    }
    for name, want in checks.items():
        assert within_ci(want, s[name]), name
    pE = s["vacation_end_pmf"].mean
    assert float(pE @ 0.5 ** np.arange(len(pE))) == pytest.approx(ell_E(mm, z=0.5), abs=3e-3)


def test_deterministic_model_against_simulation():
    m = ModelParams(0.7, Deterministic(1.0), Deterministic(0.5))
    s = des.run(des.SimConfig("single_vacation_gated", m, horizon=200_000, replications=10, seed=5))
    assert within_ci(vacation.mean_queue_length(m), s["mean_queue"])


def test_multiple_vacation_mean_against_simulation(mm):
    s = des.run(des.SimConfig("multiple_vacation_gated", mm, horizon=200_000, replications=10, seed=9))
    mv, _ = vacation.mv_comparison(mm)
    assert within_ci(mv, s["mean_queue"])


@settings(max_examples=25, deadline=None)
@given(lam1=st.floats(0.05, 0.85), dl=st.floats(0.01, 0.1))
def test_mean_increases_with_load(lam1, dl):
    H, V = Erlang(2, 2.0), Exponential(2.0)
    a = vacation.mean_queue_length(ModelParams(lam1, H, V))
    b = vacation.mean_queue_length(ModelParams(lam1 + dl, H, V))
    assert b > a


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0.05, 0.9), z=st.floats(0.0, 1.0), ev=st.floats(0.05, 5.0))
def test_ell_star_is_probability_generating(lam, z, ev):
    m = ModelParams(lam, Exponential(1.0), Deterministic(ev))
    v = vacation.ell_star(m, z=z)
    p0 = vacation.ell_star(m, z=0.0)
    assert 0 < p0 <= v <= 1 + 1e-12
    # p0 can never exceed the idle-or-vacation share 1 - rho
    assert p0 <= 1 - m.rho + 1e-12


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.05, 0.9), ev=st.floats(0.05, 5.0))
def test_single_beats_multiple(lam, ev):
    m = ModelParams(lam, HyperExponential((0.5, 0.5), (2.0, 2 / 3)), Deterministic(ev))
    mv, gap = vacation.mv_comparison(m)
    assert gap > 0
    assert math.isclose(mv - vacation.mean_queue_length(m), gap, rel_tol=0, abs_tol=1e-9 * max(1, mv))
