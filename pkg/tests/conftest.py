import numpy as np
import pytest

from gatedq import (
    DEFAULT_POLICY,
    Deterministic,
    Erlang,
    Exponential,
    HyperExponential,
    ModelParams,
    UniformInterval,
)

# unit-mean service/vacation laws used by the 12-model battery
UNIT_MEAN = {
    "det": Deterministic(1.0),
    "exp": Exponential(1.0),
    "erlang2": Erlang(2, 2.0),
    "hyperexp": HyperExponential((0.5, 0.5), (2.0, 2.0 / 3.0)),
}
PAIRS = [("det", "exp"), ("exp", "erlang2"), ("erlang2", "hyperexp"), ("hyperexp", "det")]
LAMBDAS = (0.1, 0.5, 0.9)


def battery():
    out = {}
    for lam in LAMBDAS:
        for h, v in PAIRS:
            out[f"lam{lam}-{h}-{v}"] = ModelParams(lam, UNIT_MEAN[h], UNIT_MEAN[v])
    return out


BATTERY = battery()

# models with visibly different shapes for simulation comparisons
REPRESENTATIVE = {
    "exp-exp": ModelParams(0.5, Exponential(1.0), Exponential(1.0)),
    "det-det": ModelParams(0.7, Deterministic(1.0), Deterministic(0.5)),
    "erlang-hyper": ModelParams(0.8, Erlang(2, 2.5), HyperExponential((0.5, 0.5), (0.5, 2.0))),
    "hyper-uniform": ModelParams(0.6, HyperExponential((0.5, 0.5), (1.0, 2.0)), UniformInterval(1.0, 3.0)),
}


@pytest.fixture
def mm():
    """lam = 0.5 with exponential(1) services and vacations."""
    return ModelParams(0.5, Exponential(1.0), Exponential(1.0))


@pytest.fixture
def policy():
    return DEFAULT_POLICY


@pytest.fixture(params=sorted(BATTERY), ids=sorted(BATTERY))
def battery_model(request):
    return BATTERY[request.param]


def within_ci(analytic, est, k=3.0):
    """|analytic - mean| <= k half-widths, entrywise."""
    a = np.asarray(analytic, dtype=float)
    return bool(np.all(np.abs(a - np.asarray(est.mean)) <= k * np.asarray(est.half_width) + 1e-12))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
