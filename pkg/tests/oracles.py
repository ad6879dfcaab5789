"""Independent reference computations shared by the tests.

Nothing here calls the branching iteration: the vacation-end process is
built directly as a truncated Markov chain from scipy pmfs.
"""

import numpy as np
from scipy import stats

from gatedq.rv_models import Deterministic, Erlang, Exponential, HyperExponential


def arrivals_pmf(d, lam, K):
    """P(k Poisson(lam) arrivals during one draw of d), k = 0..K."""
    k = np.arange(K + 1)
    if isinstance(d, Deterministic):
        return stats.poisson.pmf(k, lam * d.d)
    if isinstance(d, Exponential):
        return stats.nbinom.pmf(k, 1, d.rate / (d.rate + lam))
    if isinstance(d, Erlang):
        return stats.nbinom.pmf(k, d.shape, d.rate / (d.rate + lam))
    if isinstance(d, HyperExponential):
        return sum(w * stats.nbinom.pmf(k, 1, r / (r + lam)) for w, r in zip(d.weights, d.rates))
    raise TypeError(type(d))


class VacationEndChain:
    """Queue length at successive vacation ends, truncated at K.

    From q customers the gate holds max(q, 1) (an empty gate waits for the
    next arrival and serves it alone), and the next vacation end holds the
    arrivals during those services plus the vacation.
    """

    def __init__(self, m, K=600):
        self.K = K
        a_h = arrivals_pmf(m.service, m.lam, K)
        a_v = arrivals_pmf(m.vacation, m.lam, K)
        self.gate = np.zeros((K + 1, K + 1))  # rows: q, cols: arrivals during the gate
        conv = a_h.copy()
        for q in range(1, K + 1):
            self.gate[q] = conv
            conv = np.convolve(conv, a_h)[: K + 1]
        self.gate[0] = self.gate[1]
        self.P = np.array([np.convolve(row, a_v)[: K + 1] for row in self.gate])
        # truncation: send the lost tail mass to the last state
        self.P[:, -1] += 1 - self.P.sum(axis=1)

    def stationary(self):
        n = self.K + 1
        A = np.vstack([(self.P.T - np.eye(n)), np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1
        return np.linalg.lstsq(A, b, rcond=None)[0]

    def vacation_start(self, pi):
        return pi @ self.gate

    def propagate(self, p0, n):
        p = np.zeros(self.K + 1)
        p[: len(p0)] = p0
        for _ in range(n):
            p = p @ self.P
        return p


def pgf(pmf, z):
    return np.polynomial.polynomial.polyval(z, pmf)


def branching_monte_carlo(lam, service_sampler, generations, z, omega, n_trees, rng, start=None):
    """E[z^(served) exp(-omega * time) 1{generation k empty}] for a Poisson-offspring tree.

    ``start`` holds the size of generation 0 per tree (one customer by
    default) and the time already spent before it.
    """
    if start is None:
        N = np.ones(n_trees, dtype=np.int64)
        T = np.zeros(n_trees)
    else:
        N, T = start
    served = np.zeros(n_trees)
    for _ in range(generations):
        B = service_sampler(rng, N)
        served += N
        T = T + B
        N = rng.poisson(lam * B)
    vals = z ** served * np.exp(-omega * T) * (N == 0)
    return vals.mean(), vals.std(ddof=1) / np.sqrt(n_trees)
