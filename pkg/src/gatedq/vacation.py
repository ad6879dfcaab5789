"""Stationary queue length and delay of the gated single-vacation M/G/1 queue.

Queue length decomposes as L = L_M/G/1 + L_V, with L_V = 0 while the
server idles and L_B + N(V_hat) while it is on vacation (V_hat is the
equilibrium vacation).  All PGFs here are written through the equilibrium
LSTs of H and V so that the points z = 1 (and s = 0) are exact.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from . import numerics
from .branching import (
    DEFAULT_POLICY,
    ModelParams,
    TruncationPolicy,
    branching_tables,
    delay_ell_E,
    ell_E,
)
from .errors import NonConvergence

log = logging.getLogger(__name__)

MAX_ORDER = 4


@dataclass(frozen=True)
class SolveContext:
    """Per-model constants reused across z-grids."""

    params: ModelParams
    policy: TruncationPolicy
    ell_E0: float
    n_star: int
    tail_estimate: float

    @property
    def idle_weight(self) -> float:
        """P(server idle | server not serving)."""
        m = self.params
        return self.ell_E0 / (m.lam * m.vacation.mean + self.ell_E0)

    @property
    def vacation_weight(self) -> float:
        m = self.params
        lev = m.lam * m.vacation.mean
        return lev / (lev + self.ell_E0)


@functools.lru_cache(maxsize=256)
def solve_context(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> SolveContext:
    tab = branching_tables(m, t)
    return SolveContext(m, t, tab.ell_E0, tab.n_star, tab.tail_estimate)


def _scalar(out, z):
    return np.asarray(out).item() if np.ndim(z) == 0 else out


def ell_mg1(m: ModelParams, z):
    """Queue-length PGF of the ordinary M/G/1 queue (Pollaczek-Khinchine)."""
    m.require_stable()
    z = np.asarray(z)
    s = m.lam * (1 - z)
    # (z - a_H)/(z - 1) = 1 - lam E[H] * excess_H(s)
    out = (1 - m.rho) * m.service.lst(s) / (1 - m.rho * m.service.excess_lst(s))
    return _scalar(out, z)


def _bracket(ctx: SolveContext, z):
    m = ctx.params
    z = np.asarray(z)
    s = m.lam * (1 - z)
    lB = ell_E(m, ctx.policy, z) / m.vacation.lst(s)
    return ctx.idle_weight + ctx.vacation_weight * lB * m.vacation.excess_lst(s)


def decomposition_factor(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=0.0):
    """PGF of the vacation-induced term L_V (the bracket of the decomposition)."""
    return _scalar(_bracket(solve_context(m, t), z), z)


def ell_star(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=0.0):
    """PGF of the stationary (time-average) number of customers."""
    ctx = solve_context(m, t)
    return _scalar(ell_mg1(m, z) * _bracket(ctx, z), z)


def _lam_moments(d, lam, n):
    """lam^k E[X^k], k = 0..n (factorial moments of the Poisson count)."""
    return np.array([1.0] + [lam ** k * d.raw_moment(k) for k in range(1, n + 1)])


def mg1_factorial_moments(m: ModelParams, n: int) -> np.ndarray:
    """Factorial moments 0..n of the M/G/1 queue length by the PK recursion."""
    rho = m.rho
    A = _lam_moments(m.service, m.lam, n + 1)
    L = np.empty(n + 1)
    L[0] = 1.0
    for k in range(1, n + 1):
        acc = sum(comb(k + 1, i, exact=True) * A[k + 1 - i] * L[i] for i in range(k))
        L[k] = acc / ((k + 1) * (1 - rho)) + A[k]
    return L


def ell_E_moments_closed(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> tuple[float, float]:
    """First two factorial moments of L_E in closed form."""
    ctx = solve_context(m, t)
    rho, lev = m.rho, m.lam * m.vacation.mean
    l0 = ctx.ell_E0
    L1 = (lev + rho * l0) / (1 - rho)
    AH2 = m.lam ** 2 * m.service.raw_moment(2)
    AV2 = m.lam ** 2 * m.vacation.raw_moment(2)
    L2 = ((AH2 + 2 * rho * lev) * (L1 + l0) + AV2) / (1 - rho ** 2)
    return L1, L2


def _fd_step(m: ModelParams, n: int) -> float:
    # the PGFs here have their nearest singularity roughly (1 - rho) beyond z = 1
    base = {1: 0.02, 2: 0.03, 3: 0.05, 4: 0.06}[n]
    return base * min(1.0, 1 - m.rho)


def pgf_derivative_at_one(g, m: ModelParams, n: int) -> tuple[float, float]:
    """n-th derivative at z = 1- of a PGF evaluator, with error estimate."""
    return numerics.derivative_at(g, 1.0, n, h=_fd_step(m, n), mode="backward")


def ell_E_moments_numeric(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, N: int = MAX_ORDER):
    """Factorial moments of L_E by differentiating ell_E at 1-."""
    out = np.empty(N)
    for n in range(1, N + 1):
        out[n - 1], _ = pgf_derivative_at_one(lambda z: ell_E(m, t, z), m, n)
    return out


def factorial_moments_recursion(m: ModelParams, t: TruncationPolicy, lE: np.ndarray) -> np.ndarray:
    """Factorial moments of L from those of L_E (entries 1..N in ``lE``).

    Differentiates ell* a_V = ell_MG1 [w0 a_V + w1 G_V ell_E] n times at 1,
    where G_V(z) = (1 - a_V(z)) / (lam E[V] (1 - z)) has derivatives
    lam^{i+1} E[V^{i+1}] / ((i+1) lam E[V]).
    """
    ctx = solve_context(m, t)
    N = len(lE)
    w0, w1 = ctx.idle_weight, ctx.vacation_weight
    LE = np.concatenate(([1.0], lE))
    LM = mg1_factorial_moments(m, N)
    AV = _lam_moments(m.vacation, m.lam, N + 1)
    lev = AV[1]
    G = np.array([AV[i + 1] / ((i + 1) * lev) for i in range(N + 1)])
    L = np.empty(N + 1)
    L[0] = 1.0
    for n in range(1, N + 1):
        rhs = 0.0
        for k in range(n + 1):
            bracket_k = w0 * AV[k] + w1 * sum(comb(k, i, exact=True) * G[i] * LE[k - i] for i in range(k + 1))
            rhs += comb(n, k, exact=True) * LM[n - k] * bracket_k
        rhs -= sum(comb(n, k, exact=True) * L[k] * AV[n - k] for k in range(n))
        L[n] = rhs
    return L[1:]


def mean_queue_length(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> float:
    ctx = solve_context(m, t)
    lam, rho = m.lam, m.rho
    lev = lam * m.vacation.mean
    return (
        lam ** 2 * m.service.raw_moment(2) / (2 * (1 - rho))
        + rho
        + rho / (1 - rho) * lev
        + ctx.vacation_weight * lam ** 2 * m.vacation.raw_moment(2) / (2 * lev)
    )


def factorial_moments(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, N: int = MAX_ORDER) -> np.ndarray:
    """E[L(L-1)...(L-n+1)] for n = 1..N (N <= 4).

    Orders 1 and 2 come from the closed forms for L_E; orders 3 and 4 are
    obtained by differentiating ell* numerically.
    """
    if not 1 <= N <= MAX_ORDER:
        raise ValueError(f"factorial moments are supported up to order {MAX_ORDER}")
    closed = factorial_moments_recursion(m, t, np.array(ell_E_moments_closed(m, t)))
    out = np.empty(N)
    out[: min(N, 2)] = closed[: min(N, 2)]
    for n in range(3, N + 1):
        out[n - 1], _ = pgf_derivative_at_one(lambda z: ell_star(m, t, z), m, n)
    return out


def ell_star_moments_numeric(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, N: int = 2):
    """(values, error estimates) of the factorial moments by finite differences."""
    vals, errs = np.empty(N), np.empty(N)
    for n in range(1, N + 1):
        vals[n - 1], errs[n - 1] = pgf_derivative_at_one(lambda z: ell_star(m, t, z), m, n)
    return vals, errs


def delay_lst(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, s=1.0):
    """LST of the FIFO system delay, evaluated through the zeta recursions."""
    ctx = solve_context(m, t)
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("delay LST needs s >= 0")
    H, V = m.service, m.vacation
    mg1 = (1 - m.rho) * H.lst(s) / (1 - m.rho * H.excess_lst(s))
    dE = delay_ell_E(m, t, s)
    bracket = ctx.idle_weight + ctx.vacation_weight * dE / V.lst(s) * V.excess_lst(s)
    return _scalar(mg1 * bracket, s)


def delay_moments(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, N: int = 2) -> np.ndarray:
    """Raw moments E[D^n] = L^(n) / lam^n."""
    L = factorial_moments(m, t, N)
    return L / m.lam ** np.arange(1, N + 1)


def p_idle(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> float:
    """Long-run fraction of time the server is idle (not serving, not on vacation)."""
    return solve_context(m, t).idle_weight * (1 - m.rho)


def mv_comparison(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> tuple[float, float]:
    """(E[L] under multiple vacations, E[L_MV] - E[L])."""
    ctx = solve_context(m, t)
    lam, rho = m.lam, m.rho
    lev = lam * m.vacation.mean
    resid = lam ** 2 * m.vacation.raw_moment(2) / (2 * lev)
    mv = lam ** 2 * m.service.raw_moment(2) / (2 * (1 - rho)) + rho + rho / (1 - rho) * lev + resid
    gap = ctx.idle_weight * resid
    diff = mv - mean_queue_length(m, t)
    if not gap > 0 or abs(gap - diff) > 1e-10 * max(1.0, mv):
        raise AssertionError(f"multiple-vacation gap {gap!r} disagrees with difference {diff!r}")
    return mv, gap


def pmf_from_pgf(g, K: int | None = None, tail: float = 1e-7, K_max: int = 1 << 14) -> np.ndarray:
    """Invert a PGF on 0..K; with K=None grow K until the mass left is < tail."""
    if K is not None:
        return numerics.clip_pmf(numerics.invert_pgf(g, numerics.InversionGrid.for_order(K)))
    K = 64
    while True:
        pmf = numerics.clip_pmf(numerics.invert_pgf(g, numerics.InversionGrid.for_order(K)))
        if 1.0 - pmf.sum() < tail:
            return pmf
        if K >= K_max:
            raise NonConvergence(f"pmf tail still {1 - pmf.sum():.3g} at K={K}")
        K *= 2


def queue_pmf(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, K: int | None = None) -> np.ndarray:
    """P(L = k), k = 0..K, by lattice inversion of ell*."""
    return pmf_from_pgf(lambda z: ell_star(m, t, z), K)


def vacation_end_pmf(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, K: int | None = None) -> np.ndarray:
    """P(L_E = k), k = 0..K."""
    return pmf_from_pgf(lambda z: ell_E(m, t, z), K)


@dataclass
class StationaryQueueReport:
    ell_E0: float
    factorial_moments: np.ndarray
    delay_moments: np.ndarray
    mean_delay: float
    pmf: np.ndarray
    vacation_end_pmf: np.ndarray
    p_idle: float
    p_empty: float
    mv_mean: float
    mv_mean_gap: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ell_E0": self.ell_E0,
            "factorial_moments": self.factorial_moments.tolist(),
            "mean_queue_length": float(self.factorial_moments[0]),
            "mean_delay": self.mean_delay,
            "delay_moments": self.delay_moments.tolist(),
            "p_idle": self.p_idle,
            "p_empty": self.p_empty,
            "mv_mean_queue_length": self.mv_mean,
            "mv_mean_gap": self.mv_mean_gap,
            "pmf": self.pmf.tolist(),
            "vacation_end_pmf": self.vacation_end_pmf.tolist(),
            "diagnostics": self.diagnostics,
        }


def solve(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, N: int = MAX_ORDER, K: int | None = None) -> StationaryQueueReport:
    """Everything the solver knows about the stationary single-vacation queue."""
    ctx = solve_context(m, t)
    L = factorial_moments(m, t, N)
    D = L / m.lam ** np.arange(1, N + 1)
    pmf = queue_pmf(m, t, K)
    pmf_E = vacation_end_pmf(m, t, K)
    mv, gap = mv_comparison(m, t)
    p0 = float(ell_star(m, t, 0.0))
    if abs(pmf[0] - p0) > 1e-9:
        log.warning("pmf[0]=%.12g differs from ell*(0)=%.12g", pmf[0], p0)
    num, err = ell_star_moments_numeric(m, t, 2)
    rec = factorial_moments_recursion(m, t, ell_E_moments_numeric(m, t, N)) if N > 2 else L
    diag = {
        "n_star": ctx.n_star,
        "tail_estimate": ctx.tail_estimate,
        "pmf_mass": float(pmf.sum()),
        "pmf_max_k": len(pmf) - 1,
        "moment_crosscheck_rel": [float(abs(num[i] - L[i]) / abs(L[i])) for i in range(min(2, N))],
        "derivative_error_estimate": err.tolist(),
        "recursion_crosscheck_rel": [float(abs(rec[i] - L[i]) / abs(L[i])) for i in range(2, N)],
    }
    return StationaryQueueReport(
        ell_E0=ctx.ell_E0,
        factorial_moments=L,
        delay_moments=D,
        mean_delay=float(D[0]),
        pmf=pmf,
        vacation_end_pmf=pmf_E,
        p_idle=p_idle(m, t),
        p_empty=p0,
        mv_mean=mv,
        mv_mean_gap=gap,
        diagnostics=diag,
    )
