"""Lattice PGF inversion and Richardson-extrapolated finite differences."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonConvergence

log = logging.getLogger(__name__)

MAX_NODES = 2 ** 16
ALIAS_TARGET = 1e-12
PMF_BUDGET = 1e-9
# assumed absolute accuracy of a PGF evaluation on the inversion circle
EVAL_ERROR = 1e-14


@dataclass(frozen=True)
class InversionGrid:
    """M nodes on the circle of radius r, used to recover p_0..p_K."""

    K: int
    M: int
    r: float

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if self.M < 2 * self.K + 2 or self.M & (self.M - 1):
            raise ValueError(f"M must be a power of 2 with M >= 2K+2 (K={self.K}, M={self.M})")
        if not 0 < self.r < 1:
            raise ValueError("radius must lie in (0, 1)")

    @classmethod
    def for_order(cls, K: int, M: int | None = None, budget: float = PMF_BUDGET) -> "InversionGrid":
        """Smallest admissible grid whose error bound at k = K fits ``budget``.

        r is set so that r**M = 1e-12; M is doubled while the bound fails.
        """
        if M is None:
            M = 1 << max(1, (2 * K + 2 - 1).bit_length())
        while True:
            grid = cls(K, M, ALIAS_TARGET ** (1.0 / M))
            if grid.error_bound(K) <= budget:
                return grid
            if M >= MAX_NODES:
                raise NonConvergence(
                    f"inversion error bound {grid.error_bound(K):.3g} exceeds {budget:g} at K={K} "
                    f"even with M={M} nodes"
                )
            M *= 2

    @property
    def aliasing(self) -> float:
        rm = self.r ** self.M
        return rm / (1.0 - rm)

    def error_bound(self, k) -> float:
        """Aliasing plus evaluation error amplified by r**-k."""
        return self.aliasing + EVAL_ERROR * self.r ** (-np.asarray(k, dtype=float))


def invert_pgf(g: Callable, grid: InversionGrid) -> np.ndarray:
    """p_0..p_K from a PGF evaluator ``g`` accepting complex arrays.

    p_k = r^-k / M * sum_j g(r w^j) w^(-jk), w = exp(2 pi i / M).
    """
    j = np.arange(grid.M)
    nodes = grid.r * np.exp(2j * np.pi * j / grid.M)
    vals = np.asarray(g(nodes), dtype=complex)
    coef = np.fft.fft(vals)[: grid.K + 1] / grid.M
    coef = coef * grid.r ** (-np.arange(grid.K + 1, dtype=float))
    resid = np.max(np.abs(coef.imag)) if coef.size else 0.0
    if resid > PMF_BUDGET:
        raise NonConvergence(f"inversion left an imaginary residue of {resid:.3g}")
    return coef.real.copy()


def clip_pmf(pmf: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Zero out tiny negative masses; larger ones signal bad truncation."""
    worst = pmf.min(initial=0.0)
    if worst < -tol:
        raise NonConvergence(f"inverted pmf has a negative mass {worst:.3g}")
    if worst < 0:
        log.debug("clipping negative pmf entries down to %.3g", worst)
    return np.clip(pmf, 0.0, None)


def fd_weights(offsets, n: int) -> np.ndarray:
    """Weights w with sum(w * f(x0 + o*h)) / h**n ~ f^(n)(x0).

    Solves the Taylor moment system; exact for polynomials of degree
    < len(offsets).
    """
    x = np.asarray(offsets, dtype=float)
    m = len(x)
    if m <= n:
        raise ValueError("need more stencil points than the derivative order")
    A = np.array([x ** k / math.factorial(k) for k in range(m)])
    rhs = np.zeros(m)
    rhs[n] = 1.0
    return np.linalg.solve(A, rhs)


def _stencil(n: int, mode: str, accuracy: int):
    if mode == "central":
        p = (n + 1) // 2 + accuracy // 2 - 1
        offsets = np.arange(-p, p + 1)
        step = 2
    elif mode in ("backward", "forward"):
        offsets = np.arange(0, n + accuracy)
        if mode == "backward":
            offsets = -offsets
        step = 1
    else:
        raise ValueError(f"unknown differencing mode {mode!r}")
    return offsets, fd_weights(offsets, n), step


def derivative_at(
    g: Callable[[float], float],
    x0: float,
    n: int = 1,
    h: float = 1e-3,
    mode: str = "central",
    accuracy: int | None = None,
    tol: float | None = None,
) -> tuple[float, float]:
    """n-th derivative of ``g`` at ``x0`` with a 2-level Richardson table.

    ``mode`` is "central", or "backward"/"forward" for points at the edge
    of the domain (z -> 1-, omega -> 0+).  Returns ``(value, error
    estimate)``; the estimate is the gap between the last two Richardson
    levels plus a rounding term.  Raises :class:`NonConvergence` if ``tol``
    is given and the estimate exceeds it.
    """
    if not 1 <= n <= 4:
        raise ValueError("derivative order must be in 1..4")
    if accuracy is None:
        accuracy = 2 if mode == "central" else 4
    offsets, w, step = _stencil(n, mode, accuracy)

    def base(hh):
        vals = np.array([g(x0 + o * hh) for o in offsets], dtype=float)
        est = float(w @ vals) / hh ** n
        rounding = np.finfo(float).eps * float(np.abs(w) @ np.maximum(np.abs(vals), 1e-300)) / hh ** n
        return est, rounding

    levels = [base(h / 2 ** i) for i in range(3)]
    t = [v for v, _ in levels]
    rounding = 4.0 * max(r for _, r in levels)
    p1 = accuracy
    p2 = accuracy + step
    f1 = 2.0 ** p1
    r1 = [(f1 * t[i + 1] - t[i]) / (f1 - 1) for i in range(2)]
    f2 = 2.0 ** p2
    r2 = (f2 * r1[1] - r1[0]) / (f2 - 1)
    err = abs(r2 - r1[1]) + rounding
    if tol is not None and err > tol:
        raise NonConvergence(f"derivative error estimate {err:.3g} exceeds tolerance {tol:.3g}")
    return r2, err


def falling_factorial_moments(pmf: np.ndarray, order: int) -> np.ndarray:
    """E[N (N-1) ... (N-n+1)] for n = 1..order from a pmf on 0..K."""
    k = np.arange(len(pmf), dtype=float)
    out = np.empty(order)
    ff = np.ones_like(k)
    for n in range(1, order + 1):
        ff = ff * (k - (n - 1))
        out[n - 1] = float(ff @ pmf)
    return out


def geometric_tail(last_term: float, ratio: float) -> float:
    """Bound on sum_{j>=1} last_term * ratio**j for 0 <= ratio < 1."""
    if not 0 <= ratio < 1:
        return math.inf
    return last_term * ratio / (1.0 - ratio)
