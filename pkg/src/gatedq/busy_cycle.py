"""Joint transforms of the busy cycle: length T*, customers served N*, vacations M*.

A busy cycle runs from the end of an idle period to the start of the next
one.  Three-argument generation transforms track, along the ancestral
lines of the branching process, the customers served (z) and the time
spent (omega) until generation k first becomes empty.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics
from .branching import DEFAULT_POLICY, ModelParams, TruncationPolicy
from .errors import NonConvergence
from .vacation import p_idle, solve_context

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-6
IDENTITY_WARN = 1e-4


def _check_point(z, omega, eta=0.0):
    if not 0 < z <= 1:
        raise ValueError(f"z must lie in (0, 1], got {z}")
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    if not 0 <= eta <= 1:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")


def _generations(m: ModelParams, z, omega, eta):
    """Yield (k, 1 - psi_k^H, psi_k^V, 1 - psi_k^V) at (z, omega, eta), forever."""
    H, V, lam = m.service, m.vacation, m.lam
    s = omega + lam * (1 - eta)
    k = 0
    while True:
        k += 1
        # 1 - z h(s) = (1 - z) + z (1 - h(s))
        u = (1 - z) + z * H.one_minus_lst(s)
        cv = V.one_minus_lst(s)
        yield k, u, 1 - cv, cv
        s = omega + lam * u


def psi_H3(m: ModelParams, k: int, z, omega, eta):
    """psi_1^H = z h*(omega + lam - lam eta), psi_k^H = z h*(omega + lam - lam psi_{k-1}^H)."""
    if k < 1:
        raise ValueError("generation index must be >= 1")
    _check_point(z, omega, eta)
    for j, u, _, _ in _generations(m, z, omega, eta):
        if j == k:
            return 1 - u


def psi_V3(m: ModelParams, k: int, z, omega, eta):
    """psi_1^V = v*(omega + lam - lam eta), psi_k^V = v*(omega + lam - lam psi_{k-1}^H)."""
    if k < 1:
        raise ValueError("generation index must be >= 1")
    _check_point(z, omega, eta)
    for j, _, pv, _ in _generations(m, z, omega, eta):
        if j == k:
            return pv


def _tables(m: ModelParams, z, omega, n: int):
    """Arrays psi_k^H and prod_{j<=k} psi_j^V for k = 1..n at eta = 0."""
    psiH = np.empty(n)
    prod = np.empty(n)
    p = 1.0
    for k, u, pv, _ in _generations(m, z, omega, 0.0):
        p *= pv
        psiH[k - 1], prod[k - 1] = 1 - u, p
        if k == n:
            break
    return psiH, prod


def theta_sequence(m: ModelParams, n: int, z=1.0, omega=0.0) -> np.ndarray:
    """theta_1..theta_n: E[z^N* exp(-omega T*); M* = k]."""
    m.require_stable()
    _check_point(z, omega)
    psiH, prod = _tables(m, z, omega, n)
    theta = np.empty(n)
    for k in range(n):
        # discrete renewal equation in the number of vacations
        theta[k] = psiH[k] * prod[k] - float(theta[:k] @ prod[k - 1 :: -1][:k])
    return theta


def theta_n(m: ModelParams, t: TruncationPolicy, n: int, z=1.0, omega=0.0) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > t.max_n:
        raise NonConvergence(f"n={n} exceeds the recursion cap max_n={t.max_n}")
    return float(theta_sequence(m, n, z, omega)[-1])


def theta_star(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=1.0, omega=0.0) -> float:
    """E[z^N* exp(-omega T*)].

    The series in numerator and denominator are summed until psi^H settles
    on its fixed point; the remaining terms are then geometric in
    psi^V_inf and are added in closed form.  At (1, 0) the denominator
    diverges and the value is exactly 1.
    """
    m.require_stable()
    _check_point(z, omega)
    if z == 1 and omega == 0:
        return 1.0
    H, V, lam = m.service, m.vacation, m.lam
    A = B = 1.0  # 1 + sum u_n P_n,  1 + sum P_n
    P = 1.0
    u_prev = None
    for k, u, pv, _ in _generations(m, z, omega, 0.0):
        P *= pv
        A += u * P
        B += P
        if u_prev is not None and abs(u - u_prev) <= t.eps * abs(u):
            break
        if k >= t.max_n:
            raise NonConvergence(f"busy-cycle series did not settle within max_n={t.max_n}")
        u_prev = u
    # fixed point u_inf = 1 - z h(omega + lam u_inf) is reached to eps
    s_inf = omega + lam * u
    v_inf = V.lst(s_inf)
    c_inf = V.one_minus_lst(s_inf)
    if c_inf <= 0:
        raise NonConvergence("busy-cycle tail is not geometric at this point")
    ratio = (A * c_inf + u * P * v_inf) / (B * c_inf + P * v_inf)
    return float(1.0 - ratio)


@dataclass(frozen=True)
class CycleMeans:
    mean_customers: float  # E[N*]
    mean_length: float  # E[T*]
    mean_vacations: float  # E[M*]
    idle_identity_residual: float
    errors: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "mean_customers": self.mean_customers,
            "mean_length": self.mean_length,
            "mean_vacations": self.mean_vacations,
            "idle_identity_residual": self.idle_identity_residual,
            "derivative_error_estimates": list(self.errors),
        }


def _fd_steps(m: ModelParams) -> tuple[float, float]:
    # the busy-period transforms branch roughly (1 - sqrt(rho))^2 beyond (1, 0)
    gap = (1 - np.sqrt(m.rho)) ** 2
    return 0.01 * gap, 0.01 * gap / m.service.mean


def mean_vacations(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, block: int = 256) -> float:
    """E[M*] = sum n theta_n(1, 0), cut when theta_n(1, 0) < 1e-14 / n.

    The renewal recursion subtracts O(1) quantities, so terms below a few
    ulps are rounding noise; reaching that floor also ends the sum.
    """
    floor = 4 * np.finfo(float).eps
    n = block
    while True:
        theta = theta_sequence(m, n)
        k = np.arange(1, n + 1)
        quiet = (theta < 1e-14 / k) | (np.abs(theta) < floor)
        # two quiet terms in a row
        hit = np.nonzero(quiet[:-1] & quiet[1:])[0]
        if hit.size:
            cut = hit[0] + 1
            return float(k[:cut] @ theta[:cut])
        if n >= t.max_n:
            raise NonConvergence(f"theta_n(1,0) did not become negligible within max_n={t.max_n}")
        n = min(2 * n, t.max_n)


def cycle_means(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> CycleMeans:
    """(E[N*], E[T*], E[M*]) from one-sided Richardson derivatives of theta_star at (1, 0)."""
    m.require_stable()
    hz, hw = _fd_steps(m)
    dz, ez = numerics.derivative_at(lambda z: theta_star(m, t, z, 0.0), 1.0, 1, h=hz, mode="backward")
    dw, ew = numerics.derivative_at(lambda w: theta_star(m, t, 1.0, w), 0.0, 1, h=hw, mode="forward")
    ET = -dw
    EM = mean_vacations(m, t)
    idle_cycle = (1 / m.lam) / (ET + 1 / m.lam)
    resid = abs(idle_cycle - p_idle(m, t))
    if resid > IDENTITY_WARN:
        warnings.warn(f"renewal identity for the idle fraction is off by {resid:.3g}", RuntimeWarning)
    elif resid > IDENTITY_TOL:
        log.info("renewal identity residual %.3g above %.0e", resid, IDENTITY_TOL)
    return CycleMeans(float(dz), float(ET), EM, float(resid), (float(ez), float(ew)))


def identity_checks(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, means: CycleMeans | None = None) -> dict:
    """Residuals of E[M*] = 1/ell_E(0) and E[N*] = 1 + lam E[T*]."""
    means = means or cycle_means(m, t)
    ell0 = solve_context(m, t).ell_E0
    return {
        "vacations_vs_inverse_ell0": abs(means.mean_vacations - 1 / ell0),
        "customers_vs_arrivals": abs(means.mean_customers - (1 + m.lam * means.mean_length)),
        "idle_fraction": means.idle_identity_residual,
    }
