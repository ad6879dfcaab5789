"""Batch-service M/G/1 queue built on the gated vacation model.

All customers present when a service starts are served as one batch of
size L_S; the batch occupies the server for S = H_1 + ... + H_{L_S} + V and
leaves together.  The number left behind by a batch has the vacation-end
law ell_E, so this model reuses the vacation solver's tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .branching import DEFAULT_POLICY, ModelParams, TruncationPolicy, ell_E, one_minus_ell_E
from .vacation import ell_E_moments_closed, pmf_from_pgf, solve_context

SAME_POINT_STEP = 1e-6


def _scalar(out, z):
    return np.asarray(out).item() if np.ndim(z) == 0 else out


def ell_S(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=0.0):
    """PGF of the batch size (customers present at a service start)."""
    ell0 = solve_context(m, t).ell_E0
    z_arr = np.asarray(z)
    return _scalar(ell_E(m, t, z_arr) + (z_arr - 1) * ell0, z)


@dataclass(frozen=True)
class BatchBasics:
    mean_service: float  # E[S^B]
    mean_cycle: float  # E[C], between consecutive service starts
    utilization: float  # rho*
    mean_batch: float  # E[L_S]
    second_factorial_batch: float  # E[L_S (L_S - 1)]


def batch_basics(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> BatchBasics:
    ell0 = solve_context(m, t).ell_E0
    LE1, LE2 = ell_E_moments_closed(m, t)
    ES = (LE1 + ell0) * m.service.mean + m.vacation.mean
    EC = ES + ell0 / m.lam
    rho, lev = m.rho, m.lam * m.vacation.mean
    util = (rho * LE1 + rho * ell0 + lev) / (rho * LE1 + (1 + rho) * ell0 + lev)
    if abs(util - ES / EC) > 1e-12:
        raise AssertionError(f"utilization {util!r} disagrees with E[S]/E[C] = {ES / EC!r}")
    # ell_S'' = ell_E'' since the correction term is linear in z
    return BatchBasics(ES, EC, util, LE1 + ell0, LE2)


def _served_then_vacation(m: ModelParams, t: TruncationPolicy, z, x):
    """ell_S(z h*(x)) v*(x): batch size counted through a service-time LST."""
    return ell_S(m, t, z * m.service.lst(x)) * m.vacation.lst(x)


def age_residual_transform(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=1.0, s=0.0, omega=0.0) -> float:
    """E[z^L_S exp(-s age - omega residual)] of the batch in service at a random time."""
    if s < 0 or omega < 0:
        raise ValueError("s and omega must be >= 0")
    ES = batch_basics(m, t).mean_service
    g = lambda x: _served_then_vacation(m, t, z, x)
    if abs(s - omega) > SAME_POINT_STEP:
        return float((g(omega) - g(s)) / (ES * (s - omega)))
    # s -> omega: -g'(omega) / E[S]
    x0 = 0.5 * (s + omega)
    mode = "central" if x0 > 4 * SAME_POINT_STEP else "forward"
    d, _ = numerics.derivative_at(g, x0, 1, h=SAME_POINT_STEP, mode=mode)
    return float(-d / ES)


def batch_queue_pgf(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=0.0):
    """PGF of the stationary number of customers in the batch-service queue."""
    b = batch_basics(m, t)
    ell0 = solve_context(m, t).ell_E0
    H, V, lam = m.service, m.vacation, m.lam
    z_arr = np.asarray(z)
    at_one = z_arr == 1
    zz = np.where(at_one, 0.5, z_arr)
    x = lam * (1 - zz)
    y = zz * H.lst(x)
    y_gap = (1 - zz) + zz * H.one_minus_lst(x)
    # ell_S(z) - ell_S(y) v(x), split so every piece is O(1 - z) with full precision
    diff_E = (one_minus_ell_E(m, t, gap=y_gap) - one_minus_ell_E(m, t, gap=1 - zz)) / (1 - zz)
    inner = (
        diff_E
        + ell0 * zz * H.mean * lam * H.excess_lst(x)
        + ell_S(m, t, y) * V.mean * lam * V.excess_lst(x)
    ) / (lam * b.mean_service)
    out = np.where(at_one, 1.0, 1 - b.utilization + b.utilization * inner)
    return _scalar(out, z)


def batch_delay_lst(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, omega=1.0) -> float:
    """LST of the system delay of a customer in the batch-service queue."""
    if omega < 0:
        raise ValueError("omega must be >= 0")
    if omega == 0:
        return 1.0
    b = batch_basics(m, t)
    ell0 = solve_context(m, t).ell_E0
    H, V, lam = m.service, m.vacation, m.lam
    a = H.lst(omega)
    w2 = omega + lam * H.one_minus_lst(omega)
    bb = H.lst(w2)
    # ell_E(a) - ell_S(bb) v(w2) in complement form
    num = (
        one_minus_ell_E(m, t, gap=H.one_minus_lst(w2))
        - one_minus_ell_E(m, t, gap=H.one_minus_lst(omega))
        + ell0 * H.one_minus_lst(w2)
        + ell_S(m, t, bb) * V.one_minus_lst(w2)
    )
    inner = num / (b.mean_service * omega)
    return float(a * V.lst(omega) * (1 - b.utilization + b.utilization * inner))


def batch_mean_queue(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> float:
    """E[L] = rho* (E[L_S S] / E[S] + lam E[S^2] / (2 E[S]))."""
    b = batch_basics(m, t)
    EH, EH2 = m.service.mean, m.service.raw_moment(2)
    EV, EV2 = m.vacation.mean, m.vacation.raw_moment(2)
    L1 = b.mean_batch
    L2 = b.second_factorial_batch + L1  # E[L_S^2]
    ELS = L2 * EH + L1 * EV
    # Var of a sum of L_S services plus an independent vacation
    ES2 = L1 * (EH2 - EH ** 2) + L2 * EH ** 2 + 2 * L1 * EH * EV + EV2
    return b.utilization * (ELS / b.mean_service + m.lam * ES2 / (2 * b.mean_service))


def batch_mean_delay(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> float:
    """Mean system delay by Little's law."""
    return batch_mean_queue(m, t) / m.lam


def _fd_step(m: ModelParams) -> float:
    return 0.01 * (1 - np.sqrt(m.rho)) ** 2


def batch_mean_queue_numeric(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> tuple[float, float]:
    return numerics.derivative_at(lambda z: batch_queue_pgf(m, t, z), 1.0, 1, h=_fd_step(m), mode="backward")


def batch_mean_delay_numeric(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> tuple[float, float]:
    h = _fd_step(m) / m.service.mean
    d, err = numerics.derivative_at(lambda w: batch_delay_lst(m, t, w), 0.0, 1, h=h, mode="forward")
    return -d, err


@dataclass
class BatchReport:
    basics: BatchBasics
    batch_pmf: np.ndarray
    queue_pmf: np.ndarray
    mean_queue: float
    mean_delay: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        b = self.basics
        return {
            "ell_S0": 0.0,
            "mean_batch_size": b.mean_batch,
            "mean_service": b.mean_service,
            "mean_cycle": b.mean_cycle,
            "utilization": b.utilization,
            "mean_queue_length": self.mean_queue,
            "mean_delay": self.mean_delay,
            "batch_pmf": self.batch_pmf.tolist(),
            "queue_pmf": self.queue_pmf.tolist(),
            "diagnostics": self.diagnostics,
        }


def solve_batch(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, K: int | None = None) -> BatchReport:
    b = batch_basics(m, t)
    mq = batch_mean_queue(m, t)
    md = mq / m.lam
    nq, eq = batch_mean_queue_numeric(m, t)
    nd, ed = batch_mean_delay_numeric(m, t)
    bpmf = pmf_from_pgf(lambda z: ell_S(m, t, z), K)
    qpmf = pmf_from_pgf(lambda z: batch_queue_pgf(m, t, z), K)
    diag = {
        "mean_queue_numeric": nq,
        "mean_queue_numeric_error": eq,
        "mean_delay_numeric": nd,
        "mean_delay_numeric_error": ed,
        "batch_pmf_mass": float(bpmf.sum()),
        "queue_pmf_mass": float(qpmf.sum()),
    }
    return BatchReport(b, bpmf, qpmf, mq, md, diag)
