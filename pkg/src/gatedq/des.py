"""Discrete-event simulation of the gated vacation queues and the batch-service queue.

Each replication draws its inputs up front (arrival epochs, one service
time per customer, a pool of vacation times) from a Philox stream keyed by
``(seed, replication)``, then a compiled kernel plays the service
discipline forward.  A replication's horizon counts customer arrivals;
statistics use customers ``warmup .. horizon - 1`` and the time window
between their first arrival and the arrival of customer ``horizon``.

Time averages come from integrating the exact occupancy path, so they carry
no sampling noise beyond the replication itself.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .branching import InitialState, ModelParams
from .errors import ConfigError

log = logging.getLogger(__name__)

SINGLE, MULTIPLE, BATCH = 0, 1, 2
HIST_BINS = 1024  # last bin collects the overflow
CYCLE_BINS = 64


class ModelKind(str, enum.Enum):
    single_vacation_gated = "single_vacation_gated"
    multiple_vacation_gated = "multiple_vacation_gated"
    batch_service = "batch_service"

    @property
    def code(self) -> int:
        return {"single_vacation_gated": SINGLE, "multiple_vacation_gated": MULTIPLE, "batch_service": BATCH}[self.value]


@dataclass(frozen=True)
class SimConfig:
    kind: ModelKind
    params: ModelParams
    horizon: int = 1_000_000
    replications: int = 20
    seed: int = 12345
    warmup: int | None = None  # default 10% of the horizon
    lst_points: tuple[float, ...] = (0.5, 1.0)
    # (z, s, omega) for the batch age/residual transform
    age_point: tuple[float, float, float] = (1.0, 0.5, 0.3)
    pgf_points: tuple[float, ...] = (0.5,)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 10)
        if self.horizon < 100_000:
            raise ConfigError(f"horizon must be at least 1e5 arrivals, got {self.horizon}")
        if self.replications < 10:
            raise ConfigError(f"at least 10 replications are needed, got {self.replications}")
        if not 0 <= self.warmup < self.horizon:
            raise ConfigError(f"warmup must lie in [0, horizon), got {self.warmup}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if any(s < 0 for s in self.lst_points) or self.age_point[1] < 0 or self.age_point[2] < 0:
            raise ConfigError("transform arguments must be nonnegative")


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Counter-based stream for replication ``rep``: Philox keyed by (seed, rep)."""
    return np.random.Generator(np.random.Philox(key=seed + (rep << 64)))


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _count_upto(arr, ptr, t):
    """Advance ptr to the number of arrivals with epoch <= t."""
    n = arr.shape[0]
    while ptr < n and arr[ptr] <= t:
        ptr += 1
    return ptr


@numba.njit(cache=True)
def _play_vacation(arr, svc, vac, mode, horizon):
    """Gated service with single (mode 0) or multiple (mode 1) vacations.

    Returns departures, vacation records (start, end, L_B, L_E), idle
    records (start, end), cycle records (start, end, N*, M*) and a status
    flag (0 ok, 1 ran out of customers, 2 ran out of vacations).
    """
    N = arr.shape[0]
    P = vac.shape[0]
    dep = np.full(N, np.inf)
    gate_time = np.full(N, np.inf)
    v_start = np.empty(P)
    v_end = np.empty(P)
    v_lb = np.empty(P, np.int64)
    v_le = np.empty(P, np.int64)
    idle_s = np.empty(N)
    idle_e = np.empty(N)
    c_start = np.empty(N)
    c_end = np.empty(N)
    c_n = np.empty(N, np.int64)
    c_m = np.empty(N, np.int64)
    nv = 0
    ni = 0
    nc = 0
    i = 0  # first customer not yet served
    ptr = 0  # arrivals so far
    t1 = arr[horizon]
    status = 0
    cyc_start = 0.0
    cyc_n = 0
    cyc_m = 0
    if mode == 1:
        cur = 0.0
    else:
        # empty system at time 0: idle until the first arrival, serve it alone
        idle_s[0] = 0.0
        idle_e[0] = arr[0]
        ni = 1
        cyc_start = arr[0]
        cur = arr[0] + svc[0]
        dep[0] = cur
        gate_time[0] = arr[0]
        i = 1
        cyc_n = 1
    while True:
        if nv >= P:
            status = 2
            break
        # a vacation starts at cur
        ptr = _count_upto(arr, ptr, cur)
        v_start[nv] = cur
        v_lb[nv] = ptr - i
        ve = cur + vac[nv]
        ptr = _count_upto(arr, ptr, ve)
        if ptr >= N:
            status = 1
            break
        v_end[nv] = ve
        gate = ptr - i
        v_le[nv] = gate
        nv += 1
        cyc_m += 1
        if gate == 0:
            if mode == 1:
                cur = ve
            else:
                c_start[nc] = cyc_start
                c_end[nc] = ve
                c_n[nc] = cyc_n
                c_m[nc] = cyc_m
                nc += 1
                idle_s[ni] = ve
                idle_e[ni] = arr[i]
                ni += 1
                cyc_start = arr[i]
                cyc_n = 1
                cyc_m = 0
                cur = arr[i] + svc[i]
                dep[i] = cur
                gate_time[i] = arr[i]
                i += 1
        else:
            cur = ve
            for k in range(i, ptr):
                cur += svc[k]
                dep[k] = cur
                gate_time[k] = ve
            i = ptr
            cyc_n += gate
        if ve > t1 and i > horizon:
            break
    return (dep, gate_time, v_start[:nv], v_end[:nv], v_lb[:nv], v_le[:nv],
            idle_s[:ni], idle_e[:ni], c_start[:nc], c_end[:nc], c_n[:nc], c_m[:nc], status)


@numba.njit(cache=True)
def _play_batch(arr, svc, vac, horizon):
    """Batch service: everyone waiting leaves together after sum(H) + V.

    Returns departures, batch records (start, end, size, left behind),
    idle records and a status flag.
    """
    N = arr.shape[0]
    P = vac.shape[0]
    dep = np.full(N, np.inf)
    b_start = np.empty(P)
    b_end = np.empty(P)
    b_size = np.empty(P, np.int64)
    b_left = np.empty(P, np.int64)
    idle_s = np.empty(N)
    idle_e = np.empty(N)
    nb = 0
    ni = 1
    idle_s[0] = 0.0
    idle_e[0] = arr[0]
    t1 = arr[horizon]
    status = 0
    i = 0
    ptr = 1
    cur = arr[0]
    while True:
        if nb >= P:
            status = 2
            break
        # a batch of customers i .. ptr-1 starts at cur
        dur = vac[nb]
        for k in range(i, ptr):
            dur += svc[k]
        end = cur + dur
        for k in range(i, ptr):
            dep[k] = end
        b_start[nb] = cur
        b_end[nb] = end
        b_size[nb] = ptr - i
        i = ptr
        ptr = _count_upto(arr, ptr, end)
        if ptr >= N:
            status = 1
            break
        b_left[nb] = ptr - i
        nb += 1
        if ptr == i:
            idle_s[ni] = end
            idle_e[ni] = arr[i]
            ni += 1
            cur = arr[i]
            ptr = i + 1
        else:
            cur = end
        if end > t1 and i > horizon:
            break
    return dep, b_start[:nb], b_end[:nb], b_size[:nb], b_left[:nb], idle_s[:ni], idle_e[:ni], status


@numba.njit(cache=True)
def _occupancy(arr, dep, warm, horizon, bins, zs):
    """Integrate the number in system over [arr[warm], arr[horizon]].

    Returns (time per level, int L dt, int L(L-1) dt, int z^L dt per z, window).
    dep must be nondecreasing over the customers that matter (FIFO).
    """
    t0 = arr[warm]
    t1 = arr[horizon]
    hist = np.zeros(bins)
    pg = np.zeros(zs.shape[0])
    a = warm + 1
    d = 0
    while dep[d] <= t0:
        d += 1
    L = a - d
    t = t0
    s1 = 0.0
    s2 = 0.0
    while True:
        ta = arr[a] if a <= horizon else np.inf
        td = dep[d]
        tn = min(ta, td, t1)
        dt = tn - t
        hist[min(L, bins - 1)] += dt
        s1 += L * dt
        s2 += L * (L - 1.0) * dt
        for q in range(zs.shape[0]):
            pg[q] += zs[q] ** L * dt
        t = tn
        if tn >= t1:
            break
        if td <= ta:
            d += 1
            L -= 1
        else:
            a += 1
            L += 1
    return hist, s1, s2, pg, t1 - t0


@numba.njit(cache=True)
def _seen_by_arrivals(arr, dep, warm, horizon, bins):
    hist = np.zeros(bins)
    d = 0
    for k in range(warm, horizon):
        while dep[d] <= arr[k]:
            d += 1
        hist[min(k - d, bins - 1)] += 1.0
    return hist


@numba.njit(cache=True)
def _clipped_total(s, e, t0, t1):
    tot = 0.0
    for q in range(s.shape[0]):
        a = max(s[q], t0)
        b = min(e[q], t1)
        if b > a:
            tot += b - a
    return tot


# ---------------------------------------------------------------- statistics


@dataclass
class Estimate:
    """Mean over replications with a 95% Student-t half-width."""

    mean: np.ndarray | float
    variance: np.ndarray | float
    half_width: np.ndarray | float
    replications: int

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float)
        R = x.shape[0]
        mean = x.mean(axis=0)
        var = x.var(axis=0, ddof=1)
        hw = stats.t.ppf(0.975, R - 1) * np.sqrt(var / R)
        if np.ndim(mean) == 0:
            return cls(float(mean), float(var), float(hw), R)
        return cls(mean, var, hw, R)

    def to_dict(self) -> dict:
        tolist = lambda v: v.tolist() if isinstance(v, np.ndarray) else v
        return {"mean": tolist(self.mean), "half_width": tolist(self.half_width), "variance": tolist(self.variance)}


@dataclass
class SimStats:
    config: SimConfig
    estimates: dict[str, Estimate]
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, key) -> Estimate:
        return self.estimates[key]

    def __contains__(self, key) -> bool:
        return key in self.estimates

    def to_dict(self) -> dict:
        return {
            "kind": self.config.kind.value,
            "replications": self.config.replications,
            "horizon": self.config.horizon,
            "warmup": self.config.warmup,
            "seed": self.config.seed,
            "observables": {k: v.to_dict() for k, v in self.estimates.items()},
            "diagnostics": self.diagnostics,
        }


def _normalized(hist):
    tot = hist.sum()
    return hist / tot if tot > 0 else hist


def _draw_inputs(cfg: SimConfig, rng: np.random.Generator, extra: int, vac_pool: int):
    m = cfg.params
    N = cfg.horizon + extra
    arr = np.cumsum(rng.exponential(1.0 / m.lam, N))
    svc = np.asarray(m.service.sample(rng, N), dtype=float)
    vac = np.asarray(m.vacation.sample(rng, vac_pool), dtype=float)
    return arr, svc, vac


def _vacation_pool(cfg: SimConfig, N: int) -> int:
    m = cfg.params
    if cfg.kind.code == MULTIPLE:
        # empty vacations repeat while the system is empty
        return 2 * N + int(4 * N / (m.lam * m.vacation.mean)) + 1000
    return 2 * N + 1000


def _replication(cfg: SimConfig, rep: int) -> dict:
    m = cfg.params
    mode = cfg.kind.code
    extra = max(10_000, cfg.horizon // 5)
    pool = _vacation_pool(cfg, cfg.horizon + extra)
    for _ in range(6):
        rng = replication_rng(cfg.seed, rep)
        arr, svc, vac = _draw_inputs(cfg, rng, extra, pool)
        if mode == BATCH:
            out = _play_batch(arr, svc, vac, cfg.horizon)
        else:
            out = _play_vacation(arr, svc, vac, mode, cfg.horizon)
        status = out[-1]
        if status == 0:
            break
        # inputs ran short (long gates in heavy traffic); redraw with more room
        if status == 1:
            extra *= 2
        else:
            pool *= 2
    else:
        raise RuntimeError("simulation inputs kept running out; the model is probably unstable")
    return _summarize(cfg, arr, svc, out)


def _summarize(cfg: SimConfig, arr, svc, out) -> dict:
    warm, hz = cfg.warmup, cfg.horizon
    t0, t1 = arr[warm], arr[hz]
    dep = out[0]
    zs = np.asarray(cfg.pgf_points, dtype=float)
    hist, s1, s2, pg, window = _occupancy(arr, dep, warm, hz, HIST_BINS, zs)
    res = {
        "mean_queue": s1 / window,
        "second_factorial_queue": s2 / window,
        "p_empty": hist[0] / window,
        "queue_pmf": hist / window,
        "queue_pgf": pg / window,
        "arrival_seen_pmf": _normalized(_seen_by_arrivals(arr, dep, warm, hz, HIST_BINS)),
    }
    soj = dep[warm:hz] - arr[warm:hz]
    res["mean_sojourn"] = soj.mean()
    res["second_moment_sojourn"] = (soj ** 2).mean()
    res["sojourn_lst"] = np.array([np.exp(-s * soj).mean() for s in cfg.lst_points])
    # arrivals in (t0, t1] are customers warm+1 .. horizon
    res["arrivals_in_window"] = float(hz - warm)
    res["departures_in_window"] = float(np.count_nonzero((dep > t0) & (dep <= t1)))
    backlog = lambda t: np.count_nonzero(arr <= t) - np.count_nonzero(dep <= t)
    res["conservation_error"] = res["arrivals_in_window"] - res["departures_in_window"] - float(backlog(t1) - backlog(t0))
    if cfg.kind.code == BATCH:
        _, b_start, b_end, b_size, b_left, idle_s, idle_e, _ = out
        sel = (b_start >= t0) & (b_start < t1)
        res["batch_size_pmf"] = _normalized(np.bincount(np.minimum(b_size[sel], HIST_BINS - 1), minlength=HIST_BINS).astype(float))
        res["mean_batch_size"] = b_size[sel].mean()
        sel_e = (b_end >= t0) & (b_end < t1)
        res["left_behind_pmf"] = _normalized(np.bincount(np.minimum(b_left[sel_e], HIST_BINS - 1), minlength=HIST_BINS).astype(float))
        res["busy_fraction"] = _clipped_total(b_start, b_end, t0, t1) / window
        z, s, w = cfg.age_point
        S = (b_end - b_start)[sel]
        if abs(s - w) > 1e-12:
            kern = (np.exp(-w * S) - np.exp(-s * S)) / (s - w)
        else:
            kern = S * np.exp(-s * S)
        res["age_residual"] = float((z ** b_size[sel] * kern).sum() / S.sum())
        res["mean_service"] = S.mean()
    else:
        (_, gate_time, v_start, v_end, v_lb, v_le, idle_s, idle_e, c_start, c_end, c_n, c_m, _) = out
        res["gate_violations"] = float(np.count_nonzero(arr[: hz] > gate_time[: hz]))
        sel_e = (v_end >= t0) & (v_end < t1)
        sel_b = (v_start >= t0) & (v_start < t1)
        res["vacation_end_pmf"] = _normalized(np.bincount(np.minimum(v_le[sel_e], HIST_BINS - 1), minlength=HIST_BINS).astype(float))
        res["vacation_start_pmf"] = _normalized(np.bincount(np.minimum(v_lb[sel_b], HIST_BINS - 1), minlength=HIST_BINS).astype(float))
        res["mean_vacation_end"] = v_le[sel_e].mean()
        start = dep[: hz + 1] - svc[: hz + 1]
        res["busy_fraction"] = _clipped_total(start, dep[: hz + 1], t0, t1) / window
        if cfg.kind.code == SINGLE:
            sel_c = (c_start >= t0) & (c_end <= t1)
            res["cycle_length"] = (c_end - c_start)[sel_c].mean()
            res["cycle_customers"] = c_n[sel_c].mean()
            res["cycle_vacations"] = c_m[sel_c].mean()
            res["cycle_vacations_pmf"] = _normalized(np.bincount(np.minimum(c_m[sel_c], CYCLE_BINS - 1), minlength=CYCLE_BINS).astype(float))
    if cfg.kind.code != MULTIPLE:
        idle_s, idle_e = out[-3], out[-2]
        if cfg.kind.code == SINGLE:
            idle_s, idle_e = out[6], out[7]
        res["idle_fraction"] = _clipped_total(idle_s, idle_e, t0, t1) / window
        sel_i = (idle_s >= t0) & (idle_e <= t1)
        res["mean_idle_period"] = (idle_e - idle_s)[sel_i].mean()
    return res


def run(cfg: SimConfig) -> SimStats:
    """Independent replications of ``cfg``; every observable gets a 95% CI."""
    if not cfg.params.is_stable:
        log.warning("simulating an unstable model (rho=%.4g); estimates will drift", cfg.params.rho)
    per_rep = [_replication(cfg, r) for r in range(cfg.replications)]
    keys = per_rep[0].keys()
    est = {k: Estimate.from_samples([rep[k] for rep in per_rep]) for k in keys}
    diag = {
        "max_conservation_error": float(max(abs(rep["conservation_error"]) for rep in per_rep)),
    }
    if "gate_violations" in est:
        diag["gate_violations"] = float(sum(rep["gate_violations"] for rep in per_rep))
    return SimStats(cfg, est, diag)


def run_transient(params: ModelParams, init: InitialState, n_vacations: int, replications: int = 100_000, seed: int = 12345) -> Estimate:
    """Empirical pmf of the number present at the end of the n-th vacation.

    Each path starts at a vacation end holding Q_0 ~ init customers; from a
    vacation end with Q customers the next vacation end holds
    Poisson(lam * (H_1 + ... + H_max(Q,1) + V)) customers, because an empty
    gate means the next arrival is served alone before the vacation.  The
    paths are split into 20 batches to attach a CI to every pmf entry.
    """
    if n_vacations < 1:
        raise ValueError("n_vacations must be >= 1")
    rng = replication_rng(seed, 0)
    p0 = np.asarray(init.pmf)
    Q = rng.choice(len(p0), size=replications, p=p0)
    H, V = params.service, params.vacation
    for _ in range(n_vacations):
        k = np.maximum(Q, 1)
        tot = np.asarray(V.sample(rng, replications), dtype=float)
        svc = np.asarray(H.sample(rng, int(k.sum())), dtype=float)
        owner = np.repeat(np.arange(replications), k)
        tot += np.bincount(owner, weights=svc, minlength=replications)
        Q = rng.poisson(params.lam * tot)
    groups = np.array_split(Q, 20)
    size = int(Q.max()) + 1
    pmfs = [np.bincount(g, minlength=size) / len(g) for g in groups]
    return Estimate.from_samples(pmfs)
