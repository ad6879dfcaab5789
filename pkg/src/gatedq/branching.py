"""Branching-process transforms of the gated single-vacation queue.

The generation PGFs are iterated in complement form: with
``u_n = 1 - psi_n^H(z)`` and ``u_0 = 1 - z``,

    psi_n^V(z) = v*(lam u_{n-1}),    u_n = 1 - h*(lam u_{n-1}),

so quantities that go to zero (1 - psi, tail terms) never suffer from
cancellation.  All transforms accept scalars or numpy arrays of complex
``z`` with ``|z| <= 1``.

Truncation always uses the stopping index ``n*`` found on the real axis at
``z = 0``.  Since ``1 - psi_n^H(z) = E[(1 - z^{Z_n}) 1{Z_n > 0}]`` for the
generation size ``Z_n``, ``|1 - psi_n^H(z)| <= 2 (1 - psi_n^H(0))``, so the
index found at 0 is valid on the whole closed disk.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonConvergence, UnstableModel
from .rv_models import DistSpec


@dataclass(frozen=True)
class ModelParams:
    """Arrival rate ``lam``, service distribution H and vacation distribution V.

    Stability (rho < 1) is checked by the solvers through
    :meth:`require_stable`, not at construction, so the simulator can still
    be pointed at an overloaded model.
    """

    lam: float
    service: DistSpec
    vacation: DistSpec

    def __post_init__(self):
        if not self.lam > 0 or not math.isfinite(self.lam):
            raise ConfigError(f"arrival rate must be positive, got {self.lam}")

    @property
    def rho(self) -> float:
        return self.lam * self.service.mean

    @property
    def is_stable(self) -> bool:
        return self.rho < 1 and math.isfinite(self.vacation.mean)

    def require_stable(self) -> "ModelParams":
        if not self.is_stable:
            raise UnstableModel(self.rho, self.vacation.mean)
        return self

    def a_H(self, z):
        """PGF of the number of arrivals during one service time."""
        return self.service.lst(self.lam * (1 - np.asarray(z)))

    def a_V(self, z):
        """PGF of the number of arrivals during one vacation."""
        return self.vacation.lst(self.lam * (1 - np.asarray(z)))


@dataclass(frozen=True)
class TruncationPolicy:
    eps: float = 1e-14
    max_n: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.eps <= 1e-8:
            raise ConfigError(f"truncation eps must lie in (0, 1e-8], got {self.eps}")
        if self.max_n < 16:
            raise ConfigError(f"max_n must be at least 16, got {self.max_n}")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class InitialState:
    """Distribution of the number of customers Q_0 at the initial vacation end."""

    pmf: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.pmf)
        if not p or any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-12:
            raise ConfigError(f"initial pmf must be a nonnegative vector summing to 1, got {p}")
        object.__setattr__(self, "pmf", p)

    @classmethod
    def point(cls, k: int) -> "InitialState":
        pmf = [0.0] * (k + 1)
        pmf[k] = 1.0
        return cls(tuple(pmf))

    def pgf(self, x):
        # Horner in the power basis
        acc = np.zeros_like(np.asarray(x), dtype=np.result_type(np.asarray(x), float))
        for c in reversed(self.pmf):
            acc = acc * x + c
        return acc if np.ndim(x) else acc.item()


@dataclass(frozen=True)
class BranchingTables:
    """Real-axis sequences at z = 0 that fix the truncation of every series."""

    n_star: int
    u_H: np.ndarray = field(repr=False)  # 1 - psi_n^H(0), n = 1..n*
    psi_V: np.ndarray = field(repr=False)  # psi_n^V(0)
    prod_V: np.ndarray = field(repr=False)  # Psi_n^V = prod_{k<=n} psi_k^V(0)
    ell_E0: float
    tail_estimate: float
    generation_sum: float  # sum_n (1 - psi_n^H(0))


def _iterate(m: ModelParams, s1, n: int):
    """Yield (psi_k^V, u_k) for k = 1..n starting from LST argument ``s1``.

    For the PGFs at z the start is s1 = lam (1 - z); for the delay
    transforms it is the Laplace variable itself.
    """
    s = s1
    lam, H, V = m.lam, m.service, m.vacation
    for _ in range(n):
        pv = V.lst(s)
        u = H.one_minus_lst(s)
        yield pv, u
        s = lam * u


@functools.lru_cache(maxsize=256)
def branching_tables(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> BranchingTables:
    m.require_stable()
    u_list, pv_list, prod_list = [], [], []
    prod = 1.0
    n_star = None
    for n, (pv, u) in enumerate(_iterate(m, m.lam, t.max_n), start=1):
        prod *= pv
        u_list.append(u)
        pv_list.append(pv)
        prod_list.append(prod)
        if u < t.eps and (1.0 - pv) < t.eps:
            n_star = n
            break
    if n_star is None:
        raise NonConvergence(
            f"1 - psi_n(0) did not fall below eps={t.eps:g} within max_n={t.max_n} generations"
        )
    u_H = np.array(u_list)
    prod_V = np.array(prod_list)
    denom = 1.0 + float(u_H @ prod_V)
    ell0 = prod_V[-1] / denom
    rho = m.rho
    return BranchingTables(
        n_star=n_star,
        u_H=u_H,
        psi_V=np.array(pv_list),
        prod_V=prod_V,
        ell_E0=ell0,
        tail_estimate=u_H[-1] * rho / (1.0 - rho),
        generation_sum=float(u_H.sum()),
    )


def psi_H(m: ModelParams, n: int, z):
    """n-th generation PGF of the Galton-Watson process with offspring a_H."""
    if n < 1:
        raise ValueError("generation index must be >= 1")
    x = z
    for _ in range(n):
        x = m.a_H(x)
    return x


def psi_V(m: ModelParams, n: int, z):
    """psi_1^V = a_V(z), psi_n^V = a_V(psi_{n-1}^H(z))."""
    if n < 1:
        raise ValueError("generation index must be >= 1")
    x = z if n == 1 else psi_H(m, n - 1, z)
    return m.a_V(x)


def ell_E_zero(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY) -> float:
    """Probability that a vacation ends with an empty system."""
    return branching_tables(m, t).ell_E0


def _sums(m: ModelParams, s1, n: int):
    """(prod_{k<=n} psi_k^V, sum_{j<=n} (1 - psi_j^H) prod_{k<=j} psi_k^V)."""
    prod = np.ones_like(s1, dtype=np.result_type(s1, float))
    acc = np.zeros_like(prod)
    for pv, u in _iterate(m, s1, n):
        prod = prod * pv
        acc = acc + u * prod
    return prod, acc


def _s_of_z(m: ModelParams, z):
    return m.lam * (1 - np.asarray(z))


def ell_E(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=0.0):
    """PGF of the number of customers at a vacation end (stationary)."""
    tab = branching_tables(m, t)
    prod, acc = _sums(m, _s_of_z(m, z), tab.n_star)
    out = prod - tab.ell_E0 * acc
    return out.item() if np.ndim(z) == 0 else out


def one_minus_ell_E(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=0.0, *, gap=None):
    """1 - ell_E(z) without cancellation near z = 1 (same truncation as ell_E).

    Pass ``gap = 1 - z`` instead of ``z`` when it is known more accurately
    than z itself.
    """
    tab = branching_tables(m, t)
    if gap is None:
        gap = 1 - np.asarray(z)
    else:
        z = gap
    s = m.lam * np.asarray(gap)
    prod = np.ones_like(s, dtype=np.result_type(s, float))
    comp = np.zeros_like(prod)  # 1 - prod
    acc = np.zeros_like(prod)
    lam, H, V = m.lam, m.service, m.vacation
    for _ in range(tab.n_star):
        comp = comp + prod * V.one_minus_lst(s)
        u = H.one_minus_lst(s)
        prod = prod * V.lst(s)
        acc = acc + u * prod
        s = lam * u
    out = comp + tab.ell_E0 * acc
    return out.item() if np.ndim(z) == 0 else out


def ell_B(m: ModelParams, t: TruncationPolicy = DEFAULT_POLICY, z=0.0):
    """PGF of the number of customers at a vacation start: ell_E / a_V."""
    return ell_E(m, t, z) / m.a_V(z)


def delay_ell_E(m: ModelParams, t: TruncationPolicy, s):
    """ell_E evaluated through the Laplace variable: ell_E(1 - s/lam).

    Defined for every real s >= 0 (also where |1 - s/lam| > 1); the
    recursion starts from h*(s) instead of a_H(z).
    """
    tab = branching_tables(m, t)
    s = np.asarray(s, dtype=float)
    prod, acc = _sums(m, s, tab.n_star + 1)
    out = prod - tab.ell_E0 * acc
    return out.item() if out.ndim == 0 else out


def q_zero_sequence(m: ModelParams, init: InitialState, n: int) -> np.ndarray:
    """q_k(0) = P(Q_k = 0) for k = 0..n.

    Evaluates the transient formula at z = 0 once per k against cached
    generation tables (O(n) psi evaluations, O(n^2) scalar work).
    """
    psiH = np.empty(n + 1)
    u = np.empty(n + 1)
    prod = np.empty(n + 1)
    p = 1.0
    psiH[0], u[0], prod[0] = 0.0, 1.0, 1.0
    for k, (pv, uk) in enumerate(_iterate(m, m.lam, n), start=1):
        p *= pv
        u[k], psiH[k], prod[k] = uk, 1.0 - uk, p
    q0 = np.empty(n + 1)
    q0[0] = init.pmf[0]
    w = u * prod
    for k in range(1, n + 1):
        q0[k] = init.pgf(psiH[k]) * prod[k] - float(q0[k - 1 :: -1][:k] @ w[1 : k + 1])
    return q0


def q_n_transient(m: ModelParams, init: InitialState, n: int, z):
    """PGF of Q_n, the number of customers at the end of the n-th vacation."""
    if n < 1:
        raise ValueError("n must be >= 1")
    q0 = q_zero_sequence(m, init, n - 1) if n > 1 else np.array([init.pmf[0]])
    z_arr = np.asarray(z)
    prod = np.ones_like(z_arr, dtype=np.result_type(z_arr, float))
    acc = np.zeros_like(prod)
    psi = z_arr
    for j, (pv, u) in enumerate(_iterate(m, _s_of_z(m, z_arr), n), start=1):
        prod = prod * pv
        acc = acc + q0[n - j] * u * prod
        psi = 1.0 - u
    out = init.pgf(psi) * prod - acc
    return out.item() if np.ndim(z) == 0 else out
