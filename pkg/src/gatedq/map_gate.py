"""Gated vacations under Markovian arrivals: where the scalar method breaks.

For a MAP (C, D) the vacation-end recursion involves matrix PGFs
A*(z) = int exp((C + zD) x) dH(x) and V*(z).  The branching argument
needs that recursion to survive substituting A*(z) for z; this module
evaluates both sides of that substituted identity and shows the gap
closes exactly when C and D commute, i.e. when the MAP is Poisson.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonConvergence
from .rv_models import DistSpec, Erlang, Exponential, HyperExponential

COMMUTE_TOL = 1e-12
POISSON_TOL = 1e-10
TAIL_MASS = 1e-12
MAX_DIM = 4


@dataclass(frozen=True)
class MapRep:
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        D = np.array(self.D, dtype=float)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        n = C.shape[0]
        if C.shape != (n, n) or D.shape != (n, n):
            raise ConfigError("C and D must be square matrices of the same size")
        if n > MAX_DIM:
            raise ConfigError(f"phase dimension is limited to {MAX_DIM}")
        off = C - np.diag(np.diag(C))
        if (off < 0).any() or (D < 0).any() or not D.any():
            raise ConfigError("C needs nonnegative off-diagonal entries and D must be nonnegative and nonzero")
        if np.abs((C + D).sum(axis=1)).max() > 1e-10:
            raise ConfigError("C + D must have zero row sums")
        try:
            P = np.linalg.solve(-C, D)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("C must be nonsingular") from exc
        # irreducibility of the phase-at-arrival chain
        reach = (P > 1e-15).astype(float) + np.eye(n)
        if (np.linalg.matrix_power(reach, n) <= 0).any():
            raise ConfigError("(-C)^-1 D must be irreducible")

    @property
    def dim(self) -> int:
        return self.C.shape[0]

    @property
    def uniformization_rate(self) -> float:
        return float(np.max(-np.diag(self.C)))

    def stationary_phase(self) -> np.ndarray:
        """pi with pi (C + D) = 0, pi e = 1."""
        n = self.dim
        A = np.vstack([(self.C + self.D).T, np.ones(n)])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        return np.linalg.lstsq(A, b, rcond=None)[0]

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "D": self.D.tolist()}


def poisson_rep(lam: float) -> MapRep:
    return MapRep(np.array([[-lam]]), np.array([[lam]]))


def commutative_example(lam: float = 0.5, a: float = 1.0) -> MapRep:
    """2 phases switching at rate a, arrivals at rate lam in both."""
    C = -(lam + a) * np.eye(2) + a * (np.ones((2, 2)) - np.eye(2))
    return MapRep(C, lam * np.eye(2))


def mmpp_example(rates=(1.0, 5.0), switch=(1.0, 1.0)) -> MapRep:
    """Two-state Markov-modulated Poisson process."""
    Q = np.array([[-switch[0], switch[0]], [switch[1], -switch[1]]])
    D = np.diag(rates)
    return MapRep(Q - D, D)


def _left_series(coefs: np.ndarray, X: np.ndarray) -> np.ndarray:
    """sum_k coefs[k] X^k with matrix coefficients on the left."""
    acc = coefs[-1].copy()
    for c in coefs[-2::-1]:
        acc = acc @ X + c
    return acc


def _uniformized(rep: MapRep, d: DistSpec, z) -> np.ndarray:
    theta = rep.uniformization_rate
    n_max = _count_horizon(d, theta)
    w = d.count_pmf(theta, n_max)
    K = np.eye(rep.dim) + (rep.C + z * rep.D) / theta
    return _left_series(w[:, None, None] * np.eye(rep.dim), K)


def matrix_pgf(rep: MapRep, d: DistSpec, z) -> np.ndarray:
    """int exp((C + zD) x) dF(x) for the distribution ``d``."""
    if not 0 <= z <= 1:
        raise ValueError("z must lie in [0, 1]")
    G = rep.C + z * rep.D
    I = np.eye(rep.dim)
    if isinstance(d, Exponential):
        return d.rate * np.linalg.inv(d.rate * I - G)
    if isinstance(d, Erlang):
        R = d.rate * np.linalg.inv(d.rate * I - G)
        return np.linalg.matrix_power(R, d.shape)
    if isinstance(d, HyperExponential):
        return sum(w * r * np.linalg.inv(r * I - G) for w, r in zip(d.weights, d.rates))
    return _uniformized(rep, d, z)


def _count_horizon(d: DistSpec, theta: float, tail: float = TAIL_MASS, cap: int = 1 << 16) -> int:
    n = 64
    while True:
        w = d.count_pmf(theta, n)
        if 1.0 - w.sum() < tail:
            return n
        if n >= cap:
            raise NonConvergence(f"uniformization needs more than {cap} terms for tail mass {tail:g}")
        n *= 2


def count_coefficients(rep: MapRep, d: DistSpec, tail: float = TAIL_MASS) -> np.ndarray:
    """A(k), k = 0..K: phase-to-phase probabilities of k arrivals during one draw of ``d``.

    Uniformization with counting: the kernel I + C/theta moves without an
    arrival and D/theta with one, so the n-step words sort by arrival count.
    """
    theta = rep.uniformization_rate
    n_max = _count_horizon(d, theta, tail)
    w = d.count_pmf(theta, n_max)
    P0 = np.eye(rep.dim) + rep.C / theta
    P1 = rep.D / theta
    words = np.zeros((n_max + 1, rep.dim, rep.dim))
    words[0] = np.eye(rep.dim)
    out = w[0] * words.copy()
    for n in range(1, n_max + 1):
        nxt = words @ P0
        nxt[1:] += words[:-1] @ P1
        words = nxt
        out += w[n] * words
    # drop trailing coefficients that carry no mass
    tail_mass = np.cumsum(out.sum(axis=(1, 2))[::-1])
    drop = int(np.argmax(tail_mass > tail * 1e-3))
    return out[: len(out) - drop]


def is_commutative(rep: MapRep) -> tuple[bool, float]:
    resid = float(np.abs(rep.C @ rep.D - rep.D @ rep.C).max())
    return resid < COMMUTE_TOL, resid


def poisson_reduction_check(rep: MapRep) -> float:
    """Rate lam with De = lam e; must exist for every commutative representation."""
    ok, resid = is_commutative(rep)
    if not ok:
        raise ValueError(f"representation does not commute (residual {resid:.3g})")
    rates = rep.D.sum(axis=1)
    lam = float(rates.mean())
    dev = float(np.abs(rates - lam).max())
    if dev >= POISSON_TOL:
        raise AssertionError(f"commuting C, D but De is not constant (deviation {dev:.3g})")
    return lam


def initial_vector(rep: MapRep, q0: int = 2, phase=None) -> np.ndarray:
    """q_0(k) rows: q0 customers, phase drawn from ``phase`` (stationary by default)."""
    phase = rep.stationary_phase() if phase is None else np.asarray(phase, dtype=float)
    out = np.zeros((q0 + 1, rep.dim))
    out[q0] = phase
    return out


def _row_series(q: np.ndarray, X: np.ndarray) -> np.ndarray:
    """sum_k q(k) X^k for row-vector coefficients q(k)."""
    acc = q[-1].copy()
    for c in q[-2::-1]:
        acc = acc @ X + c
    return acc


def _poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficients of (sum a_k z^k)(sum b_k z^k); a is (La, r, n), b is (Lb, n, n)."""
    out = np.zeros((len(a) + len(b) - 1, a.shape[1], b.shape[2]))
    for i, ai in enumerate(a):
        out[i : i + len(b)] += ai @ b
    return out


def next_vacation_coefficients(q0: np.ndarray, Ak: np.ndarray, Vk: np.ndarray) -> np.ndarray:
    """Coefficient rows q_1(k) of q_0*(A*(z)) V*(z) - q_0(0) [I - A*(z)] V*(z)."""
    n = Ak.shape[1]
    # q_0*(A*(z)) = sum_j q_0(j) A*(z)^j, by Horner on power series
    f = q0[-1][None, None, :]
    for row in q0[-2::-1]:
        f = _poly_mul(f, Ak)
        f[0, 0] += row
    first = _poly_mul(f, Vk)[:, 0, :]
    gate0 = q0[0][None, None, :]
    minus = _poly_mul(gate0, Vk)[:, 0, :]
    plus = _poly_mul(_poly_mul(gate0, Ak), Vk)[:, 0, :]
    out = np.zeros((max(len(first), len(plus)), n))
    out[: len(first)] += first
    out[: len(minus)] -= minus
    out[: len(plus)] += plus
    return out


def interchange_sides(rep: MapRep, H: DistSpec, V: DistSpec, q0: np.ndarray, z: float):
    """(left, right) of the recursion after substituting A*(z) for z, for n = 1."""
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    Ak = count_coefficients(rep, H)
    Vk = count_coefficients(rep, V)
    q1 = next_vacation_coefficients(q0, Ak, Vk)
    X = matrix_pgf(rep, H, z)
    left = _row_series(q1, X)
    AX = _left_series(Ak, X)
    VX = _left_series(Vk, X)
    I = np.eye(rep.dim)
    right = _row_series(q0, AX) @ VX - q0[0] @ (I - AX) @ VX
    return left, right


def interchange_residual(rep: MapRep, H: DistSpec, V: DistSpec, q0=None, z_grid=(0.0, 0.25, 0.5, 0.75, 1.0)) -> float:
    """max over the grid of |left - right| entrywise."""
    q0 = initial_vector(rep) if q0 is None else q0
    worst = 0.0
    for z in z_grid:
        left, right = interchange_sides(rep, H, V, q0, z)
        worst = max(worst, float(np.abs(left - right).max()))
    return worst


def random_commutative(rng: np.random.Generator, dim: int | None = None) -> MapRep:
    """Random valid (C, D) with CD = DC, built from polynomials in one stochastic matrix.

    C = p(P) - c I and D = q(P), with p, q having nonnegative coefficients
    and c = p(1) + q(1) so that C + D has zero row sums.
    """
    dim = dim or int(rng.integers(1, MAX_DIM + 1))
    P = rng.random((dim, dim)) + 1e-3
    P /= P.sum(axis=1, keepdims=True)
    powers = [np.eye(dim)]
    for _ in range(3):
        powers.append(powers[-1] @ P)
    p = rng.random(4) * rng.integers(0, 2, 4)
    q = rng.random(4) * rng.exponential(1.0)
    q[1] += 1e-3  # keeps D irreducible
    pC = sum(c * M for c, M in zip(p, powers))
    D = sum(c * M for c, M in zip(q, powers))
    c = p.sum() + q.sum()
    C = pC - c * np.eye(dim)
    C = C - np.diag((C + D).sum(axis=1))  # absorb rounding into the diagonal
    return MapRep(C, D)


def mapcheck_report(H: DistSpec, V: DistSpec, z_grid=(0.0, 0.25, 0.5, 0.75, 1.0), reps: dict | None = None) -> list[dict]:
    """Residual table for the bundled examples (or ``reps``)."""
    reps = reps or {
        "poisson": poisson_rep(0.5),
        "commutative_2x2": commutative_example(),
        "mmpp_1_5": mmpp_example(),
    }
    rows = []
    for name, rep in reps.items():
        comm, cres = is_commutative(rep)
        resid = interchange_residual(rep, H, V, z_grid=z_grid)
        rows.append(
            {
                "example": name,
                "commutative": comm,
                "commutator_norm": cres,
                "poisson_rate": poisson_reduction_check(rep) if comm else None,
                "interchange_residual": resid,
                "identity_holds": resid < 1e-8,
            }
        )
    return rows
