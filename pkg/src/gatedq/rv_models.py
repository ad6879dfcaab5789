"""Parametric service and vacation time distributions.

Every family has a closed-form Laplace-Stieltjes transform (LST) valid on
Re(s) >= 0, closed-form raw moments up to order 6, and a sampler.  Besides
the plain LST each family also exposes the LST of its equilibrium (residual
life) distribution, ``(1 - lst(s)) / (s * mean)``, evaluated without
cancellation near ``s = 0``.  The solvers lean on this to keep the
removable singularities at ``z = 1`` numerically clean.

Distribution literals use the keys shown in :func:`dist_from_dict`, e.g.
``{"family": "erlang", "shape": 2, "rate": 3.0}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import stats

from .errors import ConfigError

MAX_MOMENT = 6

# tolerance for Re(s) < 0 produced by rounding (e.g. z on the unit circle)
_DOMAIN_SLACK = 1e-12

FAMILY_CODES = {
    "deterministic": 0,
    "exponential": 1,
    "erlang": 2,
    "hyperexponential": 3,
    "uniform": 4,
}


def _arg(s):
    a = np.asarray(s)
    if not np.iscomplexobj(a):
        a = a.astype(float)
    re = a.real
    if np.any(re < -_DOMAIN_SLACK * (1.0 + np.abs(a))):
        raise ValueError("LST argument must satisfy Re(s) >= 0")
    return a


def _ret(value, like):
    if np.ndim(like) == 0:
        return np.asarray(value).item()
    return value


def _phi1(x):
    """(e^x - 1) / x with the removable point at 0."""
    x = np.asarray(x)
    out = np.ones_like(x, dtype=np.result_type(x, float))
    nz = x != 0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


def _phi2(x):
    """(e^x - 1 - x) / x**2, series near 0."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, float))
    small = np.abs(x) < 0.1
    xs = x[small]
    term = np.full_like(xs, 0.5)
    acc = term.copy()
    for k in range(3, 16):
        term = term * xs / k
        acc = acc + term
    out[small] = acc
    xb = x[~small]
    out[~small] = (np.expm1(xb) - xb) / (xb * xb)
    return out


@dataclass(frozen=True)
class DistSpec:
    """Base class; use one of the concrete families below."""

    family: ClassVar[str] = ""

    def lst(self, s):
        a = _arg(s)
        return _ret(self._lst(a), s)

    def excess_lst(self, s):
        """LST of the equilibrium distribution, (1 - lst(s)) / (s E[X])."""
        a = _arg(s)
        return _ret(self._excess(a), s)

    def one_minus_lst(self, s):
        """1 - lst(s), accurate for small |s|."""
        a = _arg(s)
        return _ret(a * self.mean * self._excess(a), s)

    @property
    def mean(self) -> float:
        return self.raw_moment(1)

    @property
    def variance(self) -> float:
        return self.raw_moment(2) - self.mean ** 2

    def raw_moment(self, n: int) -> float:
        if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_MOMENT:
            raise ValueError(f"raw moments are supported for orders 1..{MAX_MOMENT}, got {n}")
        return float(self._moment(int(n)))

    def sample(self, rng: np.random.Generator, size=None):
        return self._sample(rng, size)

    def count_pmf(self, theta: float, n_max: int) -> np.ndarray:
        """P(N = n), n = 0..n_max, for N ~ Poisson(theta * X)."""
        if theta <= 0:
            raise ValueError("theta must be positive")
        return self._count_pmf(float(theta), np.arange(n_max + 1))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Deterministic(DistSpec):
    d: float
    family: ClassVar[str] = "deterministic"

    def __post_init__(self):
        if not self.d > 0 or not math.isfinite(self.d):
            raise ConfigError(f"deterministic value must be positive, got {self.d}")

    def _lst(self, s):
        return np.exp(-s * self.d)

    def _excess(self, s):
        return _phi1(-s * self.d)

    def _moment(self, n):
        return self.d ** n

    def _sample(self, rng, size):
        if size is None:
            return self.d
        return np.full(size, self.d)

    def _count_pmf(self, theta, n):
        return stats.poisson.pmf(n, theta * self.d)

    def to_dict(self):
        return {"family": self.family, "d": self.d}


@dataclass(frozen=True)
class Exponential(DistSpec):
    rate: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ConfigError(f"exponential rate must be positive, got {self.rate}")

    def _lst(self, s):
        return self.rate / (self.rate + s)

    def _excess(self, s):
        return self.rate / (self.rate + s)

    def _moment(self, n):
        return math.factorial(n) / self.rate ** n

    def _sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def _count_pmf(self, theta, n):
        p = self.rate / (self.rate + theta)
        return p * (1.0 - p) ** n

    def to_dict(self):
        return {"family": self.family, "rate": self.rate}


@dataclass(frozen=True)
class Erlang(DistSpec):
    shape: int
    rate: float
    family: ClassVar[str] = "erlang"

    def __post_init__(self):
        if int(self.shape) != self.shape or self.shape < 1:
            raise ConfigError(f"Erlang shape must be a positive integer, got {self.shape}")
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ConfigError(f"Erlang rate must be positive, got {self.rate}")
        object.__setattr__(self, "shape", int(self.shape))

    def _lst(self, s):
        return (self.rate / (self.rate + s)) ** self.shape

    def _excess(self, s):
        # (1 - q^k) / (s k / r) = (r / (r + s)) * (1 + q + ... + q^(k-1)) / k
        q = self.rate / (self.rate + s)
        acc = np.zeros_like(q)
        term = np.ones_like(q)
        for _ in range(self.shape):
            acc = acc + term
            term = term * q
        return q * acc / self.shape

    def _moment(self, n):
        return math.prod(range(self.shape, self.shape + n)) / self.rate ** n

    def _sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def _count_pmf(self, theta, n):
        return stats.nbinom.pmf(n, self.shape, self.rate / (self.rate + theta))

    def to_dict(self):
        return {"family": self.family, "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class HyperExponential(DistSpec):
    weights: tuple[float, ...]
    rates: tuple[float, ...]
    family: ClassVar[str] = "hyperexponential"

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        r = tuple(float(x) for x in self.rates)
        if len(w) == 0 or len(w) != len(r):
            raise ConfigError("hyperexponential needs equally long, nonempty weights and rates")
        if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ConfigError(f"hyperexponential weights must be a probability vector, got {w}")
        if any(not x > 0 or not math.isfinite(x) for x in r):
            raise ConfigError(f"hyperexponential rates must be positive, got {r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)

    def _lst(self, s):
        return sum(w * r / (r + s) for w, r in zip(self.weights, self.rates))

    def _excess(self, s):
        return sum(w / (r + s) for w, r in zip(self.weights, self.rates)) / self.mean

    def _moment(self, n):
        return sum(w * math.factorial(n) / r ** n for w, r in zip(self.weights, self.rates))

    def _sample(self, rng, size):
        rates = np.asarray(self.rates)
        if size is None:
            i = rng.choice(len(rates), p=self.weights)
            return rng.exponential(1.0 / rates[i])
        idx = rng.choice(len(rates), size=size, p=self.weights)
        return rng.exponential(1.0, size) / rates[idx]

    def _count_pmf(self, theta, n):
        out = np.zeros(n.shape)
        for w, r in zip(self.weights, self.rates):
            p = r / (r + theta)
            out += w * p * (1.0 - p) ** n
        return out

    def to_dict(self):
        return {"family": self.family, "weights": list(self.weights), "rates": list(self.rates)}


@dataclass(frozen=True)
class UniformInterval(DistSpec):
    a: float
    b: float
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not (0 <= self.a < self.b) or not math.isfinite(self.b):
            raise ConfigError(f"uniform interval needs 0 <= a < b, got a={self.a}, b={self.b}")

    def _lst(self, s):
        w = self.b - self.a
        return np.exp(-s * self.a) * _phi1(-s * w)

    def _excess(self, s):
        # (1 - h(s)) / s = a*phi1(-s a) + e^{-s a} * w * phi2(-s w)
        w = self.b - self.a
        num = self.a * _phi1(-s * self.a) + np.exp(-s * self.a) * w * _phi2(-s * w)
        return num / self.mean

    def _moment(self, n):
        return (self.b ** (n + 1) - self.a ** (n + 1)) / ((n + 1) * (self.b - self.a))

    def _sample(self, rng, size):
        return rng.uniform(self.a, self.b, size)

    def _count_pmf(self, theta, n):
        # integral of the Poisson(theta x) pmf over x ~ U(a, b)
        hi = stats.poisson.sf(n, theta * self.b)
        lo = stats.poisson.sf(n, theta * self.a) if self.a > 0 else np.zeros(n.shape)
        return (hi - lo) / (theta * (self.b - self.a))

    def to_dict(self):
        return {"family": self.family, "a": self.a, "b": self.b}


_FAMILIES = {
    "deterministic": (Deterministic, ("d",)),
    "exponential": (Exponential, ("rate",)),
    "erlang": (Erlang, ("shape", "rate")),
    "hyperexponential": (HyperExponential, ("weights", "rates")),
    "uniform": (UniformInterval, ("a", "b")),
}


def dist_from_dict(spec: dict) -> DistSpec:
    """Build a distribution from a config literal.

    >>> dist_from_dict({"family": "erlang", "shape": 2, "rate": 3.0})
    Erlang(shape=2, rate=3.0)
    """
    try:
        family = spec["family"]
    except (KeyError, TypeError):
        raise ConfigError(f"distribution literal needs a 'family' key: {spec!r}") from None
    if family not in _FAMILIES:
        raise ConfigError(f"unknown distribution family {family!r}; known: {sorted(_FAMILIES)}")
    cls, fields = _FAMILIES[family]
    extra = set(spec) - set(fields) - {"family"}
    missing = set(fields) - set(spec)
    if extra or missing:
        raise ConfigError(
            f"{family} literal expects keys {fields}; missing {sorted(missing)}, unknown {sorted(extra)}"
        )
    args = [tuple(spec[f]) if isinstance(spec[f], list) else spec[f] for f in fields]
    return cls(*args)


def lst(d: DistSpec, s):
    """E[exp(-s X)] for Re(s) >= 0."""
    return d.lst(s)


def pgf_count(d: DistSpec, lam: float, z):
    """PGF of the number of Poisson(lam) arrivals during X: lst(d, lam - lam z)."""
    if not lam > 0:
        raise ValueError("arrival rate must be positive")
    z = np.asarray(z) if np.ndim(z) else z
    return d.lst(lam - lam * z)


def raw_moment(d: DistSpec, n: int) -> float:
    return d.raw_moment(n)


def sample(d: DistSpec, rng: np.random.Generator, size=None):
    return d.sample(rng, size)
