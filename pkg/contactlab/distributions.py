"""Degree and offspring distribution families.

Tails are exact: ``tail(m) = P(d >= m)``. Samplers invert the tail on a
uniform draw in (0, 1].
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .errors import InvalidParameterError

SUMMATION_RTOL = 1e-12
TAIL_FLOOR = 3  # smallest degree of the heavy-tailed families


def _uniform_open_left(rng, size):
    # 1 - U[0,1) lies in (0, 1]
    return 1.0 - rng.random(size)


class DegreeDistribution:
    """Base class of the parametric families; subclasses define tail and sample."""

    family = ""
    support_min = 0

    def tail(self, m):
        raise NotImplementedError

    def pmf(self, m):
        m = np.asarray(m)
        return self.tail(m) - self.tail(m + 1)

    def sample(self, rng, size=None):
        raise NotImplementedError

    def mean(self):
        return self._summed_moments()[0]

    def factorial_moment2(self):
        """E[d(d-1)]."""
        return self._summed_moments()[1]

    def spec(self):
        raise NotImplementedError

    def __str__(self):
        return self.spec()

    def _summed_moments(self):
        # E d = sum_{m>=1} P(d>=m), E d(d-1) = sum_{m>=1} 2(m-1) P(d>=m)
        first = second = 0.0
        start, block = 1, 1024
        while True:
            m = np.arange(start, start + block, dtype=np.float64)
            t = self.tail(m)
            first += float(t.sum())
            second += float((2.0 * (m - 1.0) * t).sum())
            last = 2.0 * (m[-1] - 1.0) * t[-1] + t[-1]
            if last <= SUMMATION_RTOL * max(first, second, 1e-300):
                return first, second
            start += block
            block *= 2


OffspringDistribution = DegreeDistribution


@dataclass(frozen=True)
class Deterministic(DegreeDistribution):
    d: int

    family = "det"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 0:
            raise InvalidParameterError(f"Deterministic degree must be a non-negative integer, got {self.d}")

    @property
    def support_min(self):
        return int(self.d)

    def tail(self, m):
        return np.where(np.asarray(m) <= self.d, 1.0, 0.0)

    def sample(self, rng, size=None):
        if size is None:
            return int(self.d)
        return np.full(size, int(self.d), dtype=np.int64)

    def mean(self):
        return float(self.d)

    def factorial_moment2(self):
        return float(self.d * (self.d - 1))

    def spec(self):
        return f"det:d={int(self.d)}"


@dataclass(frozen=True)
class Geometric(DegreeDistribution):
    """Mass (1-p)^(k-1) p on {1, 2, ...}."""

    p: float

    family = "geom"
    support_min = 1

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidParameterError(f"Geometric p must lie in (0, 1), got {self.p}")

    def tail(self, m):
        m = np.asarray(m, dtype=np.float64)
        return np.where(m <= 1, 1.0, np.power(1.0 - self.p, np.maximum(m - 1.0, 0.0)))

    def sample(self, rng, size=None):
        u = _uniform_open_left(rng, size)
        draws = 1 + np.floor(np.log(u) / math.log1p(-self.p)).astype(np.int64)
        return int(draws) if size is None else draws

    def mean(self):
        return 1.0 / self.p

    def factorial_moment2(self):
        return 2.0 * (1.0 - self.p) / self.p**2

    def spec(self):
        return f"geom:p={self.p:g}"


@dataclass(frozen=True)
class ShiftedGeometric(DegreeDistribution):
    """Mass (1-p)^k p on {0, 1, ...}."""

    p: float

    family = "sgeom"
    support_min = 0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidParameterError(f"ShiftedGeometric p must lie in (0, 1), got {self.p}")

    def tail(self, m):
        m = np.asarray(m, dtype=np.float64)
        return np.power(1.0 - self.p, np.maximum(m, 0.0))

    def sample(self, rng, size=None):
        u = _uniform_open_left(rng, size)
        draws = np.floor(np.log(u) / math.log1p(-self.p)).astype(np.int64)
        return int(draws) if size is None else draws

    def mean(self):
        return (1.0 - self.p) / self.p

    def factorial_moment2(self):
        return 2.0 * (1.0 - self.p) ** 2 / self.p**2

    def spec(self):
        return f"sgeom:p={self.p:g}"


@dataclass(frozen=True)
class PowerLawTail(DegreeDistribution):
    """P(d >= m) = 3^a m^-a for m >= 3."""

    a: float

    family = "plaw"
    support_min = TAIL_FLOOR

    def __post_init__(self):
        if not self.a > 2.0:
            raise InvalidParameterError(f"PowerLawTail needs a > 2 for a finite second moment, got a={self.a}")

    def tail(self, m):
        m = np.asarray(m, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.where(m <= TAIL_FLOOR, 1.0, np.power(TAIL_FLOOR / np.maximum(m, 1.0), self.a))

    def sample(self, rng, size=None):
        u = _uniform_open_left(rng, size)
        draws = np.maximum(np.floor(TAIL_FLOOR * np.power(u, -1.0 / self.a)), TAIL_FLOOR).astype(np.int64)
        return int(draws) if size is None else draws

    def mean(self):
        return 2.0 + TAIL_FLOOR**self.a * float(zeta(self.a, TAIL_FLOOR))

    def factorial_moment2(self):
        scale = TAIL_FLOOR**self.a
        return 2.0 + 2.0 * scale * float(zeta(self.a - 1.0, TAIL_FLOOR) - zeta(self.a, TAIL_FLOOR))

    def spec(self):
        return f"plaw:a={self.a:g}"


@dataclass(frozen=True)
class StretchedExpTail(DegreeDistribution):
    """P(d >= m) = exp(-m^(1/b) + 3^(1/b)) for m >= 3."""

    b: float

    family = "sexp"
    support_min = TAIL_FLOOR

    def __post_init__(self):
        if not self.b > 1.0:
            raise InvalidParameterError(f"StretchedExpTail needs b > 1, got b={self.b}")

    def tail(self, m):
        m = np.asarray(m, dtype=np.float64)
        shift = TAIL_FLOOR ** (1.0 / self.b)
        return np.where(m <= TAIL_FLOOR, 1.0, np.exp(shift - np.power(np.maximum(m, 0.0), 1.0 / self.b)))

    def sample(self, rng, size=None):
        u = _uniform_open_left(rng, size)
        shift = TAIL_FLOOR ** (1.0 / self.b)
        draws = np.maximum(np.floor(np.power(shift - np.log(u), self.b)), TAIL_FLOOR).astype(np.int64)
        return int(draws) if size is None else draws

    def spec(self):
        return f"sexp:b={self.b:g}"


FAMILIES = {
    "det": (Deterministic, "d"),
    "geom": (Geometric, "p"),
    "sgeom": (ShiftedGeometric, "p"),
    "plaw": (PowerLawTail, "a"),
    "sexp": (StretchedExpTail, "b"),
}


def parse_distribution(text):
    """Parse the CLI form, e.g. ``geom:p=0.5``, ``plaw:a=2.5``, ``sexp:b=2``, ``det:d=3``."""
    family, _, params = text.strip().partition(":")
    if family not in FAMILIES:
        raise InvalidParameterError(f"Unknown distribution family '{family}' in '{text}'")
    cls, key = FAMILIES[family]
    name, _, value = params.partition("=")
    if name.strip() != key or not value:
        raise InvalidParameterError(f"Distribution '{text}' must look like {family}:{key}=<value>")
    try:
        number = float(value)
    except ValueError as e:
        raise InvalidParameterError(f"Bad parameter value in '{text}'") from e
    if family == "det":
        if number != int(number):
            raise InvalidParameterError(f"Deterministic degree must be an integer, got '{value}'")
        number = int(number)
    return cls(number)


def sample_degree(dist, rng):
    """One draw from ``dist``."""
    return dist.sample(rng)


def size_biased_mean(dist):
    """nu = E[d(d-1)] / E[d], the mean offspring of the exploration process."""
    mean = dist.mean()
    if mean <= 0:
        raise InvalidParameterError(f"{dist.spec()} has zero mean degree")
    return dist.factorial_moment2() / mean
