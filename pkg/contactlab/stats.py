"""Confidence intervals for Monte Carlo estimates."""
import math
from typing import NamedTuple

import numpy as np
from scipy import stats

CONFIDENCE = 0.95


def wilson_interval(successes, total, confidence=CONFIDENCE):
    """Wilson score interval for Bernoulli outcomes."""
    if total <= 0:
        return (0.0, 1.0)
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    margin = (z * math.sqrt(p * (1.0 - p) / total + z2 / (4.0 * total * total))) / denom
    return (max(0.0, center - margin), min(1.0, center + margin))


def proportion_sigma(p, total):
    """Binomial standard error, floored at the one-success level so 3 sigma stays informative at p = 0."""
    return math.sqrt(max(p * (1.0 - p), 1.0 / total) / total)


def mean_estimate(samples, confidence=CONFIDENCE):
    """Sample mean and Student t half-width."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.size
    if n == 0:
        return math.nan, math.nan
    mean = float(samples.mean())
    if n == 1:
        return mean, math.inf
    sem = float(samples.std(ddof=1)) / math.sqrt(n)
    return mean, float(stats.t.ppf(0.5 + confidence / 2.0, n - 1)) * sem


class ProportionEstimate(NamedTuple):
    estimate: float
    low: float
    high: float
    successes: int
    total: int

    @property
    def halfwidth(self):
        return (self.high - self.low) / 2.0

    @property
    def sigma(self):
        return proportion_sigma(self.estimate, self.total)

    @classmethod
    def from_counts(cls, successes, total, confidence=CONFIDENCE):
        low, high = wilson_interval(successes, total, confidence)
        return cls(successes / total, low, high, int(successes), int(total))
