import math

import numpy as np
import pytest

from contactlab.distributions import (Deterministic, Geometric, PowerLawTail, ShiftedGeometric, StretchedExpTail,
                                      parse_distribution, sample_degree, size_biased_mean)
from contactlab.errors import InvalidParameterError


def within(observed, expected, se, sigmas=4.0):
    return abs(observed - expected) <= sigmas * se


def test_parse_distribution_forms():
    assert parse_distribution("geom:p=0.5") == Geometric(0.5)
    assert parse_distribution("plaw:a=2.5") == PowerLawTail(2.5)
    assert parse_distribution("sexp:b=2.0") == StretchedExpTail(2.0)
    assert parse_distribution("det:d=3") == Deterministic(3)
    assert parse_distribution("geom:p=0.25").spec() == "geom:p=0.25"


@pytest.mark.parametrize("text", ["unif:p=0.5", "geom:q=0.5", "geom:p=abc", "det:d=2.5", "geom"])
def test_parse_distribution_rejects(text):
    with pytest.raises(InvalidParameterError):
        parse_distribution(text)


def test_power_law_needs_finite_second_moment():
    with pytest.raises(InvalidParameterError):
        PowerLawTail(2.0)


def test_size_biased_means():
    assert size_biased_mean(Deterministic(3)) == pytest.approx(2.0)
    assert size_biased_mean(Geometric(0.5)) == pytest.approx(2.0)
    # direct summation of sum k(k-1) p_k / sum k p_k with p_k = 2^-k
    ks = np.arange(1, 200, dtype=float)
    pk = 0.5**ks
    assert size_biased_mean(Geometric(0.5)) == pytest.approx((ks * (ks - 1) * pk).sum() / (ks * pk).sum())


def test_power_law_moments_match_summation():
    dist = PowerLawTail(3.5)
    summed_first, summed_second = dist._summed_moments()
    assert dist.mean() == pytest.approx(summed_first, rel=1e-6)
    assert dist.factorial_moment2() == pytest.approx(summed_second, rel=1e-4)


def test_pmf_sums_to_one():
    for dist in (Geometric(0.3), ShiftedGeometric(0.4), PowerLawTail(2.5), StretchedExpTail(2.0), Deterministic(4)):
        assert float(dist.pmf(np.arange(0, 20000)).sum()) == pytest.approx(1.0, abs=1e-3)


def test_stretched_minimum_degree(rng):
    draws = StretchedExpTail(2.0).sample(rng, 100_000)
    assert draws.min() >= 3
    assert sample_degree(StretchedExpTail(1.5), rng) >= 3


def test_power_law_tail_frequency(rng):
    n = 1_000_000
    draws = PowerLawTail(2.5).sample(rng, n)
    expected = 3**2.5 * 6**-2.5
    observed = float(np.mean(draws >= 6))
    assert expected == pytest.approx(0.17678, abs=1e-5)
    assert within(observed, expected, math.sqrt(expected * (1 - expected) / n))
    assert draws.min() >= 3


def test_geometric_mass_at_one(rng):
    n = 200_000
    draws = Geometric(0.5).sample(rng, n)
    assert draws.min() >= 1
    assert within(float(np.mean(draws == 1)), 0.5, math.sqrt(0.25 / n))


def test_shifted_geometric_mean(rng):
    n = 200_000
    dist = ShiftedGeometric(0.5)
    draws = dist.sample(rng, n)
    assert within(float(draws.mean()), dist.mean(), math.sqrt(2.0 / n))


def test_scalar_sample_is_int(rng):
    assert isinstance(sample_degree(Geometric(0.5), rng), int)
    assert sample_degree(Deterministic(2), rng) == 2


@pytest.mark.parametrize("dist, points", [
    (Geometric(0.3), [1, 2, 3, 5, 8]),
    (ShiftedGeometric(0.4), [0, 1, 2, 4, 6]),
    (PowerLawTail(2.5), [3, 4, 6, 10, 20]),
    (StretchedExpTail(2.0), [3, 5, 10, 20, 40]),
    (Deterministic(4), [0, 2, 4, 5, 7]),
])
def test_empirical_tail_matches_formula(dist, points, rng):
    n = 200_000
    draws = dist.sample(rng, n)
    for m in points:
        expected = float(dist.tail(m))
        observed = float(np.mean(draws >= m))
        assert within(observed, expected, math.sqrt(expected * (1 - expected) / n)), (dist, m)


def test_stretched_tail_formula():
    dist = StretchedExpTail(2.0)
    assert float(dist.tail(3)) == 1.0
    assert float(dist.tail(10)) == pytest.approx(math.exp(math.sqrt(3.0) - math.sqrt(10.0)))
