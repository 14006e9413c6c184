import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vboe_sim.bounds import (
    AttackTally,
    binomial_domination_violations,
    binomial_tail_bound,
    empirical_average,
    exact_binomial_tail,
    exact_hypergeometric_pmf,
    exact_hypergeometric_pmf_fraction,
    exact_hypergeometric_tail,
    hoeffding_mean_bound,
    hypergeometric_domination_violations,
    hypergeometric_tail_bound,
    security_failure_bound,
    standard_error,
    tvd_estimate,
    tvd_exact,
)
from vboe_sim.errors import BadParams, DirectionMismatch, EmptyInput, InvalidParams
from vboe_sim.protocol import ProtocolParams


def test_hoeffding_examples():
    assert hoeffding_mean_bound(0.1, 1000) == pytest.approx(2 * math.exp(-20))
    assert hoeffding_mean_bound(0.1, 1000) == pytest.approx(4.122307e-9, rel=1e-6)
    assert hoeffding_mean_bound(1e-9, 1) == pytest.approx(2.0)
    with pytest.raises(BadParams):
        hoeffding_mean_bound(0, 10)
    with pytest.raises(BadParams):
        hoeffding_mean_bound(0.1, 0)


def test_hoeffding_monte_carlo():
    g = np.random.default_rng(31)
    trials, N, p, eps = 100_000, 200, 0.3, 0.2
    means = g.binomial(N, p, size=trials) / N
    freq = (np.abs(means - p) >= eps).mean()
    assert freq <= hoeffding_mean_bound(eps, N)


def test_binomial_examples():
    b = binomial_tail_bound(10, 0.5, 2, "lower")
    assert b == pytest.approx(math.exp(-1.8))
    assert exact_binomial_tail(10, 0.5, 2, "lower") == pytest.approx(56 / 1024)
    assert binomial_tail_bound(10, 0.5, 5, "lower") == 1.0
    assert exact_binomial_tail(100, 0.5, 70, "upper") <= binomial_tail_bound(100, 0.5, 70, "upper") == pytest.approx(
        math.exp(-8)
    )


def test_binomial_direction_errors():
    with pytest.raises(DirectionMismatch):
        binomial_tail_bound(10, 0.5, 7, "lower")
    with pytest.raises(DirectionMismatch):
        binomial_tail_bound(10, 0.5, 3, "upper")
    with pytest.raises(DirectionMismatch):
        binomial_tail_bound(10, 0.5, 3, "sideways")


def test_hypergeometric_examples():
    assert hypergeometric_tail_bound(10, 5, 5, 0, "lower") == pytest.approx(math.exp(-2.5))
    assert exact_hypergeometric_tail(10, 5, 5, 0, "lower") == pytest.approx(1 / 252)
    assert hypergeometric_tail_bound(10, 5, 4, 2, "upper") == 1.0
    assert exact_hypergeometric_tail(100, 50, 20, 17, "upper") <= hypergeometric_tail_bound(100, 50, 20, 17, "upper")


def test_hypergeometric_wrong_side_and_empty_sample_are_trivial():
    assert hypergeometric_tail_bound(10, 5, 4, 3, "lower") == 1.0
    assert hypergeometric_tail_bound(10, 5, 4, 1, "upper") == 1.0
    assert hypergeometric_tail_bound(10, 5, 0, 0, "lower") == 1.0
    with pytest.raises(BadParams):
        hypergeometric_tail_bound(10, 11, 2, 0, "lower")
    with pytest.raises(BadParams):
        hypergeometric_tail_bound(10, 5, 2, 0, "both")


def test_pmf_examples():
    assert exact_hypergeometric_pmf_fraction(10, 5, 5, 0) == Fraction(1, 252)
    assert exact_hypergeometric_pmf(10, 5, 5, 6) == 0
    assert exact_hypergeometric_pmf(10, 3, 5, 4) == 0


def test_pmf_normalised_for_all_small_parameters():
    for N in range(0, 61):
        for K in range(N + 1):
            for n in range(N + 1):
                assert abs(sum(exact_hypergeometric_pmf(N, K, n, k) for k in range(n + 1)) - 1) <= 1e-12


def test_hypergeometric_pmf_matches_counting():
    """Count subsets directly on a tiny urn."""
    from itertools import combinations

    N, K, n = 7, 3, 4
    marked = set(range(K))
    counts = [0] * (n + 1)
    for s in combinations(range(N), n):
        counts[len(marked & set(s))] += 1
    total = sum(counts)
    for k in range(n + 1):
        assert exact_hypergeometric_pmf_fraction(N, K, n, k) == Fraction(counts[k], total)


@pytest.mark.slow
def test_hypergeometric_domination_exhaustive():
    checked, bad = hypergeometric_domination_violations(60)
    assert checked > 3_000_000 and bad == []


def test_binomial_domination_exhaustive():
    checked, bad = binomial_domination_violations(60, [i / 10 for i in range(1, 10)])
    assert checked > 10_000 and bad == []


@given(st.integers(1, 40), st.floats(0.05, 0.95), st.data())
def test_binomial_domination_property(n, p, data):
    k = data.draw(st.integers(0, math.floor(n * p)))
    assert exact_binomial_tail(n, p, k, "lower") <= binomial_tail_bound(n, p, k, "lower") + 1e-12


def params(**kw):
    base = dict(N_c=10000, N_t=10000, w=0.005, epsilon=0.1, k=2, gamma1=0.05, gamma2=0.02)
    base.update(kw)
    return ProtocolParams(**base)


def test_security_bound_reference_values():
    """Closed form at the reference parameters: two exp(-2) terms dominate, so the total is ~0.27."""
    rep = security_failure_bound(params())
    assert rep.gamma1_term == pytest.approx(2 * math.exp(-50))
    assert rep.boundZ_term == pytest.approx(math.exp(-2))
    assert rep.boundY_term_test == pytest.approx(math.exp(-2))
    assert rep.boundY_term_binom == pytest.approx(math.exp(-(0.0004 / 32) * 10000 / 0.015))
    assert rep.total == pytest.approx(0.27091093594964505, rel=1e-12)
    assert rep.total == pytest.approx(rep.gamma1_term + rep.boundZ_term + rep.boundY_term_test + rep.boundY_term_binom)


def test_boundz_maximum_sits_at_m0():
    p = params()
    N = p.N_c + p.N_t
    kw = p.k * p.w
    m0 = (kw + p.gamma2 / 2) * N
    vals = [math.exp(-2 * p.N_c * ((kw + p.gamma2) - m / N) ** 2) for m in np.linspace(0, m0, 50)]
    assert max(vals) == pytest.approx(security_failure_bound(p).boundZ_term)


def test_security_bound_vacuous_as_gamma2_vanishes():
    rep = security_failure_bound(params(gamma2=1e-9))
    assert rep.boundY_term_test == pytest.approx(1.0)
    assert rep.boundY_term_binom == pytest.approx(1.0)
    assert rep.total == 1.0


def test_security_bound_monotone():
    prev = 1.0
    for n in (10000, 20000, 40000, 80000):
        t = security_failure_bound(params(N_c=n, N_t=n)).total
        assert t < prev
        prev = t
    for field in ("N_c", "N_t"):
        vals = [security_failure_bound(params(**{field: n})).total for n in range(2000, 40000, 2000)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_security_bound_rejects_bad_params():
    with pytest.raises(InvalidParams):
        security_failure_bound(params(gamma1=0.08))
    with pytest.raises(InvalidParams):
        security_failure_bound(params(gamma1=None))


def test_attack_tally_invariants():
    AttackTally(m=5, Z=3, X=2, Y=1, m0=10)
    with pytest.raises(ValueError):
        AttackTally(m=5, Z=3, X=1, Y=0, m0=10)
    with pytest.raises(ValueError):
        AttackTally(m=5, Z=3, X=2, Y=3, m0=10)


def test_estimators():
    assert empirical_average([1, 0, 1, 1]) == 0.75
    assert empirical_average([0, 0, 0]) == 0
    with pytest.raises(EmptyInput):
        empirical_average([])
    assert tvd_estimate([1, 2, 3], [3, 2, 1]) == 0
    assert tvd_estimate([0, 0], [1]) == 1
    assert tvd_estimate([0] * 50 + [1] * 50, [0] * 75 + [1] * 25) == pytest.approx(0.25)
    with pytest.raises(EmptyInput):
        tvd_estimate([], [1])
    assert tvd_exact({0: 0.5, 1: 0.5}, {0: 1.0}) == pytest.approx(0.5)
    assert standard_error(0.5, 100) == pytest.approx(0.05)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_average_is_count_over_length(bits):
    assert empirical_average(bits) == sum(bits) / len(bits)
