"""Concentration bounds, their exact PMF oracles, and small estimators.

Every closed-form bound here comes with an exact counterpart computed with
big-integer binomials (``fractions.Fraction``), converted to float only at
the end, so domination can be checked without rounding noise.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

from .errors import BadParams, DirectionMismatch, EmptyInput, InvalidParams

DIRECTIONS = ("lower", "upper")


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def hoeffding_mean_bound(epsilon: float, N: int) -> float:
    """``2 exp(-2 eps^2 N)``: chance an N-sample Bernoulli mean misses by at least eps.

    Not clamped; values above 1 are vacuous.
    """
    if not epsilon > 0 or N < 1:
        raise BadParams(f"need epsilon > 0 and N >= 1, got epsilon={epsilon}, N={N}")
    return 2.0 * math.exp(-2.0 * epsilon**2 * N)


def binomial_tail_bound(n: int, p: float, k: float, direction: str) -> float:
    """Hoeffding bound on ``Pr[X <= k]`` (lower) or ``Pr[X >= k]`` (upper), X ~ Bin(n, p)."""
    if n < 1 or not 0 <= p <= 1:
        raise BadParams(f"need n >= 1 and 0 <= p <= 1, got n={n}, p={p}")
    mean = n * p
    slack = 1e-12 * max(1.0, mean)  # n * p may carry float rounding
    if direction == "lower":
        if k > mean + slack:
            raise DirectionMismatch(f"lower tail needs k <= np = {mean}, got k = {k}")
    elif direction == "upper":
        if k < mean - slack:
            raise DirectionMismatch(f"upper tail needs k >= np = {mean}, got k = {k}")
    else:
        raise DirectionMismatch(f"direction must be 'lower' or 'upper', got {direction!r}")
    return math.exp(-2.0 * (mean - k) ** 2 / n)


def _check_hyper(N: int, K: int, n: int) -> None:
    if not (0 <= n <= N and 0 <= K <= N):
        raise BadParams(f"need 0 <= n, K <= N, got N={N}, K={K}, n={n}")


def hypergeometric_tail_bound(N: int, K: int, n: int, lam: float, direction: str) -> float:
    """``exp(-2n(K/N - lam/n)^2)`` for ``Pr[X <= lam]`` or ``Pr[X >= lam]``.

    The exponential form only holds on its own side of the mean ``nK/N``;
    on the other side (and for ``n == 0``) the trivial bound 1 is returned.
    """
    _check_hyper(N, K, n)
    if direction not in DIRECTIONS:
        raise BadParams(f"direction must be 'lower' or 'upper', got {direction!r}")
    if n == 0 or N == 0:
        return 1.0
    gap = K / N - lam / n
    if (direction == "lower" and gap < 0) or (direction == "upper" and gap > 0):
        return 1.0
    return math.exp(-2.0 * n * gap**2)


def exact_hypergeometric_pmf_fraction(N: int, K: int, n: int, k: int) -> Fraction:
    _check_hyper(N, K, n)
    if k < 0 or k > min(K, n) or n - k > N - K:
        return Fraction(0)
    return Fraction(math.comb(K, k) * math.comb(N - K, n - k), math.comb(N, n))


def exact_hypergeometric_pmf(N: int, K: int, n: int, k: int) -> float:
    return float(exact_hypergeometric_pmf_fraction(N, K, n, k))


def exact_hypergeometric_tail(N: int, K: int, n: int, lam: float, direction: str) -> float:
    _check_hyper(N, K, n)
    if direction == "lower":
        ks = range(0, math.floor(lam) + 1)
    elif direction == "upper":
        ks = range(max(0, math.ceil(lam)), n + 1)
    else:
        raise BadParams(f"direction must be 'lower' or 'upper', got {direction!r}")
    return float(sum((exact_hypergeometric_pmf_fraction(N, K, n, k) for k in ks), Fraction(0)))


def exact_binomial_tail(n: int, p: float, k: float, direction: str) -> float:
    pf = Fraction(p).limit_denominator(10**12)
    q = 1 - pf
    if direction == "lower":
        ks = range(0, min(n, math.floor(k)) + 1)
    elif direction == "upper":
        ks = range(max(0, math.ceil(k)), n + 1)
    else:
        raise BadParams(f"direction must be 'lower' or 'upper', got {direction!r}")
    return float(sum((math.comb(n, j) * pf**j * q ** (n - j) for j in ks), Fraction(0)))


def hypergeometric_domination_violations(max_N: int) -> tuple[int, list[tuple]]:
    """Exhaustive check of the hypergeometric bound against exact tails.

    Every ``N <= max_N``, ``K, n <= N``, integer ``lam`` in ``0..n`` and both
    directions.  Exact tails are big-integer ratios rounded once to float.
    Returns the number of comparisons and the list of violations.
    """
    checked, bad = 0, []
    for N in range(1, max_N + 1):
        for n in range(N + 1):
            den = math.comb(N, n)
            for K in range(N + 1):
                pmf = [math.comb(K, k) * math.comb(N - K, n - k) if k <= K and n - k <= N - K else 0 for k in range(n + 1)]
                below = 0
                total = sum(pmf)
                for lam in range(n + 1):
                    below += pmf[lam]
                    above = total - below + pmf[lam]
                    for direction, num in (("lower", below), ("upper", above)):
                        checked += 1
                        if num / den > hypergeometric_tail_bound(N, K, n, lam, direction):
                            bad.append((N, K, n, lam, direction))
    return checked, bad


def binomial_domination_violations(max_n: int, ps: Sequence[float]) -> tuple[int, list[tuple]]:
    """Exhaustive check of the binomial bound on its valid side, exact tails in ``Fraction``."""
    checked, bad = 0, []
    for p in ps:
        pf = Fraction(str(p))
        for n in range(1, max_n + 1):
            pmf = [math.comb(n, j) * pf**j * (1 - pf) ** (n - j) for j in range(n + 1)]
            below = Fraction(0)
            for k in range(n + 1):
                below += pmf[k]
                above = 1 - below + pmf[k]
                for direction, tail in (("lower", below), ("upper", above)):
                    if (direction == "lower" and k > n * pf) or (direction == "upper" and k < n * pf):
                        continue
                    checked += 1
                    if float(tail) > binomial_tail_bound(n, p, k, direction):
                        bad.append((n, p, k, direction))
    return checked, bad


# --------------------------------------------------------------------------
# the four-step security bound


@dataclass(frozen=True)
class AttackTally:
    """Bookkeeping for one execution under attack (names follow the proof)."""

    m: int  # attacked rounds
    Z: int  # attacked computation rounds
    X: int  # attacked test rounds
    Y: int  # failed test rounds
    m0: float

    def __post_init__(self):
        if self.Z + self.X != self.m or self.Y > self.X or self.m < 0:
            raise ValueError(f"inconsistent tally {self}")


@dataclass(frozen=True)
class BoundReport:
    gamma1_term: float
    boundZ_term: float
    boundY_term_test: float
    boundY_term_binom: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def security_failure_bound(params) -> BoundReport:
    """Union bound on ``Pr[accept and |estimate - p| >= eps]`` for a ``ProtocolParams``.

    The Z term is a maximum over attacked-round counts ``m <= m0``.  Its
    exponent ``((kw + g2) - m/N)^2`` shrinks as ``m`` grows towards ``m0`` (which
    stays below ``(kw + g2) N``), so the maximum sits at ``m = m0``.
    """
    violations = params.violations(require_gamma=True)
    if violations:
        raise InvalidParams("; ".join(violations))
    Nc, Nt, k, w = params.N_c, params.N_t, params.k, params.w
    g1, g2 = params.gamma1, params.gamma2
    N = Nc + Nt
    kw = k * w
    m0 = (kw + g2 / 2) * N
    t1 = _clamp(2.0 * math.exp(-2.0 * g1**2 * Nc))
    tz = _clamp(math.exp(-2.0 * Nc * ((kw + g2) - m0 / N) ** 2))
    ty1 = _clamp(math.exp(-Nt * g2**2 / 2))
    ty2 = _clamp(math.exp(-(g2**2 / (8 * k**2)) * Nc / (kw + g2 / 4)))
    return BoundReport(t1, tz, ty1, ty2, _clamp(t1 + tz + ty1 + ty2))


# --------------------------------------------------------------------------
# estimators


def empirical_average(bits: Sequence[int]) -> float:
    if len(bits) == 0:
        raise EmptyInput("empirical average of no samples")
    return sum(int(b) for b in bits) / len(bits)


def tvd_estimate(samples_a: Iterable[Hashable], samples_b: Iterable[Hashable]) -> float:
    """Half the L1 distance between two empirical distributions."""
    ca, cb = Counter(samples_a), Counter(samples_b)
    na, nb = sum(ca.values()), sum(cb.values())
    if na == 0 or nb == 0:
        raise EmptyInput("tvd_estimate needs two nonempty samples")
    return 0.5 * sum(abs(ca[x] / na - cb[x] / nb) for x in set(ca) | set(cb))


def tvd_exact(p: dict, q: dict) -> float:
    return 0.5 * sum(abs(p.get(x, 0.0) - q.get(x, 0.0)) for x in set(p) | set(q))


def standard_error(freq: float, trials: int) -> float:
    """Binomial standard error of an observed frequency."""
    return math.sqrt(max(freq * (1 - freq), 0.0) / trials)
