"""The VBOE orchestrator and the ideal resources it is compared against."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import bounds
from .adversary import DeviationSpec, HonestServer
from .errors import InvalidParams
from .mbqc import Graph, MeasurementPattern
from .oracle import expectation_minus
from .traps import Accept, Coloring, Reject, build_test_round, greedy_coloring, run_test_round
from .ubqc import RoundTranscript, ServerInterface, run_ubqc_round, sample_correct_output

COMPUTATION, TEST = "C", "T"


@dataclass(frozen=True)
class ProtocolParams:
    """Round counts, allowed failed-test fraction ``w``, bias ``epsilon``, colour count ``k``.

    ``gamma1``/``gamma2`` are the slack constants of the security bound; they
    are only needed when the bound is evaluated.
    """

    N_c: int
    N_t: int
    w: float
    epsilon: float
    k: int
    gamma1: float | None = None
    gamma2: float | None = None

    def violations(self, require_gamma: bool = False) -> list[str]:
        out = []
        if self.N_c < 1 or self.N_t < 1:
            out.append(f"N_c and N_t must be >= 1 (got {self.N_c}, {self.N_t})")
        if not 0 <= self.w < 1:
            out.append(f"w must lie in [0, 1) (got {self.w})")
        if not self.epsilon > 0:
            out.append(f"epsilon must be > 0 (got {self.epsilon})")
        if self.k < 1:
            out.append(f"k must be >= 1 (got {self.k})")
        kw = self.k * self.w
        if not (0 <= kw < self.epsilon):
            out.append(f"need 0 <= k*w < epsilon (k*w = {kw:g}, epsilon = {self.epsilon:g})")
        gammas = (self.gamma1, self.gamma2)
        if require_gamma and None in gammas:
            out.append("gamma1 and gamma2 are required to evaluate the security bound")
        for name, g in zip(("gamma1", "gamma2"), gammas):
            if g is not None and not g > 0:
                out.append(f"{name} must be > 0 (got {g})")
        if None not in gammas and not self.gamma1 + (kw + self.gamma2) < self.epsilon:
            out.append(
                f"need gamma1 + (k*w + gamma2) < epsilon "
                f"({self.gamma1:g} + {kw + self.gamma2:g} >= {self.epsilon:g})"
            )
        return out

    @property
    def N(self) -> int:
        return self.N_c + self.N_t

    def max_failed(self) -> Fraction:
        """Failed-test threshold ``w * N_t``; decimal ``w`` is read exactly."""
        return Fraction(str(self.w)) * self.N_t

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("N_c", "N_t", "w", "epsilon", "k", "gamma1", "gamma2")}


def validate_params(p: ProtocolParams) -> list[str]:
    """Empty list when the parameters satisfy the theorem's hypotheses."""
    return p.violations()


@dataclass(frozen=True)
class RoundSchedule:
    kinds: tuple[str, ...]

    @property
    def S_C(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k == COMPUTATION)

    @property
    def S_T(self) -> tuple[int, ...]:
        return tuple(i for i, k in enumerate(self.kinds) if k == TEST)


def sample_schedule(N_c: int, N_t: int, rng: np.random.Generator) -> RoundSchedule:
    """Test positions uniform over all ``C(N_c + N_t, N_t)`` subsets."""
    if N_c < 1 or N_t < 1:
        raise InvalidParams(f"N_c and N_t must be >= 1 (got {N_c}, {N_t})")
    N = N_c + N_t
    tests = set(int(i) for i in rng.choice(N, size=N_t, replace=False))
    return RoundSchedule(tuple(TEST if i in tests else COMPUTATION for i in range(N)))


@dataclass
class Verdict:
    accepted: bool
    estimate: float | None
    failed_tests: int
    n_computation: int
    n_tests: int
    round_log: list[dict] = field(default_factory=list)
    attacked_computation: int = 0
    attacked_tests: int = 0

    @property
    def outcome(self) -> str:
        return "accept" if self.accepted else "abort"

    def summary(self) -> dict:
        return {
            "outcome": self.outcome,
            "estimate": self.estimate,
            "failed_tests": self.failed_tests,
            "n_computation": self.n_computation,
            "n_tests": self.n_tests,
            "attacked_computation": self.attacked_computation,
            "attacked_tests": self.attacked_tests,
        }

    def to_dict(self) -> dict:
        return {**self.summary(), "rounds": self.round_log}


ServerFactory = Callable[[int, Graph, np.random.Generator], ServerInterface]


def _factory(server, N: int, seed: Sequence[int]) -> tuple[ServerFactory, frozenset[int]]:
    if server is None:
        return (lambda i, g, rng: HonestServer(g, rng)), frozenset()
    if isinstance(server, DeviationSpec):
        attacked = server.attacked_rounds(N, np.random.default_rng([*seed, 3]))
        return (lambda i, g, rng: server.server(g, i in attacked, rng)), attacked
    return server, frozenset()


def _seed_of(rng: np.random.Generator | None, seed) -> tuple[int, ...]:
    if seed is not None:
        return tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    if rng is None:
        raise ValueError("run_vboe needs either rng or seed")
    return (int(rng.integers(0, 2**63)),)


def run_vboe(
    pattern: MeasurementPattern,
    params: ProtocolParams,
    server: DeviationSpec | ServerFactory | None = None,
    rng: np.random.Generator | None = None,
    *,
    seed: int | Sequence[int] | None = None,
    coloring: Coloring | None = None,
    keep_transcripts: bool = False,
) -> Verdict:
    """Run the full protocol: interleaved test and computation rounds, then the verdict.

    ``server`` is ``None`` (honest), a :class:`DeviationSpec`, or a factory
    ``(round_index, graph, rng) -> server``.  Every round draws from its own
    generator seeded by ``(seed, stream, round_index)``, so results do not
    depend on execution order.
    """
    problems = validate_params(params)
    if problems:
        raise InvalidParams("; ".join(problems))
    if len(pattern.outputs) != 1:
        raise InvalidParams(f"binary observable needs one output vertex, pattern has {len(pattern.outputs)}")
    g = pattern.graph
    coloring = coloring or greedy_coloring(g)
    key = _seed_of(rng, seed)
    schedule = sample_schedule(params.N_c, params.N_t, np.random.default_rng([*key, 0]))
    make_server, attacked = _factory(server, params.N, key)

    ys: list[int] = []
    failed = 0
    log: list[dict] = []
    transcripts: list[RoundTranscript] = []
    att_c = att_t = 0
    for i, kind in enumerate(schedule.kinds):
        client_rng = np.random.default_rng([*key, 1, i])
        srv = make_server(i, g, np.random.default_rng([*key, 2, i]))
        if kind == TEST:
            plan = build_test_round(g, coloring, client_rng)
            passed, tr = run_test_round(plan, g, srv, client_rng, order=pattern.order)
            failed += not passed
            att_t += i in attacked
            log.append({"index": i, "kind": TEST, "passed": passed, "attacked": i in attacked})
        else:
            tr, out = run_ubqc_round(pattern, srv, client_rng)
            ys.append(out[0])
            att_c += i in attacked
            log.append({"index": i, "kind": COMPUTATION, "y": out[0], "attacked": i in attacked})
        if keep_transcripts:
            transcripts.append(tr)

    accepted = failed < params.max_failed()
    v = Verdict(
        accepted=accepted,
        estimate=bounds.empirical_average(ys) if accepted else None,
        failed_tests=failed,
        n_computation=params.N_c,
        n_tests=params.N_t,
        round_log=log,
        attacked_computation=att_c,
        attacked_tests=att_t,
    )
    if keep_transcripts:
        v.transcripts = transcripts  # type: ignore[attr-defined]
    return v


# --------------------------------------------------------------------------
# ideal resources


@dataclass(frozen=True)
class ScalarProgram:
    """Deviation that produces the scalar ``s`` directly (``None`` means Abort)."""

    run: Callable[[np.random.Generator], float | None]


def sdoe_ideal(
    pattern: MeasurementPattern,
    params: ProtocolParams,
    deviation: DeviationSpec | ServerFactory | ScalarProgram | None = None,
    rng: np.random.Generator | None = None,
    *,
    seed: int | Sequence[int] | None = None,
    p: float | None = None,
) -> Verdict:
    """Ideal estimation resource.

    Without a deviation it averages ``N_c`` Bernoulli(p) draws, p from the
    exact oracle.  With one, ``s`` comes from running the concrete protocol
    against the supplied server (or from a scalar program).  Either way the
    result is replaced by Abort whenever it is ``epsilon`` or more away from p.
    """
    problems = validate_params(params)
    if problems:
        raise InvalidParams("; ".join(problems))
    if p is None:
        p = expectation_minus(pattern)
    key = _seed_of(rng, seed)
    failed = 0
    if deviation is None:
        ys = np.random.default_rng([*key, 4]).random(params.N_c) < p
        s: float | None = float(ys.mean())
    elif isinstance(deviation, ScalarProgram):
        s = deviation.run(np.random.default_rng([*key, 4]))
    else:
        concrete = run_vboe(pattern, params, deviation, seed=key)
        s, failed = concrete.estimate, concrete.failed_tests
    accepted = s is not None and abs(s - p) < params.epsilon
    return Verdict(
        accepted=accepted,
        estimate=s if accepted else None,
        failed_tests=failed,
        n_computation=params.N_c,
        n_tests=params.N_t,
    )


def sdqc_ideal(pattern: MeasurementPattern, d_flag: int, rng: np.random.Generator) -> Accept | Reject:
    if d_flag:
        return Reject("server set the deviation flag")
    return Accept(sample_correct_output(pattern, rng))


def bad_estimate(verdict: Verdict, p: float, epsilon: float) -> bool:
    """The event the security bound controls: accepted yet epsilon or more off."""
    return verdict.accepted and verdict.estimate is not None and abs(verdict.estimate - p) >= epsilon - 1e-12


def required_rounds(epsilon: float, delta: float) -> int:
    """Smallest ``N_c`` with ``2 exp(-2 eps^2 N_c) <= delta``."""
    return math.ceil(math.log(2 / delta) / (2 * epsilon**2))
