import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vboe_sim import quantum as qc
from vboe_sim import ubqc
from vboe_sim.adversary import HonestServer
from vboe_sim.bounds import tvd_estimate, tvd_exact
from vboe_sim.errors import ParseError, ServerTimeout
from vboe_sim.harness import small_patterns
from vboe_sim.mbqc import Flow, Graph, MeasurementPattern, path_pattern, run_dmbqc
from vboe_sim.oracle import output_distribution
from vboe_sim.ubqc import (
    BlindingSecrets,
    RoundTranscript,
    audit_blindness,
    bdqc_ideal,
    blind_angle,
    constant_map,
    epr_split_round,
    flip_map,
    propagate_a,
    resource_angle,
    run_ubqc_round,
    sample_secrets,
    server_view,
)

PATTERN = path_pattern([1, 3, 0])
TRIALS = 10_000


def secrets(a=0, ap=0, r=0, th=0):
    return BlindingSecrets({0: a}, {0: ap}, {0: r}, {0: th})


class ZeroServer(HonestServer):
    def measure(self, vertex, delta):
        super().measure(vertex, delta)
        return 0


class BrokenServer(HonestServer):
    def measure(self, vertex, delta):
        return 2


def test_sample_secrets_structure(rng):
    s = sample_secrets(Graph([0, 1, 2]), [], rng)
    assert set(s.a_prop.values()) == {0} and set(s.a_init.values()) == {0}
    assert propagate_a(Graph([1, 2], [(1, 2)]), {1: 1, 2: 0}) == {1: 0, 2: 1}
    s = sample_secrets(PATTERN.graph, PATTERN.inputs, rng)
    assert s.a_init[1] == s.a_init[2] == 0
    assert s.a_prop == propagate_a(PATTERN.graph, s.a_init)


def test_theta_uniform_chi_square():
    g = np.random.default_rng(77)
    counts = Counter()
    for _ in range(100_000 // 3):
        counts.update(sample_secrets(PATTERN.graph, PATTERN.inputs, g).theta.values())
    n = sum(counts.values())
    chi2 = sum((counts[k] - n / 8) ** 2 / (n / 8) for k in range(8))
    # 7 degrees of freedom, p = 0.001 critical value
    assert chi2 < 24.32


def test_blind_angle_examples():
    assert blind_angle(5, secrets(), 0) == 5
    assert blind_angle(1, secrets(a=1, th=1, r=1), 0) == 4
    assert blind_angle(3, secrets(r=1), 0) == 7


@given(st.integers(0, 7), st.integers(0, 1), st.integers(0, 1), st.integers(0, 1), st.integers(0, 7))
def test_blind_angle_formula(phi, a, ap, r, th):
    want = ((-1) ** a * phi + th + 4 * (r + ap)) % 8
    assert blind_angle(phi, secrets(a, ap, r, th), 0) == want


def _samples(fn, seed, n=TRIALS):
    g = np.random.default_rng(seed)
    return [fn(g) for _ in range(n)]


def test_ubqc_honest_matches_dmbqc():
    u = _samples(lambda g: run_ubqc_round(PATTERN, HonestServer(PATTERN.graph, g), g)[1], 1)
    d = _samples(lambda g: run_dmbqc(PATTERN, None, g), 2)
    assert tvd_estimate(u, d) < 0.02


@pytest.mark.parametrize("pat", list(small_patterns(3))[::5])
def test_ubqc_honest_matches_oracle_on_small_patterns(pat):
    pat = pat.with_angles({v: (3 * v + 1) % 8 for v in pat.graph.vertices if v not in pat.outputs})
    u = _samples(lambda g: run_ubqc_round(pat, HonestServer(pat.graph, g), g)[1], 3, 3000)
    emp = {k: c / len(u) for k, c in Counter(u).items()}
    assert tvd_exact(emp, output_distribution(pat)) < 0.05


def test_zero_server_gets_uniform_outputs():
    u = _samples(lambda g: run_ubqc_round(PATTERN, ZeroServer(PATTERN.graph, g), g), 4, 4000)
    assert all(out == (tr.b[2] ^ tr.secrets["r"]["2"],) for tr, out in u)
    ones = sum(out[0] for _, out in u)
    assert abs(ones / 4000 - 0.5) < 4 * math.sqrt(0.25 / 4000)


def test_single_vertex_pattern_outputs_zero(rng):
    p = MeasurementPattern(Graph([1]), [], [1], {1: 0}, Flow({}, [1]))
    for _ in range(100):
        assert run_ubqc_round(p, HonestServer(p.graph, rng), rng)[1] == (0,)


def test_server_contract_violation(rng):
    with pytest.raises(ServerTimeout):
        run_ubqc_round(PATTERN, BrokenServer(PATTERN.graph, rng), rng)


def test_bdqc_ideal(rng):
    assert all(bdqc_ideal(PATTERN, rng, constant_map((0,))) == (0,) for _ in range(100))
    n = TRIALS
    plain = _samples(lambda g: bdqc_ideal(PATTERN, g), 5, n)
    flipped = _samples(lambda g: bdqc_ideal(PATTERN, g, flip_map), 6, n)
    p = output_distribution(PATTERN)[(1,)]
    assert abs(sum(x[0] for x in plain) / n - p) < 4 * math.sqrt(p * (1 - p) / n)
    assert abs(sum(x[0] for x in flipped) / n - (1 - p)) < 4 * math.sqrt(p * (1 - p) / n)


def test_resource_angle_plain_case_matches_formula():
    for d, ph, ap in itertools.product(range(8), range(8), (0, 1)):
        assert resource_angle(d, ph, 0, ap) == (d - ph - 4 * ap) % 8


def test_literal_resource_angle_breaks_twisted_inputs(monkeypatch):
    """With a_init = 1 the uncorrected rotation gives the wrong output distribution."""
    p = output_distribution(PATTERN)[(1,)]
    monkeypatch.setattr(ubqc, "resource_angle", lambda d, ph, a, ap: (d - (-ph if a else ph) - 4 * ap) % 8)
    outs = _samples(lambda g: epr_split_round(PATTERN, HonestServer(PATTERN.graph, g), g)[1][0], 8, 4000)
    assert abs(np.mean(outs) - p) > 0.1


def test_epr_split_matches_ubqc_jointly():
    def joint(fn, seed):
        def one(g):
            tr, out = fn(PATTERN, HonestServer(PATTERN.graph, g), g)
            return tuple(tr.delta[v] for v in PATTERN.order) + out

        return _samples(one, seed)

    # 8^3 * 2 cells is too fine for 10^4 samples, so compare the output
    # jointly with each delta separately plus the output marginal
    e = joint(epr_split_round, 9)
    u = joint(run_ubqc_round, 10)
    assert tvd_estimate([x[-1] for x in e], [x[-1] for x in u]) < 0.02
    for i in range(3):
        assert tvd_estimate([(x[i], x[-1]) for x in e], [(x[i], x[-1]) for x in u]) < 0.05


def test_epr_split_zero_server_uniform_output():
    outs = _samples(lambda g: epr_split_round(PATTERN, ZeroServer(PATTERN.graph, g), g)[1][0], 11, 4000)
    assert abs(np.mean(outs) - 0.5) < 4 * math.sqrt(0.25 / 4000)


def test_epr_split_delta_uniform():
    ds = _samples(lambda g: epr_split_round(PATTERN, HonestServer(PATTERN.graph, g), g)[0].delta[1], 12, 8000)
    c = Counter(ds)
    chi2 = sum((c[k] - 1000) ** 2 / 1000 for k in range(8))
    assert chi2 < 24.32


def test_transcript_shapes_and_round_trip(rng):
    tr, _ = run_ubqc_round(PATTERN, HonestServer(PATTERN.graph, rng), rng)
    msgs = tr.messages()
    assert [m["type"] for m in msgs] == ["qubit"] * 3 + ["entangle"] + ["delta", "bit"] * 3
    assert all(m["payload"] is None for m in msgs if m["type"] == "qubit")
    back = RoundTranscript.from_jsonl(tr.to_jsonl())
    assert back.delta == tr.delta and back.b == tr.b and back.outputs == tr.outputs
    with pytest.raises(ParseError):
        RoundTranscript.from_jsonl("{not json")
    with pytest.raises(ParseError):
        RoundTranscript.from_jsonl(tr.to_jsonl().split("\n", 1)[1])


def test_server_view_marginals_single_vertex():
    p = MeasurementPattern(Graph([0]), [], [0], {0: 3}, Flow({}, [0]))
    for b in (0, 1):
        view = server_view(p, {0: b})
        assert np.allclose(np.einsum("kii->k", view), 1 / 8)
        assert np.allclose(view * 8, np.eye(2) / 2)


def test_blindness_on_three_vertex_path():
    a = PATTERN
    b = PATTERN.with_angles({0: 6, 1: 2})
    rep = audit_blindness(a, b)
    assert rep.ok(1e-9), rep


def test_audit_flags_a_non_uniform_view(monkeypatch):
    """The audit is not vacuous: if every qubit sent were |+>, the view would not be I/2."""
    a, b = PATTERN, PATTERN.with_angles({0: 6, 1: 2})
    monkeypatch.setattr(ubqc, "_PLUS_PROJ", ubqc._PLUS_PROJ[[0] * 8])
    assert not audit_blindness(a, b).ok(1e-9)


def test_audit_requires_same_structure():
    with pytest.raises(ValueError):
        audit_blindness(PATTERN, path_pattern([0, 0, 0, 0]))
