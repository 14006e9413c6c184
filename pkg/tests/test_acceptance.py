"""Acceptance suite: one check per criterion, one PASS/FAIL line each.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import os
import sys
import time
from functools import cache
from pathlib import Path

import numpy as np
import pytest

from vboe_sim.adversary import HonestServer
from vboe_sim.bounds import binomial_domination_violations, hypergeometric_domination_violations, tvd_estimate
from vboe_sim.harness import config_from_dict, load_config, run_experiment
from vboe_sim.mbqc import path_pattern, run_dmbqc
from vboe_sim.traps import exact_failure_probability, greedy_coloring
from vboe_sim.ubqc import bdqc_ideal, epr_split_round, run_ubqc_round

sys.path.insert(0, str(Path(__file__).resolve().parent))
from graphs import all_graphs  # noqa: E402

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
PATTERN = path_pattern([1, 3, 0])
THREADS = 0  # one worker per CPU


def _experiment(doc: dict):
    return run_experiment(config_from_dict(doc, CONFIGS, env={}), threads=THREADS)


def criterion_1():
    rep = _experiment(
        {
            "kind": "honest_acceptance",
            "pattern": "path3.json",
            "params": {"N_c": 100, "N_t": 100, "w": 0.05, "epsilon": 0.2, "k": 2},
            "trials": 200,
            "master_seed": 101,
        }
    )
    f = rep.results["abort_frequency"]
    return f == 0, f"honest completeness: {round(f * 200)} aborts in 200 runs"


def criterion_2():
    # N_t is free here; 50 test rounds with w = 0.05, k = 2 keeps k*w < epsilon
    rep = _experiment(
        {
            "kind": "honest_acceptance",
            "pattern": "path3.json",
            "params": {"N_c": 500, "N_t": 50, "w": 0.05, "epsilon": 0.15, "k": 2},
            "trials": 2000,
            "master_seed": 102,
        }
    )
    r = rep.results
    ok = r["deviation_frequency"] <= r["hoeffding_bound"] + 3 * r["deviation_std_error"]
    return ok, (
        f"Hoeffding surrogate: frequency {r['deviation_frequency']:.4g} vs bound {r['hoeffding_bound']:.3g}"
        f" + 3 SE ({r['deviation_std_error']:.3g}), p = {r['p']:.6f}"
    )


@cache
def trap_floor_table(paulis=("X", "Y", "Z"), frame="measurement", max_n=4):
    rows = []
    for g in all_graphs(max_n):
        col = greedy_coloring(g)
        for v in g.vertices:
            for P in paulis:
                rows.append((g, v, P, col.K, exact_failure_probability(g, col, v, P, frame)))
    return rows


def criterion_3():
    rows = trap_floor_table()
    short = [(P, K, p) for _, _, P, K, p in rows if p < 1 / K - 1e-12]
    by = sorted({P for P, _, _ in short})
    return not short, (
        f"trap detection floor 1/K: {len(rows) - len(short)}/{len(rows)} single-vertex deviations meet it"
        + (f"; below floor: Pauli {', '.join(by)} (e.g. failure {short[0][2]:.4g} < 1/{short[0][1]})" if short else "")
    )


def criterion_4():
    rep = _experiment({"kind": "blindness_audit", "options": {"max_vertices": 3}, "master_seed": 0})
    worst = max(
        max(r["max_deviation_between"], r["max_deviation_uniform"], r["max_delta_marginal_error"])
        for r in rep.results["rows"]
    )
    return rep.passed and worst <= 1e-9, (
        f"exact blindness on {rep.results['patterns']} patterns, largest entrywise gap {worst:.2e}"
    )


def criterion_5():
    nh, bh = hypergeometric_domination_violations(60)
    nb, bb = binomial_domination_violations(60, [i / 20 for i in range(1, 20)])
    return not bh and not bb, (
        f"bound domination, N <= 60: {len(bh)} hypergeometric violations in {nh} cases,"
        f" {len(bb)} binomial violations in {nb} cases"
    )


def criterion_6():
    rep = run_experiment(load_config(CONFIGS / "security.json", env={}), threads=THREADS)
    rows = rep.results["rows"]
    worst = max(r["bad_frequency"] - 3 * r["std_error"] for r in rows)
    desc = ", ".join(f"m={r['m']}: {r['bad_frequency']:.4g}" for r in rows)
    return rep.passed, f"security frequency ({desc}) vs bound {rows[0]['bound']:.4g}; worst freq-3SE {worst:.4g}"


def criterion_7(n: int = 10_000):
    def run(sampler, seed):
        g = np.random.default_rng(seed)
        return [sampler(g) for _ in range(n)]

    samples = {
        "dmbqc": run(lambda g: run_dmbqc(PATTERN, None, g), 1),
        "ubqc": run(lambda g: run_ubqc_round(PATTERN, HonestServer(PATTERN.graph, g), g)[1], 2),
        "epr_split": run(lambda g: epr_split_round(PATTERN, HonestServer(PATTERN.graph, g), g)[1], 3),
        "bdqc": run(lambda g: bdqc_ideal(PATTERN, g), 4),
    }
    names = list(samples)
    tvds = {
        f"{a}/{b}": tvd_estimate([tuple(x) for x in samples[a]], [tuple(x) for x in samples[b]])
        for i, a in enumerate(names)
        for b in names[i + 1 :]
    }
    worst = max(tvds.values())
    return worst < 0.02, f"construction equivalence: max pairwise TVD {worst:.4f} ({max(tvds, key=tvds.get)})"


def criterion_8():
    docs = [
        {
            "kind": "honest_acceptance",
            "pattern": "path3.json",
            "params": {"N_c": 20, "N_t": 20, "w": 0.1, "epsilon": 0.3, "k": 2},
            "trials": 10,
            "master_seed": 8,
        },
        json.loads((CONFIGS / "attack.json").read_text()) | {"trials": 50},
        json.loads((CONFIGS / "real_vs_ideal.json").read_text()) | {"trials": 10},
        json.loads((CONFIGS / "security.json").read_text()) | {"trials": 5},
        json.loads((CONFIGS / "bounds.json").read_text()),
        json.loads((CONFIGS / "blindness.json").read_text()),
    ]
    same = 0
    for doc in docs:
        a = run_experiment(config_from_dict(doc, CONFIGS, env={})).to_json()
        b = run_experiment(config_from_dict(doc, CONFIGS, env={})).to_json()
        same += a == b
    return same == len(docs), f"determinism: {same}/{len(docs)} experiment kinds reproduce report bytes"


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
}


def evaluate(n: int) -> tuple[bool, str]:
    start = time.perf_counter()
    ok, detail = CRITERIA[n]()
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{time.perf_counter() - start:.1f} s]"
    print(line)
    return ok, line


@pytest.mark.parametrize(
    "n",
    [
        1,
        2,
        pytest.param(
            3,
            marks=pytest.mark.xfail(
                strict=True, reason="an X deviation commutes with the trap readout, so its failure rate sits below 1/K"
            ),
        ),
        4,
        5,
        6,
        7,
        8,
    ],
)
def test_criterion(n, acceptance_log):
    ok, line = evaluate(n)
    acceptance_log.append(line)
    assert ok, line


def test_trap_floor_holds_for_phase_deviations():
    """The floor does hold for Z and Y deviations, exactly at 1/K."""
    for _, _, P, K, p in trap_floor_table(("Y", "Z")):
        assert p == pytest.approx(1 / K, abs=1e-12)


def test_x_deviation_rates():
    """What X actually achieves: never detected in the measurement frame, 1/(2K) in the computational one."""
    for _, _, _, K, p in trap_floor_table(("X",)):
        assert p == pytest.approx(0, abs=1e-12)
    for _, _, _, K, p in trap_floor_table(("X",), frame="computational"):
        assert p == pytest.approx(1 / (2 * K), abs=1e-12)


if __name__ == "__main__":
    chosen = [int(a) for a in sys.argv[1:]] or list(CRITERIA)
    results = [evaluate(n)[0] for n in chosen]
    sys.exit(0 if all(results) else 1)
