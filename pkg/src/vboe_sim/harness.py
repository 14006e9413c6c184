"""Experiment configs, seeded trial orchestration, reports and transcript replay."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from itertools import combinations, permutations, product
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from . import bounds
from .adversary import DeviationSpec, PauliAttackServer, PauliBefore
from .errors import ConfigError, MismatchFound, ParseError, TrialError, VBOEError
from .mbqc import Flow, Graph, MeasurementPattern, load_pattern, path_pattern, validate_flow
from .oracle import expectation_minus
from .protocol import ProtocolParams, run_vboe, sdoe_ideal
from .traps import (
    TestRoundPlan,
    build_test_round,
    exact_failure_probability,
    greedy_coloring,
    run_test_round,
    trap_mismatches,
)
from .ubqc import BlindingSecrets, RoundTranscript, audit_blindness, blind_angle, corrected_angle

SEED_ENV = "VBOE_SEED"
KINDS = (
    "honest_acceptance",
    "attack_detection",
    "security_frequency",
    "blindness_audit",
    "real_vs_ideal",
    "bound_tables",
)
_CONFIG_KEYS = {"kind", "pattern", "params", "adversary", "trials", "master_seed", "options"}
_OPTION_KEYS = {
    "honest_acceptance": set(),
    "attack_detection": {"paulis", "frame"},
    "security_frequency": {"attack_fractions"},
    "blindness_audit": {"max_vertices"},
    "real_vs_ideal": set(),
    "bound_tables": {"rounds"},
}
DEFAULT_ANGLES = (1, 3, 0)
SE_MULT = 3.0


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    kind: str
    pattern: MeasurementPattern
    pattern_path: str | None
    params: ProtocolParams | None
    adversary: DeviationSpec | None
    trials: int
    master_seed: int
    options: dict = field(default_factory=dict)
    seed_source: str = "config"

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "pattern": self.pattern_path,
            "params": None if self.params is None else self.params.to_dict(),
            "adversary": None if self.adversary is None else self.adversary.to_dict(),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "seed_source": self.seed_source,
            "options": self.options,
        }


def _int(doc: Mapping, key: str, default=None) -> int:
    val = doc.get(key, default)
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(f"{key} must be an integer, got {val!r}")
    return val


def config_from_dict(
    doc: Mapping,
    base_dir: str | Path = ".",
    *,
    seed: int | None = None,
    trials: int | None = None,
    env: Mapping[str, str] | None = None,
) -> ExperimentConfig:
    """Validate a config document; command-line and environment overrides applied here.

    Seed precedence: environment variable, then ``seed``, then the document.
    """
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")

    pattern_path = doc.get("pattern")
    if pattern_path is None:
        pattern = path_pattern(DEFAULT_ANGLES)
    else:
        p = Path(base_dir) / pattern_path
        if not p.is_file():
            raise ConfigError(f"pattern file {p} does not exist")
        try:
            pattern = load_pattern(p)
        except VBOEError as exc:
            raise ConfigError(f"pattern file {p}: {exc}") from None

    params = None
    if doc.get("params") is not None:
        raw = doc["params"]
        if not isinstance(raw, Mapping):
            raise ConfigError("params must be an object")
        extra = set(raw) - {"N_c", "N_t", "w", "epsilon", "k", "gamma1", "gamma2"}
        if extra:
            raise ConfigError(f"unknown params key(s) {sorted(extra)}")
        try:
            params = ProtocolParams(**raw)
        except TypeError as exc:
            raise ConfigError(f"params: {exc}") from None
        problems = params.violations()
        if problems:
            raise ConfigError("params: " + "; ".join(problems))
    if kind in ("honest_acceptance", "security_frequency", "real_vs_ideal", "bound_tables") and params is None:
        raise ConfigError(f"{kind} needs params")
    if kind in ("security_frequency", "bound_tables") and params.violations(require_gamma=True):
        raise ConfigError("params: " + "; ".join(params.violations(require_gamma=True)))

    adversary = None
    if doc.get("adversary") is not None:
        try:
            adversary = DeviationSpec.from_dict(doc["adversary"])
            adversary.validate(pattern.graph)
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"adversary: {exc}") from None

    n_trials = trials if trials is not None else _int(doc, "trials", 1)
    if n_trials < 1:
        raise ConfigError(f"trials must be >= 1, got {n_trials}")

    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            master, source = int(env[SEED_ENV], 0), "env"
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    elif seed is not None:
        master, source = seed, "cli"
    else:
        master, source = _int(doc, "master_seed", 0), "config"
    if not 0 <= master < 2**64:
        raise ConfigError(f"master seed must fit in 64 bits, got {master}")

    options = doc.get("options") or {}
    if not isinstance(options, Mapping):
        raise ConfigError("options must be an object")
    extra = set(options) - _OPTION_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown option(s) for {kind}: {sorted(extra)}")
    return ExperimentConfig(kind, pattern, pattern_path, params, adversary, n_trials, master, dict(options), source)


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(doc, path.parent, **overrides)


# --------------------------------------------------------------------------
# trial execution


def _call_trial(fn: Callable[[int], Any], t: int):
    try:
        return fn(t)
    except VBOEError as exc:
        raise TrialError(t, exc) from exc


def map_trials(fn: Callable[[int], Any], n: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(n-1)]``, optionally across a bounded worker pool.

    ``fn`` must be picklable when ``threads != 1``.  Results always come back
    in trial order.
    """
    workers = (os.cpu_count() or 1) if threads == 0 else threads
    if workers <= 1 or n < 2:
        return [_call_trial(fn, t) for t in range(n)]
    with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
        return list(pool.map(partial(_call_trial, fn), range(n), chunksize=max(1, n // (4 * workers))))


def _vboe_trial(pattern, params, adversary, master, tag, t):
    v = run_vboe(pattern, params, adversary, seed=(master, tag, t))
    return v.accepted, v.estimate, v.failed_tests


def _pair_trial(pattern, params, adversary, master, t):
    key = (master, 7, t)
    real = run_vboe(pattern, params, adversary, seed=key)
    ideal = sdoe_ideal(pattern, params, adversary, seed=key)
    return (real.accepted, real.estimate), (ideal.accepted, ideal.estimate)


def _detection_trial(pattern, coloring, vertex, pauli, frame, master, tag, t):
    rng = np.random.default_rng([master, tag, t])
    plan = build_test_round(pattern.graph, coloring, rng)
    srv = PauliAttackServer(pattern.graph, {vertex: pauli}, np.random.default_rng([master, tag, t, 1]), frame)
    passed, _ = run_test_round(plan, pattern.graph, srv, rng, order=pattern.order)
    return not passed


class _Assertions:
    def __init__(self):
        self.items: list[dict] = []

    def check(self, name: str, ok: bool, **detail) -> None:
        self.items.append({"name": name, "passed": bool(ok), **detail})

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.items)


def _freq(xs: Sequence[bool]) -> tuple[float, float]:
    f = sum(xs) / len(xs)
    return f, bounds.standard_error(f, len(xs))


def _honest_acceptance(cfg: ExperimentConfig, threads: int, asserts: _Assertions) -> tuple[dict, list[dict]]:
    p = expectation_minus(cfg.pattern)
    eps = cfg.params.epsilon
    runs = map_trials(partial(_vboe_trial, cfg.pattern, cfg.params, cfg.adversary, cfg.master_seed, 1), cfg.trials, threads)
    aborts = [not acc for acc, _, _ in runs]
    bad = [acc and abs(est - p) >= eps - 1e-12 for acc, est, _ in runs]
    f_abort, _ = _freq(aborts)
    f_bad, se_bad = _freq(bad)
    bound = bounds.hoeffding_mean_bound(eps, cfg.params.N_c)
    if cfg.adversary is None:
        asserts.check("honest_never_aborts", f_abort == 0, abort_frequency=f_abort)
    asserts.check(
        "deviation_within_hoeffding",
        f_bad <= bound + SE_MULT * se_bad,
        frequency=f_bad,
        bound=bound,
        std_error=se_bad,
    )
    ests = [est for acc, est, _ in runs if acc]
    result = {
        "p": p,
        "abort_frequency": f_abort,
        "deviation_frequency": f_bad,
        "deviation_std_error": se_bad,
        "hoeffding_bound": bound,
        "mean_estimate": float(np.mean(ests)) if ests else None,
        "trials": [{"trial": t, "accepted": a, "estimate": e, "failed_tests": f} for t, (a, e, f) in enumerate(runs)],
    }
    row = {k: result[k] for k in ("p", "abort_frequency", "deviation_frequency", "deviation_std_error", "hoeffding_bound")}
    return result, [row]


def _attack_detection(cfg: ExperimentConfig, threads: int, asserts: _Assertions) -> tuple[dict, list[dict]]:
    coloring = greedy_coloring(cfg.pattern.graph)
    K = coloring.K
    frame = cfg.options.get("frame", "measurement")
    paulis = cfg.options.get("paulis", ["X", "Y", "Z"])
    rows = []
    for tag, (v, pauli) in enumerate(product(cfg.pattern.graph.vertices, paulis), start=100):
        exact = exact_failure_probability(cfg.pattern.graph, coloring, v, pauli, frame)
        fails = map_trials(
            partial(_detection_trial, cfg.pattern, coloring, v, pauli, frame, cfg.master_seed, tag), cfg.trials, threads
        )
        f, se = _freq(fails)
        row = {
            "vertex": v,
            "pauli": pauli,
            "frame": frame,
            "empirical": f,
            "std_error": se,
            "exact": exact,
            "floor": 1 / K,
            "floor_met": exact >= 1 / K - 1e-12,
        }
        rows.append(row)
        asserts.check(
            f"empirical_matches_exact[{v},{pauli}]",
            abs(f - exact) <= SE_MULT * se + 0.02,
            empirical=f,
            exact=exact,
        )
    return {"K": K, "frame": frame, "rows": rows}, rows


def _security_frequency(cfg: ExperimentConfig, threads: int, asserts: _Assertions) -> tuple[dict, list[dict]]:
    params = cfg.params
    p = expectation_minus(cfg.pattern)
    bound = bounds.security_failure_bound(params)
    action = cfg.adversary.action if cfg.adversary else PauliBefore({cfg.pattern.outputs[0]: "Z"})
    fractions = cfg.options.get("attack_fractions", [0.0, 0.01, 0.05, 0.2])
    rows = []
    for i, frac in enumerate(fractions):
        m = int(round(frac * params.N))
        spec = DeviationSpec(action, m)
        runs = map_trials(partial(_vboe_trial, cfg.pattern, params, spec, cfg.master_seed, 200 + i), cfg.trials, threads)
        bad = [acc and abs(est - p) >= params.epsilon - 1e-12 for acc, est, _ in runs]
        f, se = _freq(bad)
        f_abort, _ = _freq([not acc for acc, _, _ in runs])
        rows.append(
            {
                "attack_fraction": frac,
                "m": m,
                "bad_frequency": f,
                "std_error": se,
                "abort_frequency": f_abort,
                "bound": bound.total,
            }
        )
        asserts.check(f"bound_holds[m={m}]", f <= bound.total + SE_MULT * se, frequency=f, bound=bound.total)
    return {"p": p, "bound": bound.to_dict(), "rows": rows}, rows


def small_patterns(max_vertices: int) -> Iterable[MeasurementPattern]:
    """Every connected graph on up to ``max_vertices`` vertices, each I/O choice with a flow.

    One flow (the first found) per (graph, inputs, outputs); angles zero.
    """
    for n in range(1, max_vertices + 1):
        vs = list(range(n))
        all_edges = list(combinations(vs, 2))
        for k in range(len(all_edges) + 1):
            for edges in combinations(all_edges, k):
                g = Graph(vs, edges)
                if not g.is_connected():
                    continue
                for n_out in range(1, n + 1):
                    for outs in combinations(vs, n_out):
                        for n_in in range(0, n_out + 1):
                            for ins in combinations(vs, n_in):
                                flow = _find_flow(g, ins, outs)
                                if flow is not None:
                                    angles = {v: 0 for v in vs if v not in outs}
                                    yield MeasurementPattern(g, ins, outs, angles, flow)


def _find_flow(g: Graph, ins, outs) -> Flow | None:
    measured = [v for v in g.vertices if v not in outs]
    targets = [v for v in g.vertices if v not in ins]
    for image in permutations(targets, len(measured)):
        f = dict(zip(measured, image))
        if any(f[v] not in g.neighbors(v) for v in measured):
            continue
        for order in permutations(g.vertices):
            flow = Flow(f, order)
            if validate_flow(g, ins, outs, flow).ok:
                return flow
    return None


def _shifted(pattern: MeasurementPattern, shift: int) -> MeasurementPattern:
    return pattern.with_angles({v: (a + shift) % 8 for v, a in pattern.angles.items() if v not in pattern.outputs})


def _blindness_audit(cfg: ExperimentConfig, threads: int, asserts: _Assertions) -> tuple[dict, list[dict]]:
    max_v = cfg.options.get("max_vertices")
    pats = list(small_patterns(max_v)) if max_v else [cfg.pattern]
    rows = []
    for i, pat in enumerate(pats):
        # two distinct assignments: the pattern's own angles and a pi/4 shift
        rep = audit_blindness(pat, _shifted(pat, 1))
        rows.append(
            {
                "pattern": i,
                "vertices": len(pat.graph.vertices),
                "edges": json.dumps([list(e) for e in pat.graph.sorted_edges()]),
                "inputs": json.dumps(list(pat.inputs)),
                "outputs": json.dumps(list(pat.outputs)),
                "max_deviation_between": rep.max_deviation_between,
                "max_deviation_uniform": rep.max_deviation_uniform,
                "max_delta_marginal_error": rep.max_delta_marginal_error,
                "ok": rep.ok(),
            }
        )
    asserts.check("views_identical", all(r["ok"] for r in rows), patterns=len(rows))
    return {"patterns": len(rows), "rows": rows}, rows


def _real_vs_ideal(cfg: ExperimentConfig, threads: int, asserts: _Assertions) -> tuple[dict, list[dict]]:
    params = cfg.params
    pairs = map_trials(partial(_pair_trial, cfg.pattern, params, cfg.adversary, cfg.master_seed), cfg.trials, threads)
    real = [r for r, _ in pairs]
    ideal = [i for _, i in pairs]
    tvd_outcome = bounds.tvd_estimate([a for a, _ in real], [a for a, _ in ideal])
    tvd_full = bounds.tvd_estimate(real, ideal)
    differ = [r != i for r, i in pairs]
    f, se = _freq(differ)
    if params.gamma1 is not None and params.gamma2 is not None:
        limit = bounds.security_failure_bound(params).total
    elif cfg.adversary is None:
        limit = bounds.hoeffding_mean_bound(params.epsilon, params.N_c)
    else:
        limit = None
    if limit is not None:
        asserts.check("matched_seed_gap_within_bound", f <= limit + SE_MULT * se, frequency=f, bound=limit)
    result = {
        "tvd_outcome": tvd_outcome,
        "tvd_outcome_estimate": tvd_full,
        "matched_seed_disagreement": f,
        "std_error": se,
        "bound": limit,
    }
    return result, [result]


def _bound_tables(cfg: ExperimentConfig, threads: int, asserts: _Assertions) -> tuple[dict, list[dict]]:
    base = cfg.params
    rounds = cfg.options.get("rounds", [100, 200, 500, 1000, 2000, 5000, 10000, 20000])
    rows = []
    for n in rounds:
        prm = ProtocolParams(n, n, base.w, base.epsilon, base.k, base.gamma1, base.gamma2)
        rep = bounds.security_failure_bound(prm)
        rows.append({"N_c": n, "N_t": n, "hoeffding": bounds.hoeffding_mean_bound(base.epsilon, n), **rep.to_dict()})
    for col in ("hoeffding", "gamma1_term", "boundZ_term", "boundY_term_test", "boundY_term_binom", "total"):
        vals = [r[col] for r in rows]
        asserts.check(f"monotone[{col}]", all(a >= b for a, b in zip(vals, vals[1:])))
    return {"rows": rows}, rows


_RUNNERS = {
    "honest_acceptance": _honest_acceptance,
    "attack_detection": _attack_detection,
    "security_frequency": _security_frequency,
    "blindness_audit": _blindness_audit,
    "real_vs_ideal": _real_vs_ideal,
    "bound_tables": _bound_tables,
}


@dataclass
class ExperimentReport:
    config: dict
    results: dict
    table: list[dict]
    assertions: list[dict]
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def to_dict(self) -> dict:
        """Everything except wall-clock time, so the bytes are reproducible."""
        return {
            "version": __version__,
            "config": self.config,
            "passed": self.passed,
            "assertions": self.assertions,
            "results": self.results,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary_csv(self) -> str:
        buf = io.StringIO()
        if self.table:
            cols = list(self.table[0])
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for row in self.table:
                w.writerow({k: _fmt(row[k]) for k in cols})
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "summary.csv").write_text(self.summary_csv())
        (out / "timing.json").write_text(json.dumps({"elapsed_seconds": self.elapsed}) + "\n")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    start = time.perf_counter()
    asserts = _Assertions()
    results, table = _RUNNERS[config.kind](config, threads, asserts)
    return ExperimentReport(config.echo(), results, table, asserts.items, time.perf_counter() - start)


# --------------------------------------------------------------------------
# transcript replay


def replay_transcript(text: str, pattern: MeasurementPattern, *, strict: bool = False) -> list[dict]:
    """Re-run the client's checks on a recorded round.

    Test rounds: every trap equation.  Computation rounds: each delta is
    recomputed from the recorded secrets and answers, and the output decode
    is repeated.  Returns the mismatches; ``strict`` raises instead.
    """
    tr = RoundTranscript.from_jsonl(text)
    g = pattern.graph
    missing = [v for v in tr.order if v not in tr.delta or v not in tr.b]
    if missing or set(tr.order) != set(g.vertices):
        raise ParseError(f"transcript does not cover the pattern's vertices (missing {missing})")
    out: list[dict] = []
    try:
        if tr.kind == "test":
            plan = TestRoundPlan.from_dict(tr.secrets)
            for v in trap_mismatches(plan, g, tr.b):
                out.append({"type": "trap", "vertex": v})
            for v in sorted(plan.trap_set):
                want = (plan.trap_theta[v] + 4 * plan.trap_r[v]) % 8
                if tr.delta[v] != want:
                    out.append({"type": "delta", "vertex": v, "recorded": tr.delta[v], "expected": want})
        elif tr.kind == "computation":
            secrets = BlindingSecrets.from_dict(tr.secrets)
            for v in pattern.order:
                want = blind_angle(corrected_angle(pattern, v, tr.b, secrets.r), secrets, v)
                if tr.delta[v] != want:
                    out.append({"type": "delta", "vertex": v, "recorded": tr.delta[v], "expected": want})
            decoded = tuple(tr.b[v] ^ secrets.r[v] for v in pattern.outputs)
            if tr.outputs is not None and decoded != tr.outputs:
                out.append({"type": "decode", "recorded": list(tr.outputs), "expected": list(decoded)})
        else:
            raise ParseError(f"unknown round kind {tr.kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, VBOEError):
            raise
        raise ParseError(f"malformed client record: {exc!r}") from None
    if out and strict:
        raise MismatchFound(out)
    return out
