"""Test rounds: colouring, trap/dummy plans, trap checks and the RVBQC verdict."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from . import quantum as qc
from .errors import NotATrap
from .mbqc import Graph
from .ubqc import QubitHandle, RoundTranscript, ServerInterface, _ask


@dataclass(frozen=True)
class Coloring:
    classes: tuple[frozenset[int], ...]

    @property
    def K(self) -> int:
        return len(self.classes)

    def color_of(self, v: int) -> int:
        for i, c in enumerate(self.classes):
            if v in c:
                return i
        raise KeyError(v)

    def is_proper(self, graph: Graph) -> bool:
        seen: set[int] = set()
        for c in self.classes:
            if not c or c & seen:
                return False
            seen |= c
            if any(u in c and w in c for u, w in graph.edges):
                return False
        return seen == set(graph.vertices)


def greedy_coloring(graph: Graph) -> Coloring:
    """Greedy colouring, vertices by descending degree then ascending id."""
    color: dict[int, int] = {}
    for v in sorted(graph.vertices, key=lambda v: (-graph.degree(v), v)):
        used = {color[w] for w in graph.neighbors(v) if w in color}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    K = max(color.values(), default=-1) + 1
    return Coloring(tuple(frozenset(v for v, c in color.items() if c == k) for k in range(K)))


@dataclass(frozen=True)
class TestRoundPlan:
    __test__ = False  # not a pytest class

    color: int
    trap_set: frozenset[int]
    dummy_bits: Mapping[int, int]
    trap_theta: Mapping[int, int]
    trap_r: Mapping[int, int]

    def to_dict(self) -> dict:
        return {
            "color": self.color,
            "traps": sorted(self.trap_set),
            "d": {str(v): b for v, b in sorted(self.dummy_bits.items())},
            "theta": {str(v): t for v, t in sorted(self.trap_theta.items())},
            "r": {str(v): b for v, b in sorted(self.trap_r.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> TestRoundPlan:
        return cls(
            color=int(d["color"]),
            trap_set=frozenset(int(v) for v in d["traps"]),
            dummy_bits={int(v): int(b) for v, b in d["d"].items()},
            trap_theta={int(v): int(t) for v, t in d["theta"].items()},
            trap_r={int(v): int(b) for v, b in d["r"].items()},
        )


def build_test_round(graph: Graph, coloring: Coloring, rng: np.random.Generator) -> TestRoundPlan:
    n = len(graph.vertices)
    j = int(rng.integers(0, coloring.K))
    d_bits = rng.integers(0, 2, size=n)
    thetas = rng.integers(0, qc.ANGLE_UNITS, size=n)
    r_bits = rng.integers(0, 2, size=n)
    traps = coloring.classes[j]
    dummy, theta, r = {}, {}, {}
    for i, v in enumerate(graph.vertices):
        if v in traps:
            theta[v] = int(thetas[i])
            r[v] = int(r_bits[i])
        else:
            dummy[v] = int(d_bits[i])
    return TestRoundPlan(j, traps, dummy, theta, r)


def expected_trap_bit(plan: TestRoundPlan, graph: Graph, v: int) -> int:
    """``r_v`` xor the parity of the neighbouring dummies."""
    if v not in plan.trap_set:
        raise NotATrap(f"vertex {v} is not a trap in this plan")
    d = 0
    for k in graph.neighbors(v):
        d ^= plan.dummy_bits.get(k, 0)
    return plan.trap_r[v] ^ d


def run_test_round(
    plan: TestRoundPlan,
    graph: Graph,
    server: ServerInterface,
    rng: np.random.Generator,
    order: Sequence[int] | None = None,
) -> tuple[bool, RoundTranscript]:
    """Send traps and dummies, collect answers, check every trap.

    ``order`` should be the pattern's measurement order so that test and
    computation rounds request measurements in the same sequence.
    """
    order = tuple(graph.vertices if order is None else order)
    reg = qc.QubitRegister()
    tr = RoundTranscript(kind="test", order=order, color=plan.color)
    for v in graph.vertices:
        if v in plan.trap_set:
            reg.add(v, qc.prepare_qubit(qc.PlusTheta(plan.trap_theta[v])))
            tr.prepared[v] = {"plus": plan.trap_theta[v]}
        else:
            reg.add(v, qc.prepare_qubit(qc.Computational(plan.dummy_bits[v])))
            tr.prepared[v] = {"basis": plan.dummy_bits[v]}
    for v in graph.vertices:
        server.receive_qubit(v, QubitHandle(reg, v))
    server.entangle()
    dummy_deltas = rng.integers(0, qc.ANGLE_UNITS, size=len(graph.vertices))
    for i, v in enumerate(order):
        if v in plan.trap_set:
            delta = (plan.trap_theta[v] + qc.PI * plan.trap_r[v]) % qc.ANGLE_UNITS
        else:
            delta = int(dummy_deltas[i])
        tr.delta[v] = delta
        tr.b[v] = _ask(server, v, delta)
    passed = all(tr.b[v] == expected_trap_bit(plan, graph, v) for v in plan.trap_set)
    tr.secrets = plan.to_dict()
    tr.passed = passed
    return passed, tr


def trap_mismatches(plan: TestRoundPlan, graph: Graph, answers: Mapping[int, int]) -> list[int]:
    return sorted(v for v in plan.trap_set if answers[v] != expected_trap_bit(plan, graph, v))


@dataclass(frozen=True)
class Accept:
    value: object


@dataclass(frozen=True)
class Reject:
    reason: str = ""


def rvbqc_accept(failed_tests: int, w_count: int, outputs: Sequence) -> Accept | Reject:
    """Threshold on failed tests, then strict majority over computation outputs."""
    if failed_tests >= w_count:
        return Reject(f"{failed_tests} failed test rounds >= threshold {w_count}")
    if not outputs:
        return Reject("no computation rounds")
    counts: dict = {}
    for y in outputs:
        counts[y] = counts.get(y, 0) + 1
    y, c = max(counts.items(), key=lambda kv: kv[1])
    if 2 * c > len(outputs):
        return Accept(y)
    return Reject("no strict majority")


# --------------------------------------------------------------------------
# exact detection probabilities

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_PAULI_MATS["Y"] = _PAULI_MATS["Z"] @ _PAULI_MATS["X"]


def _rz(k: np.ndarray) -> np.ndarray:
    """Batch of Rz matrices, shape (B, 2, 2)."""
    out = np.zeros((len(k), 2, 2), dtype=complex)
    out[:, 0, 0] = 1
    out[:, 1, 1] = np.exp(1j * np.pi * np.asarray(k) / 4)
    return out


def _bras(delta: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    """Batch of <(-1)^outcome _delta|, shape (B, 2)."""
    out = np.empty((len(delta), 2), dtype=complex)
    out[:, 0] = 1 / np.sqrt(2)
    out[:, 1] = (1 - 2 * np.asarray(outcome)) * np.exp(-1j * np.pi * np.asarray(delta) / 4) / np.sqrt(2)
    return out


def exact_failure_probability(
    graph: Graph, coloring: Coloring, vertex: int, pauli: str, frame: str = "measurement"
) -> float:
    """Probability that a test round fails under one single-vertex Pauli deviation.

    Exhaustive over the colour choice, dummy bits, trap angles and paddings
    and, when the attacked vertex is a dummy, its measurement angle.  Built on
    batched dense amplitudes independently of the register code.
    """
    vs = list(graph.vertices)
    n = len(vs)
    pos = {v: i for i, v in enumerate(vs)}
    sign = np.ones((2,) * n)
    for u, w in graph.edges:
        idx = [slice(None)] * n
        idx[pos[u]] = 1
        idx[pos[w]] = 1
        sign[tuple(idx)] *= -1
    P = _PAULI_MATS[pauli]
    fail = 0.0
    for j, traps in enumerate(coloring.classes):
        traps = sorted(traps)
        dummies = [v for v in vs if v not in traps]
        att_dummy = vertex in dummies
        axes = [
            *(range(2) for _ in dummies),  # d
            *(range(8) for _ in traps),  # theta
            *(range(2) for _ in traps),  # r
            *([range(8)] if att_dummy else []),  # delta of the attacked dummy
        ]
        combos = np.array(list(product(*axes)), dtype=int).reshape(-1, len(axes))
        B = len(combos)
        nd, nt = len(dummies), len(traps)
        d = dict(zip(dummies, combos[:, :nd].T))
        th = dict(zip(traps, combos[:, nd : nd + nt].T))
        r = dict(zip(traps, combos[:, nd + nt : nd + 2 * nt].T))
        delta = {t: (th[t] + 4 * r[t]) % 8 for t in traps}
        if att_dummy:
            delta[vertex] = combos[:, -1]

        psi = np.ones((B,), dtype=complex)
        for v in vs:
            q = np.zeros((B, 2), dtype=complex)
            if v in d:
                q[np.arange(B), d[v]] = 1
            else:
                q[:, 0] = 1 / np.sqrt(2)
                q[:, 1] = np.exp(1j * np.pi * th[v] / 4) / np.sqrt(2)
            psi = (psi[..., None] * q.reshape((B,) + (1,) * (psi.ndim - 1) + (2,)))
        psi = psi * sign  # CZ on every edge

        if pauli != "I":
            if frame == "measurement":
                rz = _rz(delta[vertex])
                D = rz @ P @ np.conj(rz).transpose(0, 2, 1)
            else:
                D = np.broadcast_to(P, (B, 2, 2))
            ax = 1 + pos[vertex]
            psi = np.moveaxis(np.einsum("bij,b...j->b...i", D, np.moveaxis(psi, ax, -1)), -1, ax)

        # project every trap onto its expected outcome; dummies are traced out
        for t in sorted(traps, key=lambda t: -pos[t]):
            parity = np.zeros(B, dtype=int)
            for k in graph.neighbors(t):
                parity ^= d[k]
            bra = _bras(delta[t], r[t] ^ parity)
            psi = np.einsum("bj,b...j->b...", bra, np.moveaxis(psi, 1 + pos[t], -1))
        p_pass = (np.abs(psi.reshape(B, -1)) ** 2).sum(axis=1)
        fail += (1 - p_pass.mean()) / coloring.K
    return float(fail)
