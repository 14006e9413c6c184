"""Blind delegation of a single pattern.

The client side of one UBQC round, the ideal BDQC resource, the
EPR-pair variant that splits the client into a simulator (talking to the
server) and a resource part (doing the computation), and the exact
blindness audit over all client secrets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Callable, Hashable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import quantum as qc
from .errors import ParseError, ServerTimeout
from .mbqc import Graph, MeasurementPattern, parity, update_angle
from .oracle import output_distribution


# --------------------------------------------------------------------------
# server contract


@dataclass(frozen=True)
class QubitHandle:
    """Reference to one qubit of the round's shared register."""

    register: qc.QubitRegister = field(repr=False)
    label: Hashable


class ServerInterface(Protocol):
    """What a server does in one round.

    The client hands over one qubit per vertex, asks for the graph
    entangling, then requests measurements one vertex at a time.  Nothing in
    these calls reveals whether the round is a test or a computation.
    """

    def receive_qubit(self, vertex: int, qubit: QubitHandle) -> None: ...

    def entangle(self) -> None: ...

    def measure(self, vertex: int, delta: int) -> int: ...


def _ask(server: ServerInterface, v: int, delta: int) -> int:
    b = server.measure(v, delta)
    if b is None or b not in (0, 1):
        raise ServerTimeout(f"server answered {b!r} for vertex {v}")
    return int(b)


# --------------------------------------------------------------------------
# secrets and transcripts


@dataclass(frozen=True)
class BlindingSecrets:
    a_init: Mapping[int, int]
    a_prop: Mapping[int, int]
    r: Mapping[int, int]
    theta: Mapping[int, int]

    def to_dict(self) -> dict:
        return {k: {str(v): int(x) for v, x in getattr(self, k).items()} for k in ("a_init", "a_prop", "r", "theta")}

    @classmethod
    def from_dict(cls, d: Mapping) -> BlindingSecrets:
        return cls(**{k: {int(v): int(x) for v, x in d[k].items()} for k in ("a_init", "a_prop", "r", "theta")})


def propagate_a(graph: Graph, a_init: Mapping[int, int]) -> dict[int, int]:
    return {v: parity(a_init, graph.neighbors(v)) for v in graph.vertices}


def sample_secrets(graph: Graph, inputs: Iterable[int], rng: np.random.Generator) -> BlindingSecrets:
    vs = graph.vertices
    ins = set(inputs)
    a_bits = rng.integers(0, 2, size=len(vs))
    r_bits = rng.integers(0, 2, size=len(vs))
    thetas = rng.integers(0, qc.ANGLE_UNITS, size=len(vs))
    a_init = {v: int(a_bits[i]) if v in ins else 0 for i, v in enumerate(vs)}
    return BlindingSecrets(
        a_init=a_init,
        a_prop=propagate_a(graph, a_init),
        r={v: int(r_bits[i]) for i, v in enumerate(vs)},
        theta={v: int(thetas[i]) for i, v in enumerate(vs)},
    )


def blind_angle(phi_prime: int, secrets: BlindingSecrets, v: int) -> int:
    """``delta = (-1)^{a_init} phi' + theta + (r + a_prop) pi`` (mod 8)."""
    signed = -phi_prime if secrets.a_init[v] else phi_prime
    return (signed + secrets.theta[v] + qc.PI * (secrets.r[v] + secrets.a_prop[v])) % qc.ANGLE_UNITS


def corrected_angle(pattern: MeasurementPattern, v: int, b: Mapping[int, int], r: Mapping[int, int]) -> int:
    """Adapted angle of ``v`` from the server's bits un-padded by ``r``."""
    d = pattern.deps[v]
    s_x = 0
    for j in d.s_x:
        s_x ^= b[j] ^ r[j]
    s_z = 0
    for j in d.s_z:
        s_z ^= b[j] ^ r[j]
    return update_angle(pattern.angles[v], s_x, s_z)


@dataclass
class RoundTranscript:
    """Everything the client knows about one delegated round.

    ``prepared`` holds the classical description of each qubit sent
    (``{"plus": theta}`` or ``{"basis": d}``); the server only ever gets the
    quantum state itself.  ``secrets`` is kind-specific client data.
    """

    kind: str
    order: tuple[int, ...]
    prepared: dict[int, dict] = field(default_factory=dict)
    delta: dict[int, int] = field(default_factory=dict)
    b: dict[int, int] = field(default_factory=dict)
    secrets: dict = field(default_factory=dict)
    color: int | None = None
    outputs: tuple[int, ...] | None = None
    passed: bool | None = None

    def messages(self) -> list[dict]:
        """Server-facing message log, identical in shape for every round kind."""
        msgs = [{"direction": "c->s", "type": "qubit", "vertex": v, "payload": None} for v in sorted(self.prepared)]
        msgs.append({"direction": "c->s", "type": "entangle", "vertex": None, "payload": None})
        for v in self.order:
            msgs.append({"direction": "c->s", "type": "delta", "vertex": v, "payload": self.delta[v]})
            msgs.append({"direction": "s->c", "type": "bit", "vertex": v, "payload": self.b[v]})
        return msgs

    def client_record(self) -> dict:
        return {
            "direction": "client",
            "type": "record",
            "vertex": None,
            "payload": {
                "kind": self.kind,
                "color": self.color,
                "order": list(self.order),
                "prepared": {str(v): d for v, d in self.prepared.items()},
                "secrets": self.secrets,
                "outputs": None if self.outputs is None else list(self.outputs),
                "passed": self.passed,
            },
        }

    def to_jsonl(self) -> str:
        lines = [self.client_record(), *self.messages()]
        return "".join(json.dumps(x, sort_keys=True) + "\n" for x in lines)

    @classmethod
    def from_jsonl(cls, text: str) -> RoundTranscript:
        try:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {exc.lineno}: {exc.msg}") from None
        if not rows or rows[0].get("direction") != "client":
            raise ParseError("first line must be the client record")
        rec = rows[0]["payload"]
        t = cls(
            kind=rec["kind"],
            order=tuple(rec["order"]),
            prepared={int(v): d for v, d in rec["prepared"].items()},
            secrets=rec["secrets"],
            color=rec["color"],
            outputs=None if rec["outputs"] is None else tuple(rec["outputs"]),
            passed=rec["passed"],
        )
        for i, row in enumerate(rows[1:], 2):
            typ = row.get("type")
            if typ == "delta":
                t.delta[int(row["vertex"])] = int(row["payload"])
            elif typ == "bit":
                t.b[int(row["vertex"])] = int(row["payload"])
            elif typ not in ("qubit", "entangle"):
                raise ParseError(f"line {i}: unknown message type {typ!r}")
        return t


# --------------------------------------------------------------------------
# the UBQC round


def run_ubqc_round(
    pattern: MeasurementPattern,
    server: ServerInterface,
    rng: np.random.Generator,
    input_state: qc.StateVector | None = None,
) -> tuple[RoundTranscript, tuple[int, ...]]:
    """One blind computation round; returns the transcript and ``b xor r`` on the outputs."""
    g = pattern.graph
    secrets = sample_secrets(g, pattern.inputs, rng)
    reg = qc.QubitRegister()
    tr = RoundTranscript(kind="computation", order=pattern.order)

    if pattern.inputs:
        if input_state is None:
            input_state = qc.plus_state(len(pattern.inputs))
        first, *rest = pattern.inputs
        reg.add(first, input_state, *rest)
        for v in pattern.inputs:
            if secrets.a_init[v]:
                reg.pauli(v, "X")
            reg.rz(v, secrets.theta[v])
    for v in g.vertices:
        if v in pattern.inputs:
            tr.prepared[v] = {"input": secrets.theta[v], "x": secrets.a_init[v]}
        else:
            reg.add(v, qc.prepare_qubit(qc.PlusTheta(secrets.theta[v])))
            tr.prepared[v] = {"plus": secrets.theta[v]}
    for v in g.vertices:
        server.receive_qubit(v, QubitHandle(reg, v))
    server.entangle()

    for v in pattern.order:
        phi_prime = corrected_angle(pattern, v, tr.b, secrets.r)
        delta = blind_angle(phi_prime, secrets, v)
        tr.delta[v] = delta
        tr.b[v] = _ask(server, v, delta)

    out = tuple(tr.b[v] ^ secrets.r[v] for v in pattern.outputs)
    tr.secrets = secrets.to_dict()
    tr.outputs = out
    return tr, out


# --------------------------------------------------------------------------
# ideal resources

OutputMap = Callable[[tuple[int, ...], np.random.Generator], tuple[int, ...]]


@lru_cache(maxsize=256)
def _cached_distribution(pattern: MeasurementPattern) -> tuple[tuple[tuple[int, ...], ...], np.ndarray]:
    dist = output_distribution(pattern)
    keys = tuple(sorted(dist))
    probs = np.array([dist[k] for k in keys])
    return keys, probs / probs.sum()


def sample_correct_output(pattern: MeasurementPattern, rng: np.random.Generator) -> tuple[int, ...]:
    keys, probs = _cached_distribution(pattern)
    return keys[int(rng.choice(len(keys), p=probs))]


def bdqc_ideal(
    pattern: MeasurementPattern, rng: np.random.Generator, deviation: OutputMap | None = None
) -> tuple[int, ...]:
    """Ideal blind delegation: correct output, optionally pushed through a classical post-map.

    The post-map receives the correct output and a private random source (the
    ancilla) and returns the bits delivered to the client.
    """
    out = sample_correct_output(pattern, rng)
    if deviation is not None:
        out = tuple(int(x) for x in deviation(out, rng))
    return out


def constant_map(value: Sequence[int]) -> OutputMap:
    return lambda out, rng: tuple(value)


def flip_map(out: tuple[int, ...], rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(1 - x for x in out)


# --------------------------------------------------------------------------
# EPR-split construction


def resource_angle(delta: int, phi_prime: int, a_init: int, a_prop: int) -> int:
    """Rotation the resource part applies before measuring its half.

    The sign ``(-1)^{a_init}`` on the whole angle undoes the X twist that the
    input teleportation leaves on the server's half.
    """
    base = (delta - qc.PI * a_prop) % qc.ANGLE_UNITS
    return ((-base if a_init else base) - phi_prime) % qc.ANGLE_UNITS


_BELL = qc.StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2))


def epr_split_round(
    pattern: MeasurementPattern,
    server: ServerInterface,
    rng: np.random.Generator,
    input_state: qc.StateVector | None = None,
) -> tuple[RoundTranscript, tuple[int, ...]]:
    """UBQC run as simulator + resource: the server only ever sees EPR halves and uniform angles."""
    g = pattern.graph
    reg = qc.QubitRegister()
    tr = RoundTranscript(kind="computation", order=pattern.order)

    # simulator part
    for v in g.vertices:
        reg.add(("srv", v), _BELL, ("res", v))
        tr.prepared[v] = {"epr": True}
    for v in g.vertices:
        server.receive_qubit(v, QubitHandle(reg, ("srv", v)))
    server.entangle()
    deltas = rng.integers(0, qc.ANGLE_UNITS, size=len(g.vertices))
    delta = {v: int(deltas[i]) for i, v in enumerate(g.vertices)}
    for v in pattern.order:
        tr.delta[v] = delta[v]
        tr.b[v] = _ask(server, v, delta[v])

    # resource part
    a_init = {v: 0 for v in g.vertices}
    if pattern.inputs:
        if input_state is None:
            input_state = qc.plus_state(len(pattern.inputs))
        first, *rest = [("in", v) for v in pattern.inputs]
        reg.add(first, input_state, *rest)
        for v in pattern.inputs:
            reg.cnot(("in", v), ("res", v))
            a_init[v] = reg.measure_z(("res", v), rng)
    a_prop = propagate_a(g, a_init)
    r: dict[int, int] = {}
    for v in pattern.order:
        phi_prime = corrected_angle(pattern, v, tr.b, r)
        label = ("in", v) if v in pattern.inputs else ("res", v)
        reg.rz(label, resource_angle(delta[v], phi_prime, a_init[v], a_prop[v]))
        r[v] = reg.measure(label, 0, rng)  # H then Z measurement == X measurement

    out = tuple(tr.b[v] ^ r[v] for v in pattern.outputs)
    tr.secrets = {"a_init": a_init, "a_prop": a_prop, "r": r}
    tr.outputs = out
    return tr, out


# --------------------------------------------------------------------------
# exact blindness audit


def _plus_projectors() -> np.ndarray:
    out = np.empty((qc.ANGLE_UNITS, 2, 2), dtype=complex)
    for k in range(qc.ANGLE_UNITS):
        psi = qc.prepare_qubit(qc.PlusTheta(k)).amps
        out[k] = np.outer(psi, psi.conj())
    return out


_PLUS_PROJ = _plus_projectors()


def server_view(pattern: MeasurementPattern, answers: Mapping[int, int]) -> np.ndarray:
    """Exact classical-quantum state seen by a server that answers ``answers``.

    Returns an array of shape ``(8**n, 2**n, 2**n)``: entry ``[i]`` is the
    (unnormalised) joint density of the qubits received, given the delta
    string with mixed-radix index ``i`` (vertices in id order).  Enumerates
    every ``a_init``, ``r`` and ``theta``; inputs are ``|+>``.
    """
    g = pattern.graph
    vs = g.vertices
    n = len(vs)
    ins = pattern.inputs
    weight = 1.0 / (2 ** len(ins) * 2**n * qc.ANGLE_UNITS**n)
    total = np.zeros((qc.ANGLE_UNITS**n, 1 << n, 1 << n), dtype=complex)
    shifts = np.arange(qc.ANGLE_UNITS)
    for a_bits in product((0, 1), repeat=len(ins)):
        a_init = {v: 0 for v in vs}
        a_init.update(zip(ins, a_bits))
        a_prop = propagate_a(g, a_init)
        for r_bits in product((0, 1), repeat=n):
            r = dict(zip(vs, r_bits))
            offset = {}
            for v in pattern.order:
                phi_prime = corrected_angle(pattern, v, answers, r)
                offset[v] = ((-phi_prime if a_init[v] else phi_prime) + qc.PI * (r[v] + a_prop[v])) % 8
            # delta_v = offset_v + theta_v, so the state sent is |+_{delta_v - offset_v}>
            acc = np.ones((1, 1, 1), dtype=complex)
            for v in vs:
                m = _PLUS_PROJ[(shifts - offset[v]) % 8]
                acc = (acc[:, None, :, None, :, None] * m[None, :, None, :, None, :]).reshape(
                    acc.shape[0] * 8, acc.shape[1] * 2, acc.shape[2] * 2
                )
            total += acc
    return total * weight


def uniform_view(n: int) -> np.ndarray:
    """The view a server gets from a resource that leaks nothing: uniform deltas, maximally mixed qubits."""
    d = 1 << n
    return np.broadcast_to(np.eye(d, dtype=complex) / (d * qc.ANGLE_UNITS**n), (qc.ANGLE_UNITS**n, d, d)).copy()


@dataclass(frozen=True)
class BlindnessReport:
    max_deviation_between: float
    max_deviation_uniform: float
    max_delta_marginal_error: float

    def ok(self, tol: float = qc.TOL) -> bool:
        return max(self.max_deviation_between, self.max_deviation_uniform, self.max_delta_marginal_error) <= tol


def audit_blindness(pattern_a: MeasurementPattern, pattern_b: MeasurementPattern) -> BlindnessReport:
    """Compare the exact server views of two patterns sharing graph, I/O and flow.

    Every deterministic answer string is tried; adaptive answer strategies
    are covered because the view is the same for every fixed string.
    """
    if (pattern_a.graph, pattern_a.inputs, pattern_a.outputs, pattern_a.flow) != (
        pattern_b.graph,
        pattern_b.inputs,
        pattern_b.outputs,
        pattern_b.flow,
    ):
        raise ValueError("blindness compares patterns with the same public structure only")
    vs = pattern_a.graph.vertices
    n = len(vs)
    ref = uniform_view(n)
    scale = qc.ANGLE_UNITS**n  # compare conditional states given delta, not joint weights
    between = uniform = marginal = 0.0
    for bits in product((0, 1), repeat=n):
        answers = dict(zip(vs, bits))
        va = server_view(pattern_a, answers)
        vb = server_view(pattern_b, answers)
        between = max(between, scale * float(np.abs(va - vb).max()))
        uniform = max(uniform, scale * float(np.abs(va - ref).max()), scale * float(np.abs(vb - ref).max()))
        traces = np.einsum("kii->k", va).real
        marginal = max(marginal, float(np.abs(traces - 1.0 / qc.ANGLE_UNITS**n).max()))
    return BlindnessReport(between, uniform, marginal)
