"""Graphs, flows and measurement patterns, plus the unblinded delegated run.

Vertices are non-negative integers.  A pattern measures every vertex,
outputs included (classical-output patterns), in the explicit total order
stored on its :class:`Flow`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import quantum as qc
from .errors import DimensionMismatch, InvalidFlow, PatternFormatError, UnknownVertex


@dataclass(frozen=True)
class Graph:
    vertices: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    _adj: Mapping[int, frozenset[int]] = field(init=False, repr=False, compare=False)

    def __init__(self, vertices: Iterable[int], edges: Iterable[Iterable[int]] = ()):
        vs = tuple(sorted({int(v) for v in vertices}))
        es = set()
        for e in edges:
            u, v = (int(x) for x in e)
            if u == v:
                raise ValueError(f"self-loop on vertex {u}")
            if u not in vs or v not in vs:
                raise UnknownVertex(f"edge ({u}, {v}) references a vertex not in the graph")
            es.add((min(u, v), max(u, v)))
        adj: dict[int, set[int]] = {v: set() for v in vs}
        for u, v in es:
            adj[u].add(v)
            adj[v].add(u)
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "edges", frozenset(es))
        object.__setattr__(self, "_adj", {v: frozenset(n) for v, n in adj.items()})

    def neighbors(self, v: int) -> frozenset[int]:
        try:
            return self._adj[v]
        except KeyError:
            raise UnknownVertex(v) from None

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        seen = {self.vertices[0]}
        stack = [self.vertices[0]]
        while stack:
            for w in self._adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)

    @classmethod
    def path(cls, n: int, start: int = 0) -> Graph:
        vs = range(start, start + n)
        return cls(vs, [(v, v + 1) for v in vs[:-1]])


@dataclass(frozen=True)
class Flow:
    """Correction function ``f`` and a total measurement order refining the flow order."""

    f: Mapping[int, int]
    order: tuple[int, ...]

    def __init__(self, f: Mapping[int, int], order: Iterable[int]):
        object.__setattr__(self, "f", dict(sorted((int(k), int(v)) for k, v in f.items())))
        object.__setattr__(self, "order", tuple(int(v) for v in order))

    def __hash__(self):
        return hash((tuple(self.f.items()), self.order))

    def rank(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.order)}


@dataclass(frozen=True)
class FlowReport:
    violations: tuple[tuple[str, int | None, str], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def conditions_failed(self) -> set[str]:
        return {c for c, _, _ in self.violations}


def validate_flow(graph: Graph, inputs: Iterable[int], outputs: Iterable[int], flow: Flow) -> FlowReport:
    """Check the three flow conditions against the stored total order.

    Violations are tagged ``"domain"``, ``"order"``, ``"cond1"``, ``"cond2"``
    or ``"cond3"``.
    """
    V = set(graph.vertices)
    I, O = set(inputs), set(outputs)
    bad: list[tuple[str, int | None, str]] = []

    if sorted(flow.order) != sorted(V):
        bad.append(("order", None, f"order {flow.order} is not a permutation of V"))
        return FlowReport(tuple(bad))
    if set(flow.f) != V - O:
        bad.append(("domain", None, f"f is defined on {sorted(flow.f)}, expected V\\O = {sorted(V - O)}"))
    for v, fv in flow.f.items():
        if fv not in V - I:
            bad.append(("domain", v, f"f({v}) = {fv} is not in V\\I"))

    rank = flow.rank()
    for v, fv in flow.f.items():
        if v not in V or fv not in V:
            continue
        if (min(v, fv), max(v, fv)) not in graph.edges:
            bad.append(("cond1", v, f"({v}, {fv}) is not an edge"))
        if not rank[v] < rank[fv]:
            bad.append(("cond2", v, f"{v} is not measured before f({v}) = {fv}"))
        for w in graph.neighbors(fv) - {v}:
            if not rank[v] < rank[w]:
                bad.append(("cond3", v, f"neighbour {w} of f({v}) = {fv} precedes {v}"))
    return FlowReport(tuple(bad))


@dataclass(frozen=True)
class DependencySets:
    s_x: frozenset[int]
    s_z: frozenset[int]


@dataclass(frozen=True)
class MeasurementPattern:
    graph: Graph
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    angles: Mapping[int, int]
    flow: Flow

    def __init__(
        self,
        graph: Graph,
        inputs: Iterable[int],
        outputs: Iterable[int],
        angles: Mapping[int, int],
        flow: Flow,
        *,
        check: bool = True,
    ):
        ins = tuple(sorted(int(v) for v in inputs))
        outs = tuple(sorted(int(v) for v in outputs))
        full = {v: 0 for v in outs}  # output angle defaults to 0 (X basis)
        full.update({int(v): qc.angle(a) for v, a in angles.items()})
        object.__setattr__(self, "graph", graph)
        object.__setattr__(self, "inputs", ins)
        object.__setattr__(self, "outputs", outs)
        object.__setattr__(self, "angles", dict(sorted(full.items())))
        object.__setattr__(self, "flow", flow)
        if check:
            self.check()

    def __hash__(self):
        return hash((self.graph, self.inputs, self.outputs, tuple(self.angles.items()), self.flow))

    def check(self) -> None:
        V = set(self.graph.vertices)
        for name, s in (("inputs", self.inputs), ("outputs", self.outputs)):
            if not set(s) <= V:
                raise InvalidFlow(f"{name} {sorted(set(s) - V)} are not graph vertices")
        missing = V - set(self.angles)
        if missing:
            raise InvalidFlow(f"no angle for vertices {sorted(missing)}")
        if set(self.angles) - V:
            raise UnknownVertex(f"angles given for unknown vertices {sorted(set(self.angles) - V)}")
        report = validate_flow(self.graph, self.inputs, self.outputs, self.flow)
        if not report.ok:
            raise InvalidFlow("; ".join(msg for _, _, msg in report.violations))

    @property
    def order(self) -> tuple[int, ...]:
        return self.flow.order

    def with_angles(self, angles: Mapping[int, int]) -> MeasurementPattern:
        return MeasurementPattern(self.graph, self.inputs, self.outputs, angles, self.flow)

    @cached_property
    def deps(self) -> dict[int, DependencySets]:
        return {v: dependency_sets(self, v) for v in self.graph.vertices}

    def dependencies(self) -> dict[int, DependencySets]:
        return self.deps


def dependency_sets(pattern: MeasurementPattern, v: int) -> DependencySets:
    """X and Z dependency sets of ``v``.

    ``S_Z`` excludes ``v`` itself: ``v`` always neighbours ``f(v)``, and a
    qubit cannot depend on its own outcome.
    """
    g = pattern.graph
    if v not in g.vertices:
        raise UnknownVertex(v)
    f = pattern.flow.f
    s_x = frozenset(j for j, fj in f.items() if fj == v)
    s_z = frozenset(j for j, fj in f.items() if j != v and v in g.neighbors(fj))
    return DependencySets(s_x, s_z)


def update_angle(phi: int, s_x: int, s_z: int) -> int:
    """Adapted angle ``(-1)^{s_x} phi + s_z pi``."""
    return ((-phi if s_x & 1 else phi) + qc.PI * (s_z & 1)) % qc.ANGLE_UNITS


def parity(bits: Mapping[int, int], among: Iterable[int]) -> int:
    s = 0
    for j in among:
        s ^= bits[j]
    return s


def graph_state_register(pattern: MeasurementPattern, input_state: qc.StateVector) -> qc.QubitRegister:
    """Register labelled by vertex: inputs from ``input_state``, ``|+>`` elsewhere, then edge CZs."""
    if input_state.n != len(pattern.inputs):
        raise DimensionMismatch(f"input state has {input_state.n} qubits, pattern has {len(pattern.inputs)} inputs")
    reg = qc.QubitRegister()
    if pattern.inputs:
        first, *rest = pattern.inputs
        reg.add(first, input_state, *rest)
    plus = qc.prepare_qubit(qc.PlusTheta(0))
    for v in pattern.graph.vertices:
        if v not in pattern.inputs:
            reg.add(v, plus)
    for u, w in pattern.graph.sorted_edges():
        reg.cz(u, w)
    return reg


def default_input(pattern: MeasurementPattern) -> qc.StateVector:
    return qc.plus_state(len(pattern.inputs))


def run_dmbqc(
    pattern: MeasurementPattern,
    input_state: qc.StateVector | None,
    rng: np.random.Generator,
    *,
    return_all: bool = False,
) -> tuple[int, ...] | dict[int, int]:
    """Execute the pattern unblinded; return output bits ordered by vertex id."""
    if input_state is None:
        input_state = default_input(pattern)
    reg = graph_state_register(pattern, input_state)
    deps = pattern.dependencies()
    bits: dict[int, int] = {}
    for v in pattern.order:
        d = deps[v]
        phi = update_angle(pattern.angles[v], parity(bits, d.s_x), parity(bits, d.s_z))
        bits[v] = reg.measure(v, phi, rng)
    if return_all:
        return bits
    return tuple(bits[v] for v in pattern.outputs)


def branch_output_distribution(
    pattern: MeasurementPattern, input_state: qc.StateVector, branch: Mapping[int, int]
) -> tuple[float, dict[tuple[int, ...], float]]:
    """Exact output distribution conditioned on fixed non-output outcomes.

    Returns the branch probability and the conditional distribution over output
    bit strings (ordered by vertex id).  Used to check that the adaptive angle
    updates make the output independent of the branch.
    """
    reg = graph_state_register(pattern, input_state)
    deps = pattern.dependencies()
    bits: dict[int, int] = {}
    state = reg.state()
    labels = list(reg.labels)
    p_branch = 1.0
    outs_in_order = [v for v in pattern.order if v in pattern.outputs]
    for v in pattern.order:
        if v in pattern.outputs:
            continue
        d = deps[v]
        phi = update_angle(pattern.angles[v], parity(bits, d.s_x), parity(bits, d.s_z))
        p, nxt = qc.project(state, labels.index(v), phi, branch[v])
        p_branch *= p
        if nxt is None:
            return 0.0, {}
        state = nxt
        labels.remove(v)
        bits[v] = branch[v]
    dist: dict[tuple[int, ...], float] = {}
    for outs in product((0, 1), repeat=len(outs_in_order)):
        st, lb, prob = state, list(labels), 1.0
        local = dict(bits)
        for v, b in zip(outs_in_order, outs):
            d = deps[v]
            phi = update_angle(pattern.angles[v], parity(local, d.s_x), parity(local, d.s_z))
            p, st = qc.project(st, lb.index(v), phi, b)
            prob *= p
            if st is None:
                break
            lb.remove(v)
            local[v] = b
        if prob > 0:
            key = tuple(local[v] for v in pattern.outputs)
            dist[key] = dist.get(key, 0.0) + prob
    return p_branch, dist


# --------------------------------------------------------------------------
# pattern files

_PATTERN_KEYS = {"vertices", "edges", "inputs", "outputs", "angles", "flow", "order"}


def _line_of(text: str, needle: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def pattern_from_json(text: str) -> MeasurementPattern:
    """Parse the JSON pattern format.

    ``{"vertices": [..], "edges": [[u, v], ..], "inputs": [..], "outputs": [..],
    "angles": {"v": k, ..}, "flow": {"v": f(v), ..}, "order": [..]}``

    Angles are integers mod 8 (units of pi/4).  Output angles may be omitted
    and default to 0.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PatternFormatError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise PatternFormatError("top level must be an object", 1)
    unknown = set(doc) - _PATTERN_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise PatternFormatError(f"unknown key {k!r}", _line_of(text, f'"{k}"'))
    missing = _PATTERN_KEYS - {"angles"} - set(doc)
    if missing:
        raise PatternFormatError(f"missing key(s) {sorted(missing)}", 1)

    def err(key: str, msg: str) -> PatternFormatError:
        return PatternFormatError(f"{key}: {msg}", _line_of(text, f'"{key}"'))

    def int_list(key: str) -> list[int]:
        val = doc[key]
        if not isinstance(val, list) or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in val):
            raise err(key, "expected a list of non-negative integers")
        return val

    def int_map(key: str) -> dict[int, int]:
        val = doc.get(key, {})
        if not isinstance(val, dict):
            raise err(key, "expected an object mapping vertex ids to integers")
        out = {}
        for k, x in val.items():
            if not k.isdigit() or not isinstance(x, int) or isinstance(x, bool):
                raise err(key, f"bad entry {k!r}: {x!r}")
            out[int(k)] = x
        return out

    vertices = int_list("vertices")
    if len(set(vertices)) != len(vertices):
        raise err("vertices", "duplicate vertex id")
    edges = doc["edges"]
    if not isinstance(edges, list) or not all(
        isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e) for e in edges
    ):
        raise err("edges", "expected a list of [u, v] integer pairs")
    inputs, outputs, order = int_list("inputs"), int_list("outputs"), int_list("order")
    for key, lst in (("inputs", inputs), ("outputs", outputs)):
        if lst != sorted(set(lst)):
            raise err(key, "must be a sorted list without duplicates")
    angles, f = int_map("angles"), int_map("flow")
    for v, a in angles.items():
        if not 0 <= a < 8:
            raise err("angles", f"angle for vertex {v} must be in 0..7, got {a}")
    try:
        graph = Graph(vertices, edges)
    except (ValueError, UnknownVertex) as exc:
        raise err("edges", str(exc)) from None
    try:
        return MeasurementPattern(graph, inputs, outputs, angles, Flow(f, order))
    except (InvalidFlow, UnknownVertex) as exc:
        key = "angles" if "angle" in str(exc) else "flow"
        raise err(key, str(exc)) from None


def pattern_to_json(pattern: MeasurementPattern) -> str:
    doc = {
        "vertices": list(pattern.graph.vertices),
        "edges": [list(e) for e in pattern.graph.sorted_edges()],
        "inputs": list(pattern.inputs),
        "outputs": list(pattern.outputs),
        "angles": {str(v): a for v, a in pattern.angles.items()},
        "flow": {str(v): fv for v, fv in pattern.flow.f.items()},
        "order": list(pattern.order),
    }
    return json.dumps(doc, indent=2) + "\n"


def load_pattern(path: str | Path) -> MeasurementPattern:
    return pattern_from_json(Path(path).read_text())


def path_pattern(angles: Iterable[int], inputs: int = 1, start: int = 0) -> MeasurementPattern:
    """Line-graph pattern with the shift flow ``f(v) = v + 1``.

    ``inputs`` is 0 or 1 (the first vertex); the last vertex is the output.
    """
    angles = list(angles)
    n = len(angles)
    g = Graph.path(n, start)
    vs = g.vertices
    f = {v: v + 1 for v in vs[:-1]}
    return MeasurementPattern(g, vs[:inputs], vs[-1:], dict(zip(vs, angles)), Flow(f, vs))
