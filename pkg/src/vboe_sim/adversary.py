"""Server strategies.

Every server is built for a single round and knows only the public graph
and its round index.  Deviations are chosen from round indices alone, so
no strategy can condition on whether a round is a test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from . import quantum as qc
from .errors import ProtocolOrderViolation, UnknownVertex
from .mbqc import Graph
from .ubqc import QubitHandle

PAULIS = ("I", "X", "Y", "Z")


class HonestServer:
    """Entangles exactly the graph edges and measures exactly at the requested angle."""

    def __init__(self, graph: Graph, rng: np.random.Generator):
        self.graph = graph
        self.rng = rng
        self.qubits: dict[int, QubitHandle] = {}
        self.entangled = False

    def receive_qubit(self, vertex: int, qubit: QubitHandle) -> None:
        if vertex not in self.graph.vertices:
            raise UnknownVertex(vertex)
        self.qubits[vertex] = qubit

    def entangle(self) -> None:
        for u, w in self.graph.sorted_edges():
            a, b = self.qubits[u], self.qubits[w]
            a.register.cz(a.label, b.label)
        self.entangled = True

    def before_measure(self, vertex: int, delta: int) -> None:
        """Hook for deviating subclasses; honest servers do nothing."""

    def measure(self, vertex: int, delta: int) -> int:
        if not self.entangled:
            raise ProtocolOrderViolation(f"measure({vertex}) requested before entangle()")
        self.before_measure(vertex, delta)
        q = self.qubits.pop(vertex)
        return q.register.measure(q.label, delta, self.rng)


def honest_server(graph: Graph, rng: np.random.Generator) -> HonestServer:
    return HonestServer(graph, rng)


class PauliAttackServer(HonestServer):
    """Applies a fixed Pauli to chosen vertices right before measuring them.

    In the default ``"measurement"`` frame the Pauli acts after the
    ``Rz(-delta)`` basis change, just ahead of the X-basis readout: Z and Y
    flip the reported bit, X leaves it untouched.  ``"computational"``
    applies it before the basis change instead.
    """

    def __init__(
        self,
        graph: Graph,
        paulis: Mapping[int, str],
        rng: np.random.Generator,
        frame: str = "measurement",
    ):
        super().__init__(graph, rng)
        for v, p in paulis.items():
            if v not in graph.vertices:
                raise UnknownVertex(f"Pauli map names vertex {v}, not in the graph")
            if p not in PAULIS:
                raise ValueError(f"unknown Pauli {p!r}")
        if frame not in ("measurement", "computational"):
            raise ValueError(f"unknown frame {frame!r}")
        self.paulis = {int(v): p for v, p in paulis.items() if p != "I"}
        self.frame = frame

    def before_measure(self, vertex: int, delta: int) -> None:
        p = self.paulis.get(vertex)
        if p is None:
            return
        q = self.qubits[vertex]
        if self.frame == "measurement":
            q.register.rz(q.label, -delta)
            q.register.pauli(q.label, p)
            q.register.rz(q.label, delta)
        else:
            q.register.pauli(q.label, p)


def pauli_attack_server(
    graph: Graph, paulis: Mapping[int, str], rng: np.random.Generator, frame: str = "measurement"
) -> PauliAttackServer:
    return PauliAttackServer(graph, paulis, rng, frame)


class AnswerStrategyServer(HonestServer):
    """``flip`` negates every honest answer; ``random`` ignores the qubits and tosses coins."""

    def __init__(self, graph: Graph, kind: str, rng: np.random.Generator):
        super().__init__(graph, rng)
        if kind not in ("flip", "random"):
            raise ValueError(f"unknown answer strategy {kind!r}")
        self.kind = kind

    def entangle(self) -> None:
        if self.kind == "flip":
            super().entangle()
        self.entangled = True

    def measure(self, vertex: int, delta: int) -> int:
        if self.kind == "random":
            self.qubits.pop(vertex, None)
            return int(self.rng.integers(0, 2))
        return 1 - super().measure(vertex, delta)


def answer_strategy_server(kind: str, graph: Graph, rng: np.random.Generator) -> AnswerStrategyServer:
    return AnswerStrategyServer(graph, kind, rng)


Hook = Callable[[qc.QubitRegister, object, int, int], None]


class CustomServer(HonestServer):
    """Runs ``hook(register, label, vertex, delta)`` before each honest measurement."""

    def __init__(self, graph: Graph, hook: Hook, rng: np.random.Generator):
        super().__init__(graph, rng)
        self.hook = hook

    def before_measure(self, vertex: int, delta: int) -> None:
        q = self.qubits[vertex]
        self.hook(q.register, q.label, vertex, delta)


# --------------------------------------------------------------------------
# deviation specs


@dataclass(frozen=True)
class PauliBefore:
    paulis: Mapping[int, str]
    frame: str = "measurement"


@dataclass(frozen=True)
class FlipAnswers:
    pass


@dataclass(frozen=True)
class RandomAnswers:
    pass


@dataclass(frozen=True)
class Custom:
    hook: Hook


Action = PauliBefore | FlipAnswers | RandomAnswers | Custom


@dataclass(frozen=True)
class DeviationSpec:
    """Which rounds to attack and what to do in them.

    ``attacked`` is either an explicit collection of round indices or an
    integer count ``m`` of rounds drawn uniformly without replacement.
    """

    action: Action
    attacked: frozenset[int] | int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def attacked_rounds(self, n_rounds: int, rng: np.random.Generator) -> frozenset[int]:
        if isinstance(self.attacked, int):
            m = self.attacked
            if not 0 <= m <= n_rounds:
                raise ValueError(f"cannot attack {m} of {n_rounds} rounds")
            return frozenset(int(i) for i in rng.choice(n_rounds, size=m, replace=False))
        rounds = frozenset(int(i) for i in self.attacked)
        if any(not 0 <= i < n_rounds for i in rounds):
            raise ValueError(f"attacked round index outside 0..{n_rounds - 1}")
        return rounds

    def validate(self, graph: Graph) -> None:
        if isinstance(self.action, PauliBefore):
            for v, p in self.action.paulis.items():
                if v not in graph.vertices:
                    raise UnknownVertex(f"Pauli map names vertex {v}, not in the graph")
                if p not in PAULIS:
                    raise ValueError(f"unknown Pauli {p!r}")

    def server(self, graph: Graph, attacked: bool, rng: np.random.Generator) -> HonestServer:
        """Server for one round; ``attacked`` is decided from the round index only."""
        if not attacked:
            return HonestServer(graph, rng)
        a = self.action
        if isinstance(a, PauliBefore):
            return PauliAttackServer(graph, a.paulis, rng, a.frame)
        if isinstance(a, FlipAnswers):
            return AnswerStrategyServer(graph, "flip", rng)
        if isinstance(a, RandomAnswers):
            return AnswerStrategyServer(graph, "random", rng)
        if isinstance(a, Custom):
            return CustomServer(graph, a.hook, rng)
        raise TypeError(f"unknown action {a!r}")

    # -- config round trip (custom hooks are library-only)

    def to_dict(self) -> dict:
        a = self.action
        if isinstance(a, PauliBefore):
            act = {"type": "pauli", "paulis": {str(v): p for v, p in sorted(a.paulis.items())}, "frame": a.frame}
        elif isinstance(a, FlipAnswers):
            act = {"type": "flip"}
        elif isinstance(a, RandomAnswers):
            act = {"type": "random"}
        else:
            raise TypeError("custom hooks cannot be serialised")
        att = self.attacked if isinstance(self.attacked, int) else sorted(self.attacked)
        return {"action": act, "attacked": att}

    @classmethod
    def from_dict(cls, d: Mapping) -> DeviationSpec:
        unknown = set(d) - {"action", "attacked"}
        if unknown:
            raise ValueError(f"unknown deviation key(s) {sorted(unknown)}")
        act = d["action"]
        typ = act.get("type")
        if typ == "pauli":
            extra = set(act) - {"type", "paulis", "frame"}
            if extra:
                raise ValueError(f"unknown pauli action key(s) {sorted(extra)}")
            action: Action = PauliBefore({int(v): p for v, p in act["paulis"].items()}, act.get("frame", "measurement"))
        elif typ == "flip":
            action = FlipAnswers()
        elif typ == "random":
            action = RandomAnswers()
        else:
            raise ValueError(f"unknown action type {typ!r}")
        att = d.get("attacked", 0)
        attacked: frozenset[int] | int = att if isinstance(att, int) else frozenset(int(i) for i in att)
        return cls(action, attacked)


def no_attack() -> DeviationSpec:
    return DeviationSpec(FlipAnswers(), 0)


def spec_for_fraction(action: Action, fraction: float, n_rounds: int) -> DeviationSpec:
    return DeviationSpec(action, int(round(fraction * n_rounds)))


def iter_single_paulis(graph: Graph, paulis: Iterable[str] = ("X", "Y", "Z")):
    for v in graph.vertices:
        for p in paulis:
            yield v, p
