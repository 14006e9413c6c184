"""Dense statevector kernel.

Angles are integers modulo 8, the unit being pi/4, so every angle the
protocols manipulate stays exact.  Qubit 0 is the most significant bit of
the basis index (leftmost tensor factor).

The pure functions (``apply_cz``, ``measure_rotated`` ...) act on immutable
:class:`StateVector` values.  :class:`QubitRegister` wraps the same kernels
behind a mutable, label-addressed register; protocol rounds use it to model
qubits travelling between client and server.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    BadDistribution,
    DimensionMismatch,
    EqualIndices,
    IndexOutOfRange,
    ZeroNormProjection,
)

ANGLE_UNITS = 8
PI = 4
TOL = 1e-9

_SQRT1_2 = 1.0 / math.sqrt(2.0)
# e^{i k pi/4}, exact for the axis-aligned entries
_PHASE = np.array(
    [1, (1 + 1j) * _SQRT1_2, 1j, (-1 + 1j) * _SQRT1_2, -1, (-1 - 1j) * _SQRT1_2, -1j, (1 - 1j) * _SQRT1_2],
    dtype=complex,
)


def angle(k: int) -> int:
    """Normalise an angle index into ``0..7``."""
    return int(k) % ANGLE_UNITS


def phase(k: int) -> complex:
    return complex(_PHASE[int(k) % ANGLE_UNITS])


def angle_radians(k: int) -> float:
    return (int(k) % ANGLE_UNITS) * math.pi / 4


# --------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class PlusTheta:
    """``(|0> + e^{i theta}|1>)/sqrt(2)`` with ``theta = k*pi/4``."""

    theta: int

    def __post_init__(self):
        object.__setattr__(self, "theta", angle(self.theta))


@dataclass(frozen=True)
class Computational:
    bit: int

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError(f"computational basis label must be 0 or 1, got {self.bit!r}")


QubitKind = PlusTheta | Computational


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure state on ``n`` qubits; ``amps`` has length ``2**n``.

    ``n == 0`` is allowed and denotes the empty register left behind once every
    qubit has been measured (its single amplitude is a global phase).
    """

    amps: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex).reshape(-1)
        n = a.size.bit_length() - 1
        if a.size != 1 << n:
            raise DimensionMismatch(f"amplitude count {a.size} is not a power of two")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "amps", a)

    @property
    def n(self) -> int:
        return self.amps.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def tensor(self) -> np.ndarray:
        return self.amps.reshape((2,) * self.n)

    def __matmul__(self, other: StateVector) -> StateVector:
        """Tensor product, ``self`` on the more significant qubits."""
        return StateVector(np.kron(self.amps, other.amps))

    def allclose(self, other: StateVector, atol: float = TOL) -> bool:
        return self.n == other.n and bool(np.allclose(self.amps, other.amps, atol=atol))

    def equal_up_to_phase(self, other: StateVector, atol: float = TOL) -> bool:
        if self.n != other.n:
            return False
        return abs(abs(np.vdot(self.amps, other.amps)) - 1.0) < atol

    def __repr__(self) -> str:
        return f"StateVector(n={self.n}, amps={np.round(self.amps, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"density matrix must be square, got shape {m.shape}")
        d = m.shape[0]
        if d & (d - 1) or d == 0:
            raise DimensionMismatch(f"dimension {d} is not a power of two")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0].bit_length() - 1

    def is_valid(self, atol: float = TOL) -> bool:
        m = self.entries
        if not np.allclose(m, m.conj().T, atol=atol):
            return False
        if abs(np.trace(m) - 1) > atol:
            return False
        return bool(np.linalg.eigvalsh((m + m.conj().T) / 2).min() >= -atol)

    def allclose(self, other: DensityMatrix | np.ndarray, atol: float = TOL) -> bool:
        o = other.entries if isinstance(other, DensityMatrix) else np.asarray(other)
        return self.entries.shape == o.shape and bool(np.allclose(self.entries, o, atol=atol))

    @classmethod
    def maximally_mixed(cls, n: int) -> DensityMatrix:
        d = 1 << n
        return cls(np.eye(d, dtype=complex) / d)


# --------------------------------------------------------------------------
# array kernels (tensor-shaped arrays, no validation)


def _k_cz(t: np.ndarray, i: int, j: int) -> np.ndarray:
    t = t.copy()
    idx = [slice(None)] * t.ndim
    idx[i] = 1
    idx[j] = 1
    t[tuple(idx)] *= -1
    return t


def _k_phase(t: np.ndarray, q: int, factor: complex) -> np.ndarray:
    t = t.copy()
    idx = [slice(None)] * t.ndim
    idx[q] = 1
    t[tuple(idx)] *= factor
    return t


def _k_x(t: np.ndarray, q: int) -> np.ndarray:
    return np.flip(t, axis=q).copy()


def _k_h(t: np.ndarray, q: int) -> np.ndarray:
    a0 = np.take(t, 0, axis=q)
    a1 = np.take(t, 1, axis=q)
    return np.stack(((a0 + a1) * _SQRT1_2, (a0 - a1) * _SQRT1_2), axis=q)


def _k_cnot(t: np.ndarray, c: int, tgt: int) -> np.ndarray:
    t = t.copy()
    idx = [slice(None)] * t.ndim
    idx[c] = 1
    sub = t[tuple(idx)]
    # target axis index shifts down by one if it came after the control
    ax = tgt - 1 if tgt > c else tgt
    t[tuple(idx)] = np.flip(sub, axis=ax)
    return t


def _k_project(t: np.ndarray, q: int, delta: int) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalised post-measurement tensors for outcomes 0 and 1 at angle delta."""
    lead = (slice(None),) * q
    a0 = t[lead + (0,)]
    a1 = t[lead + (1,)] * _PHASE[(-delta) % ANGLE_UNITS]
    return (a0 + a1) * _SQRT1_2, (a0 - a1) * _SQRT1_2


def _k_measure(t: np.ndarray, q: int, delta: int, u: float) -> tuple[int, np.ndarray]:
    p0v, p1v = _k_project(t, q, delta)
    p1 = float(np.vdot(p1v, p1v).real)
    p0 = float(np.vdot(p0v, p0v).real)
    if abs(p0 + p1 - 1.0) > 1e-6:
        raise ZeroNormProjection(f"state norm drifted to {p0 + p1:.3g} before measurement")
    bit = 1 if u < p1 else 0
    pb, vec = (p1, p1v) if bit else (p0, p0v)
    if pb <= 1e-15:
        raise ZeroNormProjection(f"selected outcome {bit} has probability {pb:.3g}")
    return bit, vec / math.sqrt(pb)


def _check_q(n: int, *qs: int) -> None:
    for q in qs:
        if not (0 <= q < n):
            raise IndexOutOfRange(f"qubit index {q} outside 0..{n - 1}")


def _wrap(t: np.ndarray) -> StateVector:
    return StateVector(t.reshape(-1))


# --------------------------------------------------------------------------
# pure operations


@lru_cache(maxsize=None)
def prepare_qubit(kind: QubitKind) -> StateVector:
    # states are immutable, so one instance per kind is shared
    if isinstance(kind, PlusTheta):
        return StateVector(np.array([_SQRT1_2, _SQRT1_2 * _PHASE[kind.theta]]))
    if isinstance(kind, Computational):
        return StateVector(np.array([1.0, 0.0]) if kind.bit == 0 else np.array([0.0, 1.0]))
    raise TypeError(f"unknown qubit kind {kind!r}")


@lru_cache(maxsize=None)
def plus_state(n: int) -> StateVector:
    d = 1 << n
    return StateVector(np.full(d, 1 / math.sqrt(d), dtype=complex))


def basis_state(bits: Sequence[int]) -> StateVector:
    a = np.zeros(1 << len(bits), dtype=complex)
    a[int("".join(str(b) for b in bits) or "0", 2)] = 1
    return StateVector(a)


def tensor_all(states: Iterable[StateVector]) -> StateVector:
    out = np.ones(1, dtype=complex)
    for s in states:
        out = np.kron(out, s.amps)
    return StateVector(out)


def apply_cz(state: StateVector, i: int, j: int) -> StateVector:
    _check_q(state.n, i, j)
    if i == j:
        raise EqualIndices(f"CZ needs two distinct qubits, got {i} twice")
    return _wrap(_k_cz(state.tensor(), i, j))


def apply_rz(state: StateVector, q: int, theta: int) -> StateVector:
    """``diag(1, e^{i theta})`` on qubit ``q``."""
    _check_q(state.n, q)
    return _wrap(_k_phase(state.tensor(), q, _PHASE[angle(theta)]))


def apply_x(state: StateVector, q: int) -> StateVector:
    _check_q(state.n, q)
    return _wrap(_k_x(state.tensor(), q))


def apply_z(state: StateVector, q: int) -> StateVector:
    return apply_rz(state, q, PI)


def apply_h(state: StateVector, q: int) -> StateVector:
    _check_q(state.n, q)
    return _wrap(_k_h(state.tensor(), q))


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_q(state.n, control, target)
    if control == target:
        raise EqualIndices(f"CNOT needs two distinct qubits, got {control} twice")
    return _wrap(_k_cnot(state.tensor(), control, target))


def apply_pauli(state: StateVector, q: int, pauli: str) -> StateVector:
    """Apply I, X, Z or Y on qubit ``q``; Y is taken as Z·X (global phase dropped)."""
    _check_q(state.n, q)
    return _wrap(_k_pauli(state.tensor(), q, pauli))


def _k_pauli(t: np.ndarray, q: int, pauli: str) -> np.ndarray:
    if pauli == "I":
        return t
    if pauli == "X":
        return _k_x(t, q)
    if pauli == "Z":
        return _k_phase(t, q, -1)
    if pauli == "Y":
        return _k_phase(_k_x(t, q), q, -1)
    raise ValueError(f"unknown Pauli {pauli!r}")


def outcome_probabilities(state: StateVector, q: int, delta: int) -> tuple[float, float]:
    """Born probabilities of outcomes 0 (``|+_delta>``) and 1 (``|-_delta>``)."""
    _check_q(state.n, q)
    p0v, p1v = _k_project(state.tensor(), q, angle(delta))
    return float(np.vdot(p0v, p0v).real), float(np.vdot(p1v, p1v).real)


def project(state: StateVector, q: int, delta: int, bit: int) -> tuple[float, StateVector | None]:
    """Probability of ``bit`` and the normalised remainder (``None`` if impossible)."""
    _check_q(state.n, q)
    vecs = _k_project(state.tensor(), q, angle(delta))
    v = vecs[bit]
    p = float(np.vdot(v, v).real)
    if p <= 1e-15:
        return 0.0, None
    return p, _wrap(v / math.sqrt(p))


def measure_rotated(
    state: StateVector, q: int, delta: int, rng: np.random.Generator
) -> tuple[int, StateVector]:
    """Measure qubit ``q`` in the ``{|+_delta>, |-_delta>}`` basis and drop it.

    Equivalent to ``Rz(-delta)`` followed by an X-basis measurement; outcome 0
    is ``|+_delta>``.
    """
    _check_q(state.n, q)
    bit, t = _k_measure(state.tensor(), q, angle(delta), rng.random())
    return bit, _wrap(t)


def average_density(ensemble: Sequence[tuple[float, StateVector]]) -> DensityMatrix:
    if not ensemble:
        raise BadDistribution("empty ensemble")
    probs = np.array([p for p, _ in ensemble], dtype=float)
    if (probs < 0).any() or abs(probs.sum() - 1) > TOL:
        raise BadDistribution(f"weights must be nonnegative and sum to 1, got sum {probs.sum()!r}")
    n = ensemble[0][1].n
    if any(s.n != n for _, s in ensemble):
        raise DimensionMismatch("ensemble mixes register sizes")
    vecs = np.stack([s.amps for _, s in ensemble])
    return DensityMatrix(np.einsum("k,ki,kj->ij", probs, vecs, vecs.conj()))


def partial_trace_keep(state: StateVector, keep: Sequence[int]) -> DensityMatrix:
    """Reduced density matrix on the qubits ``keep`` (in the given order)."""
    _check_q(state.n, *keep)
    n = state.n
    rest = [q for q in range(n) if q not in keep]
    t = np.transpose(state.tensor(), list(keep) + rest).reshape(1 << len(keep), -1)
    return DensityMatrix(t @ t.conj().T)


# --------------------------------------------------------------------------
# mutable labelled register


class QubitRegister:
    """A mutable joint register whose qubits are addressed by hashable labels.

    Everything physically present in one simulated round lives in one
    register: client-held EPR halves as well as the qubits the server holds.
    Operations are in-place and mirror the pure functions above.
    """

    def __init__(self) -> None:
        self._t = np.ones((), dtype=complex)
        self._labels: list[Hashable] = []

    @property
    def labels(self) -> tuple:
        return tuple(self._labels)

    def __contains__(self, label: Hashable) -> bool:
        return label in self._labels

    def __len__(self) -> int:
        return len(self._labels)

    def _pos(self, label: Hashable) -> int:
        try:
            return self._labels.index(label)
        except ValueError:
            raise IndexOutOfRange(f"no qubit labelled {label!r} in register") from None

    def state(self) -> StateVector:
        return StateVector(self._t.reshape(-1))

    def add(self, label: Hashable, state: StateVector, *more: Hashable) -> None:
        """Append a fragment.  Multi-qubit fragments take one label per qubit:
        ``reg.add(("a", 0), bell, ("b", 0))``."""
        labels = [label, *more]
        if state.n != len(labels):
            raise DimensionMismatch(f"{state.n}-qubit fragment given {len(labels)} label(s)")
        for lb in labels:
            if lb in self._labels:
                raise ValueError(f"label {lb!r} already present")
        self._t = np.multiply.outer(self._t, state.tensor())
        self._labels.extend(labels)

    def cz(self, a: Hashable, b: Hashable) -> None:
        i, j = self._pos(a), self._pos(b)
        if i == j:
            raise EqualIndices(f"CZ on a single qubit {a!r}")
        self._t = _k_cz(self._t, i, j)

    def rz(self, label: Hashable, theta: int) -> None:
        self._t = _k_phase(self._t, self._pos(label), _PHASE[angle(theta)])

    def h(self, label: Hashable) -> None:
        self._t = _k_h(self._t, self._pos(label))

    def cnot(self, control: Hashable, target: Hashable) -> None:
        c, t = self._pos(control), self._pos(target)
        if c == t:
            raise EqualIndices(f"CNOT on a single qubit {control!r}")
        self._t = _k_cnot(self._t, c, t)

    def pauli(self, label: Hashable, p: str) -> None:
        self._t = _k_pauli(self._t, self._pos(label), p)

    def apply(self, label: Hashable, matrix: np.ndarray) -> None:
        """Arbitrary single-qubit unitary (used by custom adversary hooks)."""
        q = self._pos(label)
        self._t = np.moveaxis(np.tensordot(matrix, self._t, axes=([1], [q])), 0, q)

    def measure(self, label: Hashable, delta: int, rng: np.random.Generator) -> int:
        q = self._pos(label)
        bit, self._t = _k_measure(self._t, q, angle(delta), rng.random())
        del self._labels[q]
        return bit

    def measure_z(self, label: Hashable, rng: np.random.Generator) -> int:
        """Computational-basis measurement (H, then X-basis)."""
        self.h(label)
        return self.measure(label, 0, rng)

    def reduced(self, labels: Sequence[Hashable]) -> DensityMatrix:
        return partial_trace_keep(self.state(), [self._pos(lb) for lb in labels])
