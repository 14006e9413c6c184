"""Brute-force reference for pattern outputs.

Deliberately shares no code with the register kernels or the adaptive
executor: the graph state is written down amplitude by amplitude and every
non-output qubit is contracted against ``<+_phi|`` (the branch that needs no
correction).  With a valid flow every other branch yields the same output
distribution, so this is the distribution all executors must reproduce.
"""

from __future__ import annotations

import cmath
import math
from itertools import product

import numpy as np

from .mbqc import MeasurementPattern


def _graph_state(pattern: MeasurementPattern, input_amps: np.ndarray) -> np.ndarray:
    vs = list(pattern.graph.vertices)
    pos = {v: i for i, v in enumerate(vs)}
    n = len(vs)
    ins = list(pattern.inputs)
    psi = np.zeros(1 << n, dtype=complex)
    norm = 2 ** (-(n - len(ins)) / 2)
    for idx in range(1 << n):
        bits = [(idx >> (n - 1 - i)) & 1 for i in range(n)]
        sign = 1
        for u, w in pattern.graph.edges:
            if bits[pos[u]] and bits[pos[w]]:
                sign = -sign
        in_idx = 0
        for v in ins:
            in_idx = (in_idx << 1) | bits[pos[v]]
        psi[idx] = sign * norm * input_amps[in_idx]
    return psi


def _bra(phi: int, outcome: int, x: int) -> complex:
    """<(-1)^outcome _phi | x>."""
    if x == 0:
        return 1 / math.sqrt(2)
    return (-1) ** outcome * cmath.exp(-1j * math.pi * phi / 4) / math.sqrt(2)


def output_distribution(pattern: MeasurementPattern, input_amps=None) -> dict[tuple[int, ...], float]:
    """Exact distribution of the output bits (ordered by vertex id)."""
    if input_amps is None:
        input_amps = np.full(1 << len(pattern.inputs), 2 ** (-len(pattern.inputs) / 2), dtype=complex)
    input_amps = np.asarray(input_amps, dtype=complex).reshape(-1)
    vs = list(pattern.graph.vertices)
    n = len(vs)
    psi = _graph_state(pattern, input_amps)
    outs = list(pattern.outputs)
    amps = {}
    for o in product((0, 1), repeat=len(outs)):
        want = dict(zip(outs, o))
        total = 0j
        for idx in range(1 << n):
            if psi[idx] == 0:
                continue
            c = psi[idx]
            for i, v in enumerate(vs):
                x = (idx >> (n - 1 - i)) & 1
                c *= _bra(pattern.angles[v], want.get(v, 0), x)
            total += c
        amps[o] = abs(total) ** 2
    z = sum(amps.values())
    return {o: a / z for o, a in amps.items()}


def expectation_minus(pattern: MeasurementPattern, input_amps=None) -> float:
    """``tr rho |-><-|`` for a single-output pattern: probability the output bit is 1."""
    if len(pattern.outputs) != 1:
        raise ValueError("binary observable needs exactly one output vertex")
    return output_distribution(pattern, input_amps).get((1,), 0.0)
