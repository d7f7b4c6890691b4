"""Shared test fixtures and toy-circuit builders."""

import numpy as np
import pytest

from bibieq.circuit import (
    Circuit, CNot, Detector, ECCheck, ErasureSite, Measure, MeasFlip,
    PauliChannel1, PhaseBoundary, Reset,
)
from bibieq.compiler import ErasureCircuit, NoiseLaw, S_2EC, enumerate_segments


def single_segment_circuit(r: int, noise: NoiseLaw) -> ErasureCircuit:
    """One wire with r entangling gates and a flag check at the end.

    Qubit 0 carries the segment under study; qubits 1..r are fresh
    partners (one per gate).  Every qubit ends in a Z measurement with a
    detector, so fault effects at each canonical site are observable.
    """
    n = r + 1
    ins = [Reset("Z", q) for q in range(n)]
    site = 0
    for j in range(r):
        ins.append(CNot(0, j + 1))
        ins.append(ErasureSite(site, 0))
        site += 1
    ins.append(ErasureSite(site, 0))  # terminal site
    site += 1
    record = 0
    ins.append(ECCheck(0, "D", record))
    ins.append(MeasFlip(record, noise.q))
    record += 1
    detectors = []
    for q in range(n):
        ins.append(Measure("Z", q, record))
        detectors.append(record)
        record += 1
    for rec in detectors:
        ins.append(Detector((rec,)))
    circuit = Circuit(n, ins, record, n, 0,
                      {"schedule": "2ec", "e": repr(noise.e),
                       "beta": repr(noise.beta), "gamma": repr(noise.gamma)})
    segments = enumerate_segments(circuit)
    segments.sort(key=lambda s: (s.start, s.qubit))
    return ErasureCircuit(circuit, segments, S_2EC, noise, site, {})
