"""Pauli-frame sampling and detector-error-model extraction.

The reference (noiseless) run fixes every measurement record; a shot is
the reference plus a Pauli frame propagated through the Clifford
structure, so only record *flips* are tracked.  Frames are bit-packed
shot-major (one uint64 word = 64 shots) and channels are sampled via
per-mechanism binomial counts, which keeps low-rate channels cheap.

Detector error models are extracted by a single backward sensitivity
sweep: for every noise location the sweep yields, per qubit, the set of
records an X (resp. Z) component injected there would flip; mechanism
flip sets follow by XOR and identical flip sets merge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import circuit as cir
from .circuit import (
    Circuit, CNot, Detector, ECCheck, ErasureSite, Measure, MeasFlip,
    Observable, PauliChannel1, PauliChannel2, PhaseBoundary, Reset,
)
from .compiler import ErasureCircuit
from .dem import DetectorErrorModel
from .engines import _strip_skeleton


def _bits(v: int) -> List[int]:
    out = []
    while v:
        low = v & -v
        out.append(low.bit_length() - 1)
        v ^= low
    return out


# ---------------------------------------------------------------------------
# sensitivity sweep
# ---------------------------------------------------------------------------

@dataclass
class SensitivityTable:
    """Detector/observable flip masks per noise source and qubit component.

    by_src[src][qubit] = (det_x, obs_x, det_z, obs_z) integer bitmasks:
    the detectors/observables flipped by an X (resp. Z) inserted on that
    qubit at that source location.  rec_det/rec_obs give the flip masks of
    a classical record flip.
    """

    by_src: Dict[int, Dict[int, Tuple[int, int, int, int]]]
    rec_det: List[int]
    rec_obs: List[int]
    n_detectors: int
    n_observables: int
    n_sites: int = 0  # srcs below this bound are per-instance erasure sites


def _record_memberships(entries: Iterable, n_records: int) -> Tuple[List[int], List[int], int, int]:
    rec_det = [0] * n_records
    rec_obs = [0] * n_records
    det_idx = 0
    n_obs = 0
    for ins in entries:
        if isinstance(ins, Detector):
            for r in ins.records:
                rec_det[r] ^= 1 << det_idx
            det_idx += 1
        elif isinstance(ins, Observable):
            for r in ins.records:
                rec_obs[r] ^= 1 << ins.index
            n_obs = max(n_obs, ins.index + 1)
    return rec_det, rec_obs, det_idx, n_obs


def _sweep(entries: Sequence, n_qubits: int, n_records: int,
           site_qubits: Optional[Dict[int, Tuple[int, ...]]] = None) -> SensitivityTable:
    """Backward sweep over instructions (or ("site", id) placeholders)."""
    rec_det, rec_obs, n_det, n_obs = _record_memberships(entries, n_records)
    sx = [0] * n_qubits  # records flipped by an X inserted here
    sz = [0] * n_qubits

    def masks_for(qubit: int) -> Tuple[int, int, int, int]:
        dx = ox = dz = oz = 0
        for m in _bits(sx[qubit]):
            dx ^= rec_det[m]
            ox ^= rec_obs[m]
        for m in _bits(sz[qubit]):
            dz ^= rec_det[m]
            oz ^= rec_obs[m]
        return dx, ox, dz, oz

    by_src: Dict[int, Dict[int, Tuple[int, int, int, int]]] = {}
    for ins in reversed(entries):
        if isinstance(ins, tuple):  # ("site", id): capture for its qubits
            sid = ins[1]
            qubits = site_qubits.get(sid, ()) if site_qubits else ()
            by_src[sid] = {q: masks_for(q) for q in qubits}
        elif isinstance(ins, CNot):
            sx[ins.control] ^= sx[ins.target]
            sz[ins.target] ^= sz[ins.control]
        elif isinstance(ins, Reset):
            if ins.cond_record is not None:
                raise ValueError("cannot sweep a circuit with conditional resets; "
                                 "convert it first")
            sx[ins.qubit] = 0
            sz[ins.qubit] = 0
        elif isinstance(ins, Measure):
            if ins.basis == "Z":
                sx[ins.qubit] ^= 1 << ins.record
            else:
                sz[ins.qubit] ^= 1 << ins.record
        elif isinstance(ins, PauliChannel1):
            if ins.src is not None:
                by_src[ins.src] = {ins.qubit: masks_for(ins.qubit)}
        elif isinstance(ins, PauliChannel2):
            if ins.src is not None:
                by_src[ins.src] = {
                    ins.qubit_a: masks_for(ins.qubit_a),
                    ins.qubit_b: masks_for(ins.qubit_b),
                }
        elif isinstance(ins, ECCheck):
            raise ValueError("cannot sweep a circuit with erasure checks; "
                             "convert it first")
    return SensitivityTable(by_src, rec_det, rec_obs, n_det, n_obs)


def build_sensitivity_table(ce: ErasureCircuit) -> SensitivityTable:
    """Sensitivity of every potential noise location of a compiled template.

    Shared by all converted instances of `ce`: erasure sites keep their
    site ids and baseline channels their src ids.
    """
    skeleton, n_records = _strip_skeleton(ce)
    site_qubits: Dict[int, Tuple[int, ...]] = {}
    for seg in ce.segments:
        for j, sid in enumerate(seg.sites):
            if j < seg.r:
                site_qubits[sid] = (seg.qubit, seg.interactions[j][1])
            else:
                site_qubits[sid] = (seg.qubit,)
    table = _sweep(skeleton, ce.circuit.n_qubits, n_records, site_qubits)
    table.n_sites = ce.n_sites
    return table


_COMPONENT = {"X": 0, "Z": 1, "Y": 2}


def _mech_flip_masks(pauli: str, qubits: Tuple[int, ...],
                     masks: Dict[int, Tuple[int, int, int, int]]) -> Tuple[int, int]:
    det = obs = 0
    for ch, q in zip(pauli, qubits):
        if ch == "I":
            continue
        dx, ox, dz, oz = masks[q]
        if ch != "Z":
            det ^= dx
            obs ^= ox
        if ch != "X":
            det ^= dz
            obs ^= oz
    return det, obs


def _merge_channels(instructions: Iterable, table: SensitivityTable,
                    merged: Dict[Tuple[int, int], float],
                    src_filter=None) -> None:
    from .dem import xor_probs

    for ins in instructions:
        if isinstance(ins, PauliChannel1):
            if src_filter is not None and not src_filter(ins.src):
                continue
            masks = table.by_src[ins.src]
            for pauli, prob in ins.mechanisms:
                if prob == 0.0:
                    continue
                key = _mech_flip_masks(pauli, (ins.qubit,), masks)
                if key == (0, 0):
                    continue
                old = merged.get(key)
                merged[key] = prob if old is None else xor_probs(old, prob)
        elif isinstance(ins, PauliChannel2):
            if src_filter is not None and not src_filter(ins.src):
                continue
            masks = table.by_src[ins.src]
            qubits = (ins.qubit_a, ins.qubit_b)
            for pauli, prob in ins.mechanisms:
                if prob == 0.0:
                    continue
                key = _mech_flip_masks(pauli, qubits, masks)
                if key == (0, 0):
                    continue
                old = merged.get(key)
                merged[key] = prob if old is None else xor_probs(old, prob)
        elif isinstance(ins, MeasFlip):
            if src_filter is not None and not src_filter(None):
                continue
            if ins.prob == 0.0:
                continue
            key = (table.rec_det[ins.record], table.rec_obs[ins.record])
            if key == (0, 0):
                continue
            old = merged.get(key)
            merged[key] = ins.prob if old is None else xor_probs(old, ins.prob)


def _dem_from_merged(merged: Dict[Tuple[int, int], float],
                     n_det: int, n_obs: int) -> DetectorErrorModel:
    mechanisms = [
        (p, tuple(_bits(det)), tuple(_bits(obs)))
        for (det, obs), p in merged.items() if p > 0.0
    ]
    mechanisms.sort(key=lambda m: (m[1], m[2]))
    return DetectorErrorModel(mechanisms, n_det, n_obs)


def extract_dem(circuit: Circuit, table: Optional[SensitivityTable] = None,
                baseline: Optional[Dict[Tuple[int, int], float]] = None
                ) -> DetectorErrorModel:
    """Map every channel mechanism to its detector/observable flip set.

    Without a table, a dedicated backward sweep is run for this circuit
    (channels need no src ids).  With a template table, channels are
    looked up by src; `baseline` optionally pre-merges the channels shared
    by all instances of a template (see `baseline_merged`).
    """
    if table is None:
        entries = list(circuit.instructions)
        # assign positional srcs to channels lacking one
        relabeled = []
        next_src = -1
        for ins in entries:
            if isinstance(ins, PauliChannel1) and ins.src is None:
                ins = PauliChannel1(ins.qubit, ins.mechanisms, src=next_src)
                next_src -= 1
            elif isinstance(ins, PauliChannel2) and ins.src is None:
                ins = PauliChannel2(ins.qubit_a, ins.qubit_b, ins.mechanisms, src=next_src)
                next_src -= 1
            relabeled.append(ins)
        entries = relabeled
        table = _sweep(entries, circuit.n_qubits, circuit.n_records)
        merged: Dict[Tuple[int, int], float] = {}
        _merge_channels(entries, table, merged)
        return _dem_from_merged(merged, circuit.n_detectors, circuit.n_observables)

    if baseline is not None:
        merged = dict(baseline)
        n_sites = table.n_sites
        _merge_channels(circuit.instructions, table, merged,
                        src_filter=lambda src: src is not None and src < n_sites)
    else:
        merged = {}
        _merge_channels(circuit.instructions, table, merged)
    return _dem_from_merged(merged, circuit.n_detectors, circuit.n_observables)


def baseline_merged(ce: ErasureCircuit, table: SensitivityTable
                    ) -> Dict[Tuple[int, int], float]:
    """Pre-merged flip sets of the instance-independent channels."""
    skeleton, _ = _strip_skeleton(ce)
    merged: Dict[Tuple[int, int], float] = {}
    _merge_channels((x for x in skeleton if not isinstance(x, tuple)), table, merged)
    return merged


# ---------------------------------------------------------------------------
# frame sampling
# ---------------------------------------------------------------------------

@dataclass
class ShotBatch:
    detectors: np.ndarray    # bool, (shots, n_detectors)
    observables: np.ndarray  # bool, (shots, n_observables)

    @property
    def n_shots(self) -> int:
        return self.detectors.shape[0]

    def pack(self) -> bytes:
        """Raw export: little header, then packed detector and observable bits."""
        head = (f"shotbatch {self.n_shots} {self.detectors.shape[1]} "
                f"{self.observables.shape[1]}\n").encode()
        det = np.packbits(self.detectors, axis=1, bitorder="little").tobytes()
        obs = np.packbits(self.observables, axis=1, bitorder="little").tobytes()
        return head + det + obs

    @staticmethod
    def unpack(blob: bytes) -> "ShotBatch":
        nl = blob.index(b"\n")
        tag, shots, n_det, n_obs = blob[:nl].split()
        shots, n_det, n_obs = int(shots), int(n_det), int(n_obs)
        det_bytes = (n_det + 7) // 8
        obs_bytes = (n_obs + 7) // 8
        off = nl + 1
        det = np.frombuffer(blob, np.uint8, shots * det_bytes, off).reshape(shots, det_bytes)
        obs = np.frombuffer(blob, np.uint8, shots * obs_bytes, off + shots * det_bytes
                            ).reshape(shots, obs_bytes)
        det = np.unpackbits(det, axis=1, bitorder="little")[:, :n_det].astype(bool)
        obs = np.unpackbits(obs, axis=1, bitorder="little")[:, :n_obs].astype(bool)
        return ShotBatch(det, obs)


def _mask_from_count(rng: np.random.Generator, count: int, n_shots: int,
                     words: int) -> np.ndarray:
    mask = np.zeros(words, dtype=np.uint64)
    if count == 0:
        return mask
    if count > n_shots // 2:
        bits = np.zeros(n_shots, dtype=np.uint8)
        idx = rng.permutation(n_shots)[:count]
        bits[idx] = 1
        packed = np.packbits(bits, bitorder="little")
        padded = np.zeros(words * 8, dtype=np.uint8)
        padded[:packed.size] = packed
        return padded.view(np.uint64)
    chosen: set = set()
    while len(chosen) < count:
        draw = rng.integers(0, n_shots, size=count - len(chosen))
        chosen.update(int(x) for x in draw)
    for s in chosen:
        mask[s >> 6] |= np.uint64(1) << np.uint64(s & 63)
    return mask


def sample_shots(circuit: Circuit, n_shots: int, rng_seed) -> ShotBatch:
    """Frame-propagate `n_shots` samples; reproducible for a fixed seed.

    Requires a converted (or noise-free) circuit: conditional resets and
    erasure checks are not samplable.
    """
    rng = np.random.default_rng(rng_seed)
    words = (n_shots + 63) // 64
    fx = np.zeros((circuit.n_qubits, words), dtype=np.uint64)
    fz = np.zeros((circuit.n_qubits, words), dtype=np.uint64)
    rec = np.zeros((circuit.n_records, words), dtype=np.uint64)
    det_rows: List[np.ndarray] = []
    obs_rows: Dict[int, np.ndarray] = {}

    for ins in circuit.instructions:
        kind = type(ins)
        if kind is CNot:
            fx[ins.target] ^= fx[ins.control]
            fz[ins.control] ^= fz[ins.target]
        elif kind is PauliChannel2:
            probs = [m[1] for m in ins.mechanisms]
            counts = rng.binomial(n_shots, probs)
            for (pauli, _), count in zip(ins.mechanisms, counts):
                if count == 0:
                    continue
                mask = _mask_from_count(rng, int(count), n_shots, words)
                a, b = pauli
                if a != "I":
                    if a != "Z":
                        fx[ins.qubit_a] ^= mask
                    if a != "X":
                        fz[ins.qubit_a] ^= mask
                if b != "I":
                    if b != "Z":
                        fx[ins.qubit_b] ^= mask
                    if b != "X":
                        fz[ins.qubit_b] ^= mask
        elif kind is PauliChannel1:
            probs = [m[1] for m in ins.mechanisms]
            counts = rng.binomial(n_shots, probs)
            for (pauli, _), count in zip(ins.mechanisms, counts):
                if count == 0:
                    continue
                mask = _mask_from_count(rng, int(count), n_shots, words)
                if pauli != "Z":
                    fx[ins.qubit] ^= mask
                if pauli != "X":
                    fz[ins.qubit] ^= mask
        elif kind is Measure:
            rec[ins.record] = fx[ins.qubit] if ins.basis == "Z" else fz[ins.qubit]
        elif kind is Reset:
            if ins.cond_record is not None:
                raise ValueError("conditional resets are not samplable; convert first")
            fx[ins.qubit] = 0
            fz[ins.qubit] = 0
        elif kind is MeasFlip:
            if ins.prob > 0.0:
                count = rng.binomial(n_shots, ins.prob)
                if count:
                    rec[ins.record] ^= _mask_from_count(rng, int(count), n_shots, words)
        elif kind is Detector:
            acc = np.zeros(words, dtype=np.uint64)
            for r in ins.records:
                acc ^= rec[r]
            det_rows.append(acc)
        elif kind is Observable:
            acc = obs_rows.get(ins.index)
            if acc is None:
                acc = np.zeros(words, dtype=np.uint64)
            for r in ins.records:
                acc = acc ^ rec[r]
            obs_rows[ins.index] = acc
        elif kind is ECCheck:
            raise ValueError("erasure checks are not samplable; convert first")

    def unpack_rows(rows: List[np.ndarray], n_rows: int) -> np.ndarray:
        if n_rows == 0:
            return np.zeros((n_shots, 0), dtype=bool)
        packed = np.vstack(rows).view(np.uint8)
        bits = np.unpackbits(packed, axis=1, bitorder="little")[:, :n_shots]
        return bits.astype(bool).T

    det = unpack_rows(det_rows, len(det_rows))
    obs = unpack_rows([obs_rows[i] for i in sorted(obs_rows)], len(obs_rows))
    return ShotBatch(det, obs)
