"""Lowering of the noise-free memory circuit into an erasure-annotated form.

The noise law ties the Pauli rate and the flag/measurement flip rate to a
single erasure rate: p = beta*e, q = gamma*e.  A checkpoint schedule
selects boundaries among the four CNOT bundles

    A = {Z1, X1, Z2}   B = {X2, Z3, X3, Z4}   C = {X4, Z5, X5}   D = {Z6, X6}

and every selected boundary receives, per live qubit, an erasure check
whose flag passes through a bit-flip channel, followed by a conditional
reset.  Checkpoint D coincides with the ancilla readout (flag checks sit
immediately before measurements) and, for data qubits, with an explicit
end-of-round block; in the final round the data D-check merges with the
readout check preceding the transversal measurement.

Segments are the per-qubit wire intervals between resets; the r entangling
gates inside a segment define canonical fault sites F_1..F_r (one after
each gate) plus a terminal site F_{r+1} just before the closing check.
Because bundle C ends between the two halves of table phase 6, the
compiled circuit splits that phase into two depth-1 layers (the halves act
on disjoint qubits, so vertex-disjointness is preserved).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import circuit as cir
from .circuit import (
    Circuit, CNot, Detector, ECCheck, ErasureSite, Measure, MeasFlip,
    Observable, PauliChannel1, PauliChannel2, PhaseBoundary, Reset,
    uniform_1q_mechanisms, uniform_2q_mechanisms,
)


@dataclass(frozen=True)
class NoiseLaw:
    """Erasure-biased noise: per-site erasure rate e, Pauli rate p = beta*e,
    flag/measurement flip rate q = gamma*e."""

    e: float
    beta: float = 0.1
    gamma: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.e <= 1.0):
            raise ValueError("e must be in [0, 1]")
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError("derived p, q must be in [0, 1]")

    @property
    def p(self) -> float:
        return self.beta * self.e

    @property
    def q(self) -> float:
        return self.gamma * self.e


BUNDLE_FAMILIES: Dict[str, Tuple[str, ...]] = {
    "A": ("Z1", "X1", "Z2"),
    "B": ("X2", "Z3", "X3", "Z4"),
    "C": ("X4", "Z5", "X5"),
    "D": ("Z6", "X6"),
}

# bundle -> boundary position expressed as (phase after which it falls);
# phase 6 is split into 6a (X5) and 6b (Z6).
_BUNDLE_ORDER = ("A", "B", "C", "D")


@dataclass(frozen=True)
class ECSchedule:
    tag: str
    checkpoints: Tuple[str, ...]

    def __post_init__(self):
        if any(c not in _BUNDLE_ORDER for c in self.checkpoints):
            raise ValueError("checkpoints must be drawn from A, B, C, D")
        if list(self.checkpoints) != sorted(set(self.checkpoints),
                                            key=_BUNDLE_ORDER.index):
            raise ValueError("checkpoints must be ordered and unique")
        if "D" not in self.checkpoints:
            raise ValueError("checkpoint D is mandatory (post-measurement resets)")

    @property
    def phase_partition(self) -> Dict[str, Tuple[str, ...]]:
        return dict(BUNDLE_FAMILIES)


S_4EC = ECSchedule("4ec", ("A", "B", "C", "D"))
S_2EC = ECSchedule("2ec", ("B", "D"))


def get_schedule(tag: str) -> ECSchedule:
    t = tag.lower()
    if t in ("4ec", "abcd"):
        return S_4EC
    if t in ("2ec", "bd"):
        return S_2EC
    if t.startswith("ec:"):
        pts = tuple(p.strip().upper() for p in t[3:].split(","))
        return ECSchedule(tag, pts)
    raise KeyError(f"unknown schedule {tag!r} (use 2ec, 4ec or ec:<letters>)")


@dataclass
class Segment:
    """Per-qubit wire interval between resets, closed by an erasure check."""

    qubit: int
    index: int
    start: int
    end: Optional[int]
    interactions: List[Tuple[int, int]] = field(default_factory=list)
    sites: List[int] = field(default_factory=list)
    ec_record: Optional[int] = None
    checkpoint: Optional[str] = None
    closed_by: str = "open"

    @property
    def r(self) -> int:
        return len(self.interactions)


@dataclass
class ErasureCircuit:
    circuit: Circuit
    segments: List[Segment]
    schedule: ECSchedule
    noise: NoiseLaw
    n_sites: int
    record_map: Dict[int, int]  # source-circuit measure record -> compiled slot

    @property
    def max_r(self) -> int:
        return max((s.r for s in self.segments), default=0)


@dataclass
class ErasureLog:
    """Sampled erasure pattern: true first hits plus (noisy) flags."""

    flags: np.ndarray       # bool per segment
    first_hits: np.ndarray  # 1-based site ordinal of the first hit, 0 = none

    def entries(self, segments: Sequence[Segment]) -> List[Tuple[int, int, Optional[str]]]:
        return [
            (seg.qubit, seg.index, seg.checkpoint)
            for seg, fl in zip(segments, self.flags) if fl
        ]


class _SegmentTracker:
    def __init__(self):
        self.segments: List[Segment] = []
        self.open: Dict[int, Segment] = {}
        self.counts: Dict[int, int] = {}

    def begin(self, qubit: int, pos: int):
        if qubit in self.open:
            seg = self.open.pop(qubit)
            seg.closed_by = "reset"
            seg.end = pos
        idx = self.counts.get(qubit, 0)
        self.counts[qubit] = idx + 1
        seg = Segment(qubit=qubit, index=idx, start=pos, end=None)
        self.open[qubit] = seg
        self.segments.append(seg)

    def interact(self, qubit: int, pos: int, partner: int):
        seg = self.open.get(qubit)
        if seg is None:
            self.begin(qubit, pos)
            seg = self.open[qubit]
        seg.interactions.append((pos, partner))

    def site(self, qubit: int, site_id: int):
        seg = self.open.get(qubit)
        if seg is not None:
            seg.sites.append(site_id)

    def close_ec(self, qubit: int, pos: int, record: int, label: str):
        seg = self.open.pop(qubit, None)
        if seg is None:
            return
        seg.end = pos
        seg.ec_record = record
        seg.checkpoint = label
        seg.closed_by = "ec"

    def close_measure(self, qubit: int, pos: int):
        seg = self.open.pop(qubit, None)
        if seg is not None:
            seg.end = pos
            seg.closed_by = "measure"

    def finish(self, pos: int):
        for seg in self.open.values():
            seg.end = pos
            seg.closed_by = "end"
        self.open.clear()


def enumerate_segments(circuit: Circuit) -> List[Segment]:
    """Re-derive the segment partition from an instruction stream.

    Wires are partitioned by resets; erasure checks close segments, and a
    measurement or the circuit end closes any still-open segment (flagged
    via `closed_by`).
    """
    tracker = _SegmentTracker()
    for pos, ins in enumerate(circuit.instructions):
        if isinstance(ins, Reset):
            tracker.begin(ins.qubit, pos)
        elif isinstance(ins, CNot):
            tracker.interact(ins.control, pos, ins.target)
            tracker.interact(ins.target, pos, ins.control)
        elif isinstance(ins, ErasureSite):
            tracker.site(ins.qubit, ins.site_id)
        elif isinstance(ins, ECCheck):
            tracker.close_ec(ins.qubit, pos, ins.record, ins.label)
        elif isinstance(ins, Measure):
            tracker.close_measure(ins.qubit, pos)
    tracker.finish(len(circuit.instructions))
    segments = tracker.segments
    for seg in segments:
        if seg.closed_by == "ec" and len(seg.sites) != seg.r + 1:
            raise ValueError(
                f"segment (q{seg.qubit}, #{seg.index}) has {len(seg.sites)} "
                f"sites for r={seg.r}"
            )
    return segments


# ---------------------------------------------------------------------------
# compile
# ---------------------------------------------------------------------------

_PHASE_OF_X_FAMILY = {1: 2, 2: 3, 3: 4, 4: 5, 5: 6, 6: 7}
_PHASE_OF_Z_FAMILY = {1: 1, 2: 2, 3: 3, 4: 4, 5: 5, 6: 6}


class _Emitter:
    def __init__(self, n_qubits: int, noise: NoiseLaw):
        self.out: List[cir.Instruction] = []
        self.noise = noise
        self.record = 0
        self.site_id = 0
        self.src = None  # assigned after sites are counted
        self.baseline_srcs: List[int] = []
        self.tracker = _SegmentTracker()
        self.group = 0

    @property
    def pos(self) -> int:
        return len(self.out)

    def emit(self, ins: cir.Instruction):
        self.out.append(ins)

    def next_record(self) -> int:
        r = self.record
        self.record += 1
        return r

    def next_site(self, qubit: int) -> int:
        s = self.site_id
        self.site_id += 1
        self.tracker.site(qubit, s)
        self.emit(ErasureSite(s, qubit))
        return s


def compile(c0: Circuit, noise: NoiseLaw, schedule: ECSchedule,
            ec_targets: str = "all",
            include_idle_noise: bool = False) -> ErasureCircuit:
    """Deterministic lowering of the noise-free circuit.

    Inserts, in order: depolarizing channels after every gate and reset,
    flip noise after every measurement and flag, erasure checks plus
    conditional resets at schedule boundaries, and fault-site markers at
    all canonical locations.  The output is identical for identical
    inputs.
    """
    violations = cir.validate_circuit(c0)
    if violations:
        raise ValueError(f"source circuit invalid: {violations[:3]}")
    if ec_targets not in ("all", "data"):
        raise ValueError("ec_targets must be 'all' or 'data'")

    meta = dict(c0.metadata)
    rounds = int(meta.get("rounds", 0))
    basis = str(meta.get("basis", "Z"))
    n_cells = c0.n_qubits // 4
    data_qubits = range(0, 2 * n_cells)
    p = noise.p
    q = noise.q
    pc1 = uniform_1q_mechanisms(p / 3.0)
    pc2 = uniform_2q_mechanisms(p / 15.0)

    em = _Emitter(c0.n_qubits, noise)
    rec_map: Dict[int, int] = {}
    # deferred baseline channel source ids: assigned site_count + k at the end
    pending_srcs: List[int] = []  # positions in em.out of channels awaiting src

    def emit_channel1(qubit: int, group=None):
        em.emit(PauliChannel1(qubit, pc1, src=None, group=group))
        pending_srcs.append(em.pos - 1)

    def emit_channel2(qa: int, qb: int):
        em.emit(PauliChannel2(qa, qb, pc2, src=None))
        pending_srcs.append(em.pos - 1)

    def qubit_basis(qubit: int) -> str:
        if qubit < 2 * n_cells:
            return basis
        return "X" if qubit < 3 * n_cells else "Z"

    def checkpoint_block(label: str, data_only: bool = False):
        """Erasure check + conditional reset for every live qubit."""
        em.group += 1
        grp = em.group
        em.emit(PhaseBoundary(f"ck{label}"))
        if data_only or ec_targets == "data":
            targets = data_qubits
        else:
            targets = range(c0.n_qubits)
        for qubit in targets:
            em.next_site(qubit)  # terminal site of the segment being closed
            rec = em.next_record()
            em.emit(ECCheck(qubit, label, rec, group=grp))
            em.tracker.close_ec(qubit, em.pos - 1, rec, label)
            em.emit(MeasFlip(rec, q, group=grp))
            em.emit(Reset(qubit_basis(qubit), qubit, cond_record=rec, group=grp))
            em.tracker.begin(qubit, em.pos - 1)
            em.emit(PauliChannel1(qubit, pc1, src=None, group=grp))
            pending_srcs.append(em.pos - 1)

    def readout_block(qubit: int, meas: Measure, label: str):
        em.next_site(qubit)
        rec = em.next_record()
        em.emit(ECCheck(qubit, label, rec, group=None))
        em.tracker.close_ec(qubit, em.pos - 1, rec, label)
        em.emit(MeasFlip(rec, q))
        new_slot = em.next_record()
        rec_map[meas.record] = new_slot
        em.emit(Measure(meas.basis, meas.qubit, new_slot))
        em.emit(MeasFlip(new_slot, q))

    # --- walk the source circuit ------------------------------------------
    selected = set(schedule.checkpoints)
    current_round = -1
    phase6_buffer: List[CNot] = []
    in_phase = None  # current source phase number within a round

    def flush_layer(cnots: List[CNot], label: str, with_idle: bool = True):
        if not cnots:
            return
        em.emit(PhaseBoundary(label))
        touched = set()
        for g in cnots:
            em.emit(CNot(g.control, g.target))
            em.tracker.interact(g.control, em.pos - 1, g.target)
            em.tracker.interact(g.target, em.pos - 1, g.control)
            emit_channel2(g.control, g.target)
            em.next_site(g.control)
            em.next_site(g.target)
            touched.add(g.control)
            touched.add(g.target)
        if include_idle_noise and with_idle:
            for qubit in range(c0.n_qubits):
                if qubit not in touched:
                    emit_channel1(qubit)

    # collect instructions per source layer
    src_layers: List[Tuple[str, List[cir.Instruction]]] = []
    label = "<pre>"
    bucket: List[cir.Instruction] = []
    for ins in c0.instructions:
        if isinstance(ins, PhaseBoundary):
            src_layers.append((label, bucket))
            label, bucket = ins.label, []
        else:
            bucket.append(ins)
    src_layers.append((label, bucket))

    last_round = rounds - 1

    for label, bucket in src_layers:
        if label == "<pre>" and not bucket:
            continue
        if label == "init":
            em.emit(PhaseBoundary("init"))
            for ins in bucket:
                assert isinstance(ins, Reset)
                em.emit(ins)
                em.tracker.begin(ins.qubit, em.pos - 1)
                emit_channel1(ins.qubit)
            continue

        if label.startswith("r") and ":" in label:
            rtok, _, ptok = label.partition(":")
            t = int(rtok[1:])
            if ptok == "reset":
                current_round = t
                em.emit(PhaseBoundary(label))
                for ins in bucket:
                    assert isinstance(ins, Reset)
                    em.emit(ins)
                    em.tracker.begin(ins.qubit, em.pos - 1)
                    emit_channel1(ins.qubit)
                continue
            if ptok == "meas":
                # ancilla readout: checkpoint D flag checks precede measurement
                em.emit(PhaseBoundary(f"r{t}:ckD"))
                for ins in bucket:
                    if isinstance(ins, Measure):
                        readout_block(ins.qubit, ins, "D")
                    elif isinstance(ins, Detector):
                        em.emit(Detector(tuple(rec_map[r] for r in ins.records)))
                    else:
                        raise ValueError(f"unexpected instruction in meas layer: {ins}")
                # end-of-round checkpoint for data qubits (merged into the
                # readout check after the final round); ancillas had their
                # D-check at readout
                if t != last_round:
                    checkpoint_block("D", data_only=True)
                continue
            # CNOT phase layers 1..7
            phase = int(ptok)
            cnots = [g for g in bucket if isinstance(g, CNot)]
            if phase == 6:
                def is_x_side(g: CNot) -> bool:
                    return 2 * n_cells <= g.control < 3 * n_cells
                x_side = [g for g in cnots if is_x_side(g)]
                z_side = [g for g in cnots if not is_x_side(g)]
                flush_layer(x_side, f"r{t}:6a")
                if "C" in selected:
                    checkpoint_block("C")
                flush_layer(z_side, f"r{t}:6b")
            else:
                flush_layer(cnots, label)
                if phase == 2 and "A" in selected:
                    checkpoint_block("A")
                elif phase == 4 and "B" in selected:
                    checkpoint_block("B")
            continue

        if label == "final":
            em.emit(PhaseBoundary("final"))
            for ins in bucket:
                if isinstance(ins, Measure):
                    readout_block(ins.qubit, ins, "D")
                elif isinstance(ins, Detector):
                    em.emit(Detector(tuple(rec_map[r] for r in ins.records)))
                elif isinstance(ins, Observable):
                    em.emit(Observable(ins.index, tuple(rec_map[r] for r in ins.records)))
                else:
                    raise ValueError(f"unexpected instruction in final layer: {ins}")
            continue

        raise ValueError(f"unrecognized source layer {label!r}")

    em.tracker.finish(em.pos)

    # assign stable source ids: erasure sites occupy [0, n_sites), baseline
    # channels follow in emission order
    n_sites = em.site_id
    instructions = em.out
    for k, pos in enumerate(pending_srcs):
        ins = instructions[pos]
        if isinstance(ins, PauliChannel1):
            instructions[pos] = PauliChannel1(ins.qubit, ins.mechanisms,
                                              src=n_sites + k, group=ins.group)
        else:
            instructions[pos] = PauliChannel2(ins.qubit_a, ins.qubit_b,
                                              ins.mechanisms, src=n_sites + k,
                                              group=ins.group)

    meta = dict(c0.metadata)
    meta["schedule"] = schedule.tag
    meta["e"] = repr(noise.e)
    meta["beta"] = repr(noise.beta)
    meta["gamma"] = repr(noise.gamma)
    compiled = Circuit(
        n_qubits=c0.n_qubits,
        instructions=instructions,
        n_records=em.record,
        n_detectors=c0.n_detectors,
        n_observables=c0.n_observables,
        metadata=meta,
    )
    segments = [s for s in em.tracker.segments]
    # canonical order: sort by (start position, qubit) for reproducibility
    segments.sort(key=lambda s: (s.start, s.qubit))
    ce = ErasureCircuit(
        circuit=compiled,
        segments=segments,
        schedule=schedule,
        noise=noise,
        n_sites=n_sites,
        record_map=rec_map,
    )
    _check_partition(ce)
    return ce


def _check_partition(ce: ErasureCircuit) -> None:
    """Every gate on every wire must fall in exactly one segment."""
    by_qubit: Dict[int, List[Segment]] = {}
    for seg in ce.segments:
        by_qubit.setdefault(seg.qubit, []).append(seg)
    for qubit, segs in by_qubit.items():
        segs.sort(key=lambda s: s.start)
        for a, b in zip(segs, segs[1:]):
            if a.end is None or a.end > b.start:
                raise AssertionError(f"overlapping segments on qubit {qubit}")
    counted = sum(len(s.interactions) for s in ce.segments)
    total = 2 * sum(1 for i in ce.circuit.instructions if isinstance(i, CNot))
    if counted != total:
        raise AssertionError(
            f"segment partition lost interactions ({counted} != {total})"
        )


def load_erasure_circuit(circuit: Circuit) -> ErasureCircuit:
    """Rebuild the segment view of a deserialized erasure-annotated circuit.

    The noise law and schedule come from the circuit metadata; segments
    and fault sites are re-derived from the instruction stream.
    """
    meta = circuit.metadata
    try:
        noise = NoiseLaw(float(meta["e"]), float(meta["beta"]), float(meta["gamma"]))
        schedule = get_schedule(str(meta["schedule"]))
    except KeyError as missing:
        raise ValueError(f"circuit metadata lacks {missing}; not a compiled "
                         "erasure circuit") from None
    segments = enumerate_segments(circuit)
    segments.sort(key=lambda s: (s.start, s.qubit))
    n_sites = 1 + max((i.site_id for i in circuit.instructions
                       if isinstance(i, ErasureSite)), default=-1)
    ce = ErasureCircuit(circuit, segments, schedule, noise, n_sites, {})
    _check_partition(ce)
    return ce


def sample_erasure_pattern(ce: ErasureCircuit, rng_seed) -> ErasureLog:
    """Draw the physical erasure pattern and the noisy flags.

    Each fault site erases independently with probability e; the segment
    flag is (any site hit) XOR a flip with probability q.
    """
    rng = np.random.default_rng(rng_seed)
    e = ce.noise.e
    q = ce.noise.q
    n_seg = len(ce.segments)
    first_hits = np.zeros(n_seg, dtype=np.int32)
    site_counts = np.array([len(s.sites) for s in ce.segments])
    hits = rng.random(int(site_counts.sum())) < e
    offset = 0
    for i, count in enumerate(site_counts):
        if count:
            seg_hits = hits[offset:offset + count]
            idx = np.flatnonzero(seg_hits)
            if idx.size:
                first_hits[i] = idx[0] + 1
            offset += count
    flips = rng.random(n_seg) < q
    ec_closed = np.array([s.closed_by == "ec" for s in ce.segments])
    flags = ((first_hits > 0) ^ flips) & ec_closed
    return ErasureLog(flags=flags, first_hits=first_hits)
