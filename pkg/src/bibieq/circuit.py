"""Circuit instruction set and the seven-phase memory circuit builder.

Instructions form a flat ordered list.  Measurement records are global,
monotonically increasing slots shared by MEASURE and EC_CHECK;
detectors and observables reference MEASURE slots by absolute index.
Layers are delimited by PHASE_BOUNDARY markers and must keep their CNOTs
vertex-disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from . import gf2
from .bbcode import BBCodeSpec, ParityChecks, LogicalOperators, build_check_matrices, extract_logicals

PAULIS_1Q = ("X", "Y", "Z")
PAULIS_2Q = tuple(
    a + b for a, b in product("IXYZ", repeat=2) if a + b != "II"
)  # 15 mechanisms, lexicographic in (I, X, Y, Z)


@dataclass(frozen=True)
class Reset:
    basis: str  # "X" or "Z"
    qubit: int
    cond_record: Optional[int] = None  # applied only if that flag record is 1
    group: Optional[int] = None  # checkpoint block tag (stripped on conversion)


@dataclass(frozen=True)
class CNot:
    control: int
    target: int


@dataclass(frozen=True)
class Measure:
    basis: str
    qubit: int
    record: int


@dataclass(frozen=True)
class PauliChannel1:
    qubit: int
    mechanisms: Tuple[Tuple[str, float], ...]  # ((pauli, prob), ...), fire independently
    src: Optional[int] = None  # stable noise-location id for detector propagation
    group: Optional[int] = None


@dataclass(frozen=True)
class PauliChannel2:
    qubit_a: int
    qubit_b: int
    mechanisms: Tuple[Tuple[str, float], ...]
    src: Optional[int] = None
    group: Optional[int] = None


@dataclass(frozen=True)
class MeasFlip:
    record: int
    prob: float
    group: Optional[int] = None


@dataclass(frozen=True)
class ErasureSite:
    site_id: int
    qubit: int  # wire whose segment this canonical fault site belongs to


@dataclass(frozen=True)
class ECCheck:
    qubit: int
    label: str  # checkpoint label A..D or READOUT
    record: int
    group: Optional[int] = None


@dataclass(frozen=True)
class Detector:
    records: Tuple[int, ...]


@dataclass(frozen=True)
class Observable:
    index: int
    records: Tuple[int, ...]


@dataclass(frozen=True)
class PhaseBoundary:
    label: str


Instruction = Union[
    Reset, CNot, Measure, PauliChannel1, PauliChannel2,
    MeasFlip, ErasureSite, ECCheck, Detector, Observable, PhaseBoundary,
]


def uniform_1q_mechanisms(p_each: float) -> Tuple[Tuple[str, float], ...]:
    return tuple((p, p_each) for p in PAULIS_1Q)


def uniform_2q_mechanisms(p_each: float) -> Tuple[Tuple[str, float], ...]:
    return tuple((p, p_each) for p in PAULIS_2Q)


@dataclass
class Circuit:
    n_qubits: int
    instructions: List[Instruction]
    n_records: int
    n_detectors: int
    n_observables: int
    metadata: Dict[str, object] = field(default_factory=dict)

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for ins in self.instructions:
            name = type(ins).__name__
            out[name] = out.get(name, 0) + 1
        return out


class QubitLayout:
    """Global index assignment: L block, R block, X ancillas, Z ancillas."""

    def __init__(self, spec: BBCodeSpec):
        self.spec = spec
        self.n_cells = spec.n_cells
        self.n_qubits = 4 * spec.n_cells

    def data_l(self, cell) -> int:
        return self.spec.cell_index(cell)

    def data_r(self, cell) -> int:
        return self.n_cells + self.spec.cell_index(cell)

    def anc_x(self, cell) -> int:
        return 2 * self.n_cells + self.spec.cell_index(cell)

    def anc_z(self, cell) -> int:
        return 3 * self.n_cells + self.spec.cell_index(cell)

    def role(self, qubit: int) -> str:
        block = qubit // self.n_cells
        return ("L", "R", "X", "Z")[block]

    def is_data(self, qubit: int) -> bool:
        return qubit < 2 * self.n_cells

    @property
    def data_qubits(self) -> range:
        return range(2 * self.n_cells)

    @property
    def x_ancillas(self) -> range:
        return range(2 * self.n_cells, 3 * self.n_cells)

    @property
    def z_ancillas(self) -> range:
        return range(3 * self.n_cells, 4 * self.n_cells)


# CNOT family schedule: phase -> (X-side family index, Z-side family index),
# 1-based; the X side has families X1..X6, the Z side Z1..Z6.
PHASE_FAMILIES: Dict[int, Tuple[Optional[int], Optional[int]]] = {
    1: (None, 1),
    2: (1, 2),
    3: (2, 3),
    4: (3, 4),
    5: (4, 5),
    6: (5, 6),
    7: (6, None),
}

# Offsets used by each family: X ancillas control onto direct offsets,
# data qubits control onto Z ancillas via negated offsets.
# family index -> (sublattice, displacement set key, set index)
X_FAMILY_TARGETS = {1: ("L", "A", 1), 2: ("R", "B", 1), 3: ("R", "B", 0),
                    4: ("R", "B", 2), 5: ("L", "A", 0), 6: ("L", "A", 2)}
Z_FAMILY_SOURCES = {1: ("R", "A", 0), 2: ("R", "A", 2), 3: ("L", "B", 0),
                    4: ("L", "B", 1), 5: ("L", "B", 2), 6: ("R", "A", 1)}


def _family_cnots(spec: BBCodeSpec, layout: QubitLayout, side: str, fam: int) -> List[CNot]:
    from .bbcode import cell_add

    out = []
    l, m = spec.l, spec.m
    for cell in spec.cells():
        if side == "X":
            sub, setkey, idx = X_FAMILY_TARGETS[fam]
            disp = (spec.s_a if setkey == "A" else spec.s_b)[idx]
            nb = cell_add(cell, disp, l, m)
            data = layout.data_l(nb) if sub == "L" else layout.data_r(nb)
            out.append(CNot(layout.anc_x(cell), data))
        else:
            sub, setkey, idx = Z_FAMILY_SOURCES[fam]
            disp = (spec.s_a if setkey == "A" else spec.s_b)[idx].negated(l, m)
            nb = cell_add(cell, disp, l, m)
            data = layout.data_l(nb) if sub == "L" else layout.data_r(nb)
            out.append(CNot(data, layout.anc_z(cell)))
    return out


def build_seven_phase_round(spec: BBCodeSpec, layout: QubitLayout,
                            phase_prefix: str = "") -> List[Instruction]:
    """One syndrome-measurement cycle of CNOT layers (no resets/measures).

    Emits 7 boundary-delimited depth-1 layers.  Over the round every X
    ancilla controls once onto each of its 6 data neighbors and every Z
    ancilla receives one control from each of its 6 neighbors.
    """
    out: List[Instruction] = []
    for phase in range(1, 8):
        out.append(PhaseBoundary(f"{phase_prefix}{phase}"))
        x_fam, z_fam = PHASE_FAMILIES[phase]
        layer: List[CNot] = []
        if x_fam is not None:
            layer.extend(_family_cnots(spec, layout, "X", x_fam))
        if z_fam is not None:
            layer.extend(_family_cnots(spec, layout, "Z", z_fam))
        used = set()
        for cnot in layer:
            if cnot.control in used or cnot.target in used:
                raise ValueError(f"phase {phase}: displacement collision, qubit reused")
            used.add(cnot.control)
            used.add(cnot.target)
        out.extend(layer)
    return out


def build_memory_circuit(spec: BBCodeSpec, layout: QubitLayout, rounds: int,
                         basis: str,
                         checks: Optional[ParityChecks] = None,
                         logicals: Optional[LogicalOperators] = None) -> Circuit:
    """Noise-free memory circuit: init, `rounds` cycles, transversal readout.

    Detector schema: absolute first-round detectors on the basis-matching
    checks, consecutive-round detectors on all checks from round 2, and
    final detectors comparing the last ancilla measurement of each
    basis-side check against the parity reconstructed from the transversal
    data measurements.  One observable per logical operator of `basis`.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if basis not in ("X", "Z"):
        raise ValueError("basis must be 'X' or 'Z'")
    if checks is None:
        checks = build_check_matrices(spec)
    if logicals is None:
        logicals = extract_logicals(checks)

    ins: List[Instruction] = []
    record = 0
    n_cells = spec.n_cells

    ins.append(PhaseBoundary("init"))
    for q in layout.data_qubits:
        ins.append(Reset(basis, q))

    # per round: ancilla record slots, cell-major, X block then Z block
    anc_records: List[Tuple[int, int]] = []  # (x_base, z_base) per round
    for t in range(rounds):
        ins.append(PhaseBoundary(f"r{t}:reset"))
        for q in layout.x_ancillas:
            ins.append(Reset("X", q))
        for q in layout.z_ancillas:
            ins.append(Reset("Z", q))
        ins.extend(build_seven_phase_round(spec, layout, phase_prefix=f"r{t}:"))
        ins.append(PhaseBoundary(f"r{t}:meas"))
        x_base = record
        for q in layout.x_ancillas:
            ins.append(Measure("X", q, record))
            record += 1
        z_base = record
        for q in layout.z_ancillas:
            ins.append(Measure("Z", q, record))
            record += 1
        anc_records.append((x_base, z_base))

        basis_base, other_base = (x_base, z_base) if basis == "X" else (z_base, x_base)
        if t == 0:
            for c in range(n_cells):
                ins.append(Detector((basis_base + c,)))
        else:
            prev_x, prev_z = anc_records[t - 1]
            for c in range(n_cells):
                ins.append(Detector((x_base + c, prev_x + c)))
            for c in range(n_cells):
                ins.append(Detector((z_base + c, prev_z + c)))

    ins.append(PhaseBoundary("final"))
    data_base = record
    for q in layout.data_qubits:
        ins.append(Measure(basis, q, record))
        record += 1

    h_basis = checks.h_x if basis == "X" else checks.h_z
    last_x, last_z = anc_records[-1]
    last_basis = last_x if basis == "X" else last_z
    for c in range(n_cells):
        support = _bits(h_basis[c])
        ins.append(Detector(tuple([last_basis + c] + [data_base + q for q in support])))

    logical_rows = logicals.x_logicals if basis == "X" else logicals.z_logicals
    for i, op in enumerate(logical_rows):
        ins.append(Observable(i, tuple(data_base + q for q in _bits(op))))

    n_detectors = sum(1 for x in ins if isinstance(x, Detector))
    n_observables = len(logical_rows)
    return Circuit(
        n_qubits=layout.n_qubits,
        instructions=ins,
        n_records=record,
        n_detectors=n_detectors,
        n_observables=n_observables,
        metadata={
            "code": spec.name or f"bb_{spec.l}_{spec.m}",
            "l": spec.l, "m": spec.m,
            "rounds": rounds, "basis": basis, "schedule": "none",
        },
    )


def _bits(v: int) -> List[int]:
    out = []
    while v:
        low = v & -v
        out.append(low.bit_length() - 1)
        v ^= low
    return out


def validate_circuit(circuit: Circuit) -> List[str]:
    """Invariant check; returns a list of violation descriptions."""
    errs: List[str] = []
    n_q = circuit.n_qubits
    next_record = 0
    measure_slots = set()
    layer_touched: set = set()
    layer_label = "<start>"
    detector_idx = 0
    observable_indices = set()

    def check_qubit(q, what):
        if not (0 <= q < n_q):
            errs.append(f"{what}: qubit {q} out of range")

    for pos, ins in enumerate(circuit.instructions):
        if isinstance(ins, PhaseBoundary):
            layer_touched = set()
            layer_label = ins.label
        elif isinstance(ins, CNot):
            check_qubit(ins.control, f"@{pos} CNOT")
            check_qubit(ins.target, f"@{pos} CNOT")
            if ins.control == ins.target:
                errs.append(f"@{pos} CNOT endpoints coincide ({ins.control})")
            for q in (ins.control, ins.target):
                if q in layer_touched:
                    errs.append(f"@{pos} layer {layer_label!r}: qubit {q} in two CNOTs")
                layer_touched.add(q)
        elif isinstance(ins, Reset):
            check_qubit(ins.qubit, f"@{pos} RESET")
            if ins.basis not in ("X", "Z"):
                errs.append(f"@{pos} RESET bad basis {ins.basis!r}")
            if ins.cond_record is not None and ins.cond_record >= next_record:
                errs.append(f"@{pos} RESET condition reads unwritten record")
        elif isinstance(ins, Measure):
            check_qubit(ins.qubit, f"@{pos} MEASURE")
            if ins.record != next_record:
                errs.append(f"@{pos} MEASURE record {ins.record}, expected {next_record}")
            measure_slots.add(ins.record)
            next_record += 1
        elif isinstance(ins, ECCheck):
            check_qubit(ins.qubit, f"@{pos} EC")
            if ins.record != next_record:
                errs.append(f"@{pos} EC record {ins.record}, expected {next_record}")
            next_record += 1
        elif isinstance(ins, MeasFlip):
            if ins.record >= next_record:
                errs.append(f"@{pos} MEAS_FLIP on unwritten record {ins.record}")
            if not (0.0 <= ins.prob <= 1.0):
                errs.append(f"@{pos} MEAS_FLIP prob {ins.prob} outside [0,1]")
        elif isinstance(ins, PauliChannel1):
            check_qubit(ins.qubit, f"@{pos} PC1")
            for pauli, prob in ins.mechanisms:
                if pauli not in PAULIS_1Q:
                    errs.append(f"@{pos} PC1 bad mechanism {pauli!r}")
                if not (0.0 <= prob <= 1.0):
                    errs.append(f"@{pos} PC1 prob {prob} outside [0,1]")
        elif isinstance(ins, PauliChannel2):
            check_qubit(ins.qubit_a, f"@{pos} PC2")
            check_qubit(ins.qubit_b, f"@{pos} PC2")
            if ins.qubit_a == ins.qubit_b:
                errs.append(f"@{pos} PC2 endpoints coincide")
            for pauli, prob in ins.mechanisms:
                if pauli not in PAULIS_2Q:
                    errs.append(f"@{pos} PC2 bad mechanism {pauli!r}")
                if not (0.0 <= prob <= 1.0):
                    errs.append(f"@{pos} PC2 prob {prob} outside [0,1]")
        elif isinstance(ins, Detector):
            for r in ins.records:
                if r not in measure_slots:
                    errs.append(f"@{pos} DETECTOR references non-measurement record {r}")
            detector_idx += 1
        elif isinstance(ins, Observable):
            for r in ins.records:
                if r not in measure_slots:
                    errs.append(f"@{pos} OBSERVABLE references non-measurement record {r}")
            observable_indices.add(ins.index)
        elif isinstance(ins, ErasureSite):
            pass
        else:
            errs.append(f"@{pos} unknown instruction {ins!r}")

    if next_record != circuit.n_records:
        errs.append(f"record count mismatch: {next_record} written, {circuit.n_records} declared")
    if detector_idx != circuit.n_detectors:
        errs.append(f"detector count mismatch: {detector_idx} vs {circuit.n_detectors}")
    if observable_indices and observable_indices != set(range(circuit.n_observables)):
        errs.append("observable indices are not 0..n_observables-1")
    return errs


# ---------------------------------------------------------------------------
# text serialization
# ---------------------------------------------------------------------------

def _fmt_opts(**kwargs) -> str:
    parts = [f"{k}={v}" for k, v in kwargs.items() if v is not None]
    return (" " + " ".join(parts)) if parts else ""


def to_text(circuit: Circuit) -> str:
    """Line-based text form; round-trips byte-stably through from_text."""
    lines = ["# bibieq-circuit v1", f"NQUBITS {circuit.n_qubits}"]
    for key in sorted(circuit.metadata):
        lines.append(f"META {key} {circuit.metadata[key]}")
    for ins in circuit.instructions:
        if isinstance(ins, PhaseBoundary):
            lines.append(f"PHASE {ins.label}")
        elif isinstance(ins, Reset):
            lines.append(f"RESET {ins.basis} {ins.qubit}"
                         + _fmt_opts(cond=ins.cond_record, group=ins.group))
        elif isinstance(ins, CNot):
            lines.append(f"CNOT {ins.control} {ins.target}")
        elif isinstance(ins, Measure):
            lines.append(f"MEASURE {ins.basis} {ins.qubit} {ins.record}")
        elif isinstance(ins, PauliChannel1):
            mech = " ".join(f"{p}:{prob!r}" for p, prob in ins.mechanisms)
            lines.append(f"PC1 {ins.qubit} {mech}" + _fmt_opts(src=ins.src, group=ins.group))
        elif isinstance(ins, PauliChannel2):
            mech = " ".join(f"{p}:{prob!r}" for p, prob in ins.mechanisms)
            lines.append(f"PC2 {ins.qubit_a} {ins.qubit_b} {mech}"
                         + _fmt_opts(src=ins.src, group=ins.group))
        elif isinstance(ins, MeasFlip):
            lines.append(f"MFLIP {ins.record} {ins.prob!r}" + _fmt_opts(group=ins.group))
        elif isinstance(ins, ErasureSite):
            lines.append(f"ESITE {ins.site_id} {ins.qubit}")
        elif isinstance(ins, ECCheck):
            lines.append(f"EC {ins.qubit} {ins.label} {ins.record}" + _fmt_opts(group=ins.group))
        elif isinstance(ins, Detector):
            lines.append("DETECTOR " + " ".join(map(str, ins.records)))
        elif isinstance(ins, Observable):
            lines.append(f"OBSERVABLE {ins.index} " + " ".join(map(str, ins.records)))
        else:
            raise TypeError(f"unserializable instruction {ins!r}")
    return "\n".join(lines) + "\n"


def _split_opts(tokens: List[str]) -> Tuple[List[str], Dict[str, str]]:
    args = []
    opts = {}
    for tok in tokens:
        if "=" in tok and not ":" in tok:
            k, _, v = tok.partition("=")
            opts[k] = v
        else:
            args.append(tok)
    return args, opts


def from_text(text: str) -> Circuit:
    n_qubits = 0
    metadata: Dict[str, object] = {}
    ins: List[Instruction] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, rest = tokens[0], tokens[1:]
        if kind == "NQUBITS":
            n_qubits = int(rest[0])
        elif kind == "META":
            key = rest[0]
            val: object = " ".join(rest[1:])
            try:
                val = int(val)  # keep round-trip stable for numeric metadata
            except ValueError:
                pass
            metadata[key] = val
        elif kind == "PHASE":
            ins.append(PhaseBoundary(" ".join(rest)))
        elif kind == "RESET":
            args, opts = _split_opts(rest)
            ins.append(Reset(args[0], int(args[1]),
                             cond_record=int(opts["cond"]) if "cond" in opts else None,
                             group=int(opts["group"]) if "group" in opts else None))
        elif kind == "CNOT":
            ins.append(CNot(int(rest[0]), int(rest[1])))
        elif kind == "MEASURE":
            ins.append(Measure(rest[0], int(rest[1]), int(rest[2])))
        elif kind in ("PC1", "PC2"):
            args, opts = _split_opts(rest)
            nq = 1 if kind == "PC1" else 2
            qubits = [int(a) for a in args[:nq]]
            mechs = []
            for tok in args[nq:]:
                pauli, _, prob = tok.partition(":")
                mechs.append((pauli, float(prob)))
            src = int(opts["src"]) if "src" in opts else None
            group = int(opts["group"]) if "group" in opts else None
            if kind == "PC1":
                ins.append(PauliChannel1(qubits[0], tuple(mechs), src=src, group=group))
            else:
                ins.append(PauliChannel2(qubits[0], qubits[1], tuple(mechs), src=src, group=group))
        elif kind == "MFLIP":
            args, opts = _split_opts(rest)
            ins.append(MeasFlip(int(args[0]), float(args[1]),
                                group=int(opts["group"]) if "group" in opts else None))
        elif kind == "ESITE":
            ins.append(ErasureSite(int(rest[0]), int(rest[1])))
        elif kind == "EC":
            args, opts = _split_opts(rest)
            ins.append(ECCheck(int(args[0]), args[1], int(args[2]),
                               group=int(opts["group"]) if "group" in opts else None))
        elif kind == "DETECTOR":
            ins.append(Detector(tuple(int(r) for r in rest)))
        elif kind == "OBSERVABLE":
            ins.append(Observable(int(rest[0]), tuple(int(r) for r in rest[1:])))
        else:
            raise ValueError(f"unknown instruction line {raw!r}")
    n_records = sum(1 for x in ins if isinstance(x, (Measure, ECCheck)))
    n_detectors = sum(1 for x in ins if isinstance(x, Detector))
    n_observables = len({x.index for x in ins if isinstance(x, Observable)})
    return Circuit(n_qubits, ins, n_records, n_detectors, n_observables, metadata)


def to_stim_text(circuit: Circuit) -> str:
    """Export to the common stabilizer-circuit text format.

    Lossy: erasure-check and erasure-site annotations have no counterpart
    there and are emitted as comments.  Detector record references are
    converted from absolute slots to relative lookbacks.  Conditional
    resets are not representable and are rejected.
    """
    lines = []
    written = 0
    slot_order: List[int] = []
    for ins in circuit.instructions:
        if isinstance(ins, (Measure, ECCheck)):
            slot_order.append(ins.record)
    slot_pos = {slot: i for i, slot in enumerate(slot_order)}
    # measurement flip probabilities folded into M instructions
    flip_prob: Dict[int, float] = {}
    for ins in circuit.instructions:
        if isinstance(ins, MeasFlip):
            flip_prob[ins.record] = flip_prob.get(ins.record, 0.0) + ins.prob

    for ins in circuit.instructions:
        if isinstance(ins, PhaseBoundary):
            lines.append(f"TICK # {ins.label}")
        elif isinstance(ins, Reset):
            if ins.cond_record is not None:
                raise ValueError("conditional resets are not representable in stim text")
            lines.append(("RX" if ins.basis == "X" else "R") + f" {ins.qubit}")
        elif isinstance(ins, CNot):
            lines.append(f"CX {ins.control} {ins.target}")
        elif isinstance(ins, Measure):
            p = flip_prob.get(ins.record, 0.0)
            gate = "MX" if ins.basis == "X" else "M"
            lines.append((f"{gate}({p!r}) " if p else f"{gate} ") + str(ins.qubit))
            written += 1
        elif isinstance(ins, ECCheck):
            lines.append(f"# EC_CHECK qubit={ins.qubit} label={ins.label} (not representable)")
            lines.append(f"M {ins.qubit}  # stand-in for EC flag record")
            written += 1
        elif isinstance(ins, ErasureSite):
            lines.append(f"# ERASURE_SITE {ins.site_id}")
        elif isinstance(ins, MeasFlip):
            pass  # folded into the measurement
        elif isinstance(ins, PauliChannel1):
            probs = dict(ins.mechanisms)
            args = ", ".join(repr(probs.get(p, 0.0)) for p in PAULIS_1Q)
            lines.append(f"PAULI_CHANNEL_1({args}) {ins.qubit}")
        elif isinstance(ins, PauliChannel2):
            probs = dict(ins.mechanisms)
            args = ", ".join(repr(probs.get(p, 0.0)) for p in PAULIS_2Q)
            lines.append(f"PAULI_CHANNEL_2({args}) {ins.qubit_a} {ins.qubit_b}")
        elif isinstance(ins, Detector):
            refs = " ".join(f"rec[{slot_pos[r] - written}]" for r in ins.records)
            lines.append(f"DETECTOR {refs}")
        elif isinstance(ins, Observable):
            refs = " ".join(f"rec[{slot_pos[r] - written}]" for r in ins.records)
            lines.append(f"OBSERVABLE_INCLUDE({ins.index}) {refs}")
    return "\n".join(lines) + "\n"
