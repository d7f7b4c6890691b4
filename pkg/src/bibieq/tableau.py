"""Stabilizer tableau with symbolic random-measurement outcomes.

Used to compute the noiseless reference run of a circuit.  Outcomes of
non-deterministic measurements are tracked as fresh GF(2) symbols, so a
measurement record is an affine form (constant bit, symbol mask).  A
detector or observable is well-formed only if the symbol parts of its
records cancel; otherwise the schema depends on measurement randomness
and the circuit is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from . import circuit as cir


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


@dataclass
class OutcomeForm:
    """Affine GF(2) form: const XOR (parity of symbols in mask)."""

    const: int
    symbols: int  # bitmask over allocated symbols

    @property
    def deterministic(self) -> bool:
        return self.symbols == 0

    def __xor__(self, other: "OutcomeForm") -> "OutcomeForm":
        return OutcomeForm(self.const ^ other.const, self.symbols ^ other.symbols)


ZERO_FORM = OutcomeForm(0, 0)


class Tableau:
    """Aaronson–Gottesman tableau over n qubits (destabilizers + stabilizers)."""

    def __init__(self, n: int):
        self.n = n
        # rows 0..n-1 destabilizers (X_i), rows n..2n-1 stabilizers (Z_i)
        self.x = [1 << i for i in range(n)] + [0] * n
        self.z = [0] * n + [1 << i for i in range(n)]
        self.r = [0] * (2 * n)
        self.sym = [0] * (2 * n)
        self.n_symbols = 0

    # -- gates ------------------------------------------------------------
    def h(self, q: int) -> None:
        mask = 1 << q
        for i in range(2 * self.n):
            xb = self.x[i] & mask
            zb = self.z[i] & mask
            if xb and zb:
                self.r[i] ^= 1
            if bool(xb) != bool(zb):
                self.x[i] ^= mask
                self.z[i] ^= mask

    def cnot(self, c: int, t: int) -> None:
        cm, tm = 1 << c, 1 << t
        for i in range(2 * self.n):
            xc = 1 if self.x[i] & cm else 0
            zt = 1 if self.z[i] & tm else 0
            if xc:
                self.x[i] ^= tm
            if zt:
                self.z[i] ^= cm
            if xc and zt:
                xt = 1 if self.x[i] & tm else 0
                zc = 1 if self.z[i] & cm else 0
                # note x_t already updated; phase rule uses post-update x_t
                if xt ^ zc ^ 1:
                    self.r[i] ^= 1

    # -- internals ---------------------------------------------------------
    def _rowsum_into(self, h_x, h_z, h_r, h_sym, i: int):
        """Multiply row i into the row (h_x, h_z, h_r, h_sym)."""
        x2, z2 = h_x, h_z
        x1, z1 = self.x[i], self.z[i]
        x1o = x1 & ~z1
        y1 = x1 & z1
        z1o = z1 & ~x1
        x2o = x2 & ~z2
        y2 = x2 & z2
        z2o = z2 & ~x2
        pos = bin((x1o & y2) | (y1 & z2o) | (z1o & x2o)).count("1")
        neg = bin((x1o & z2o) | (y1 & x2o) | (z1o & y2)).count("1")
        total = (2 * h_r + 2 * self.r[i] + pos - neg) % 4
        if total not in (0, 2):
            raise AssertionError("tableau rowsum produced imaginary phase")
        return h_x ^ x1, h_z ^ z1, total // 2, h_sym ^ self.sym[i]

    def _rowsum(self, h: int, i: int) -> None:
        self.x[h], self.z[h], self.r[h], self.sym[h] = self._rowsum_into(
            self.x[h], self.z[h], self.r[h], self.sym[h], i
        )

    # -- measurement and reset ---------------------------------------------
    def measure_z(self, q: int) -> OutcomeForm:
        n = self.n
        mask = 1 << q
        pivot = None
        for p in range(n, 2 * n):
            if self.x[p] & mask:
                pivot = p
                break
        if pivot is not None:
            for i in range(2 * n):
                if i != pivot and (self.x[i] & mask):
                    self._rowsum(i, pivot)
            d = pivot - n
            self.x[d], self.z[d] = self.x[pivot], self.z[pivot]
            self.r[d], self.sym[d] = self.r[pivot], self.sym[pivot]
            s = self.n_symbols
            self.n_symbols += 1
            self.x[pivot] = 0
            self.z[pivot] = mask
            self.r[pivot] = 0
            self.sym[pivot] = 1 << s
            return OutcomeForm(0, 1 << s)
        # deterministic: accumulate stabilizer rows indicated by destabilizers
        sx, sz, sr, ssym = 0, 0, 0, 0
        for i in range(n):
            if self.x[i] & mask:
                sx, sz, sr, ssym = self._rowsum_into(sx, sz, sr, ssym, i + n)
        if sx != 0 or sz != mask:
            raise AssertionError("deterministic measurement did not reduce to Z")
        return OutcomeForm(sr, ssym)

    def measure_x(self, q: int) -> OutcomeForm:
        self.h(q)
        out = self.measure_z(q)
        self.h(q)
        return out

    def _conditional_flip(self, q: int, form: OutcomeForm, anticommute_bit: str) -> None:
        """Apply X_q (or Z_q) conditioned on a classical affine form."""
        mask = 1 << q
        rows = self.z if anticommute_bit == "z" else self.x
        for i in range(2 * self.n):
            if rows[i] & mask:
                self.r[i] ^= form.const
                self.sym[i] ^= form.symbols

    def reset_z(self, q: int) -> None:
        form = self.measure_z(q)
        # X_q conditioned on the outcome returns the qubit to |0>
        self._conditional_flip(q, form, "z")

    def reset_x(self, q: int) -> None:
        form = self.measure_x(q)
        self._conditional_flip(q, form, "x")


@dataclass
class ReferenceResult:
    """Noiseless reference outcomes for a circuit."""

    record_forms: List[OutcomeForm]
    detector_values: List[int]
    observable_values: List[int]

    @property
    def record_bits(self) -> List[int]:
        return [f.const for f in self.record_forms]


def reference_run(circuit: cir.Circuit, require_zero_detectors: bool = True) -> ReferenceResult:
    """Tableau-simulate the noiseless circuit and evaluate detectors.

    Channels and measurement-flip noise are skipped (they never fire on
    the reference).  Raises ValueError if any detector or observable
    depends on a random measurement outcome, or (by default) if a
    detector's reference value is nonzero: both signal a malformed
    detector schema.
    """
    tab = Tableau(circuit.n_qubits)
    forms: Dict[int, OutcomeForm] = {}
    det_values: List[int] = []
    obs_values: List[int] = []
    det_idx = 0
    for ins in circuit.instructions:
        if isinstance(ins, cir.CNot):
            tab.cnot(ins.control, ins.target)
        elif isinstance(ins, cir.Reset):
            if ins.cond_record is not None:
                raise ValueError("conditional resets cannot be reference-simulated; "
                                 "convert the circuit first")
            if ins.basis == "X":
                tab.reset_x(ins.qubit)
            else:
                tab.reset_z(ins.qubit)
        elif isinstance(ins, cir.Measure):
            form = tab.measure_x(ins.qubit) if ins.basis == "X" else tab.measure_z(ins.qubit)
            forms[ins.record] = form
        elif isinstance(ins, cir.ECCheck):
            forms[ins.record] = ZERO_FORM  # flag records are classical; reference is 0
        elif isinstance(ins, cir.Detector):
            acc = ZERO_FORM
            for r in ins.records:
                acc = acc ^ forms[r]
            if not acc.deterministic:
                raise ValueError(f"detector {det_idx} is nondeterministic "
                                 "(depends on a random measurement)")
            if require_zero_detectors and acc.const:
                raise ValueError(f"detector {det_idx} has nonzero reference value")
            det_values.append(acc.const)
            det_idx += 1
        elif isinstance(ins, cir.Observable):
            acc = ZERO_FORM
            for r in ins.records:
                acc = acc ^ forms[r]
            if not acc.deterministic:
                raise ValueError(f"observable {ins.index} is nondeterministic")
            obs_values.append(acc.const)
    record_forms = [forms.get(i, ZERO_FORM) for i in range(circuit.n_records)]
    return ReferenceResult(record_forms, det_values, obs_values)
