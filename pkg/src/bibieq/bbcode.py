"""Bivariate-bicycle code construction on an l x m torus.

A code is specified by two three-term displacement sets S_A, S_B (the
monomial exponents of the defining polynomial pair) and lattice periods
(l, m).  Each unit cell hosts an L data qubit, an R data qubit, an X
ancilla and a Z ancilla.  The check matrices use the block convention

    h_x = [A | B]          X check at cell i -> L data at A_k(i), R data at B_k(i)
    h_z = [B^T | A^T]      Z check at cell i -> L data at B_k^T(i), R data at A_k^T(i)

which is the unique choice consistent with both the CNOT schedule used by
the circuit builder (X ancillas control onto the direct offsets) and the
CSS condition h_x . h_z^T = 0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from . import gf2

Cell = Tuple[int, int]


@dataclass(frozen=True)
class Displacement:
    """Lattice offset (dx, dy); canonical form is reduced mod (l, m)."""

    dx: int
    dy: int

    def reduced(self, l: int, m: int) -> "Displacement":
        return Displacement(self.dx % l, self.dy % m)

    def negated(self, l: int, m: int) -> "Displacement":
        return Displacement((-self.dx) % l, (-self.dy) % m)


def cell_add(cell: Cell, delta: Displacement, l: int, m: int) -> Cell:
    """Torus displacement: ((u+dx) mod l, (v+dy) mod m)."""
    u, v = cell
    return ((u + delta.dx) % l, (v + delta.dy) % m)


_MONOMIAL_RE = re.compile(r"^(x(\^\d+)?)?(y(\^\d+)?)?$")


def parse_poly(text: str) -> List[Displacement]:
    """Parse a polynomial such as ``x^3 + y + y^2`` into displacements.

    ``1`` denotes the constant monomial (0, 0).
    """
    out = []
    for term in (t.replace(" ", "") for t in text.split("+")):
        if term == "1":
            out.append(Displacement(0, 0))
            continue
        match = _MONOMIAL_RE.match(term)
        if not term or match is None:
            raise ValueError(f"cannot parse monomial {term!r}")
        dx = dy = 0
        if match.group(1):
            dx = int(match.group(2)[1:]) if match.group(2) else 1
        if match.group(3):
            dy = int(match.group(4)[1:]) if match.group(4) else 1
        out.append(Displacement(dx, dy))
    return out


def poly_str(displacements: Sequence[Displacement]) -> str:
    parts = []
    for d in displacements:
        if d.dx == 0 and d.dy == 0:
            parts.append("1")
            continue
        term = ""
        if d.dx:
            term += "x" if d.dx == 1 else f"x^{d.dx}"
        if d.dy:
            term += "y" if d.dy == 1 else f"y^{d.dy}"
        parts.append(term)
    return " + ".join(parts)


@dataclass(frozen=True)
class BBCodeSpec:
    l: int
    m: int
    s_a: Tuple[Displacement, ...]
    s_b: Tuple[Displacement, ...]
    claimed_n: int
    claimed_k: int
    claimed_d: int
    name: str = ""

    def __post_init__(self):
        if self.l < 1 or self.m < 1:
            raise ValueError("lattice periods must be positive")
        if self.claimed_n != 2 * self.l * self.m:
            raise ValueError("claimed_n must equal 2*l*m")
        for sset, label in ((self.s_a, "S_A"), (self.s_b, "S_B")):
            reduced = {d.reduced(self.l, self.m) for d in sset}
            if len(reduced) != len(sset):
                raise ValueError(
                    f"{label} has displacements that coincide mod (l, m); "
                    "duplicate Tanner edges are rejected"
                )

    @property
    def n(self) -> int:
        return 2 * self.l * self.m

    @property
    def n_cells(self) -> int:
        return self.l * self.m

    @property
    def check_weight(self) -> int:
        return len(self.s_a) + len(self.s_b)

    def cell_index(self, cell: Cell) -> int:
        u, v = cell
        return (u % self.l) * self.m + (v % self.m)

    def cells(self) -> List[Cell]:
        return [(u, v) for u in range(self.l) for v in range(self.m)]


# The code family evaluated throughout: fixed polynomial pair
# A = x^3 + y + y^2, B = y^3 + x + x^2, lattice scaled via (l, m).
_FAMILY_A = (Displacement(3, 0), Displacement(0, 1), Displacement(0, 2))
_FAMILY_B = (Displacement(0, 3), Displacement(1, 0), Displacement(2, 0))

CODE_REGISTRY: Dict[str, BBCodeSpec] = {
    "72": BBCodeSpec(6, 6, _FAMILY_A, _FAMILY_B, 72, 12, 6, name="[[72,12,6]]"),
    "108": BBCodeSpec(9, 6, _FAMILY_A, _FAMILY_B, 108, 8, 10, name="[[108,8,10]]"),
    "144": BBCodeSpec(12, 6, _FAMILY_A, _FAMILY_B, 144, 12, 12, name="[[144,12,12]]"),
}


def get_code(name: str) -> BBCodeSpec:
    key = name.strip().lstrip("[").rstrip("]").split(",")[0]
    if key in CODE_REGISTRY:
        return CODE_REGISTRY[key]
    raise KeyError(f"unknown code {name!r}; known: {sorted(CODE_REGISTRY)}")


def spec_from_config(text: str) -> BBCodeSpec:
    """Load a code spec from a plain-text config.

    Expected keys (one ``key = value`` per line, ``#`` comments):
    l, m, a_poly, b_poly, n, k, d and optional name.
    """
    values: Dict[str, str] = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip().lower()] = val.strip()
    try:
        l = int(values["l"])
        m = int(values["m"])
        s_a = tuple(parse_poly(values["a_poly"]))
        s_b = tuple(parse_poly(values["b_poly"]))
        n = int(values["n"])
        k = int(values["k"])
        d = int(values["d"])
    except KeyError as missing:
        raise ValueError(f"config missing key {missing}") from None
    return BBCodeSpec(l, m, s_a, s_b, n, k, d, name=values.get("name", ""))


def spec_to_config(spec: BBCodeSpec) -> str:
    lines = [
        f"name = {spec.name}" if spec.name else "",
        f"l = {spec.l}",
        f"m = {spec.m}",
        f"a_poly = {poly_str(spec.s_a)}",
        f"b_poly = {poly_str(spec.s_b)}",
        f"n = {spec.claimed_n}",
        f"k = {spec.claimed_k}",
        f"d = {spec.claimed_d}",
    ]
    return "\n".join(line for line in lines if line) + "\n"


@dataclass
class ParityChecks:
    """GF(2) check matrices as integer bitset rows, one row per cell.

    Column order is the L block (cell-major) followed by the R block, so
    column ``j`` is data qubit ``j`` of the circuit layout.
    """

    spec: BBCodeSpec
    h_x: List[int]
    h_z: List[int]

    @property
    def n(self) -> int:
        return self.spec.n

    def column(self, sublattice: str, cell: Cell) -> int:
        base = 0 if sublattice == "L" else self.spec.n_cells
        return base + self.spec.cell_index(cell)


def tanner_neighbors(spec: BBCodeSpec, check_type: str, cell: Cell) -> List[Tuple[str, Cell]]:
    """Data neighbors of the check at `cell`, ordered (A1..A3, B1..B3).

    X checks reach L data via the direct A offsets and R data via the
    direct B offsets; Z checks reach R data via the negated A offsets and
    L data via the negated B offsets.
    """
    l, m = spec.l, spec.m
    if check_type == "X":
        a_side = [("L", cell_add(cell, d, l, m)) for d in spec.s_a]
        b_side = [("R", cell_add(cell, d, l, m)) for d in spec.s_b]
    elif check_type == "Z":
        a_side = [("R", cell_add(cell, d.negated(l, m), l, m)) for d in spec.s_a]
        b_side = [("L", cell_add(cell, d.negated(l, m), l, m)) for d in spec.s_b]
    else:
        raise ValueError("check_type must be 'X' or 'Z'")
    return a_side + b_side


def build_check_matrices(spec: BBCodeSpec) -> ParityChecks:
    """Construct h_x and h_z; rejects specs that break the CSS condition."""
    n_cells = spec.n_cells
    h_x = []
    h_z = []
    for cell in spec.cells():
        row_x = 0
        for sub, nb in tanner_neighbors(spec, "X", cell):
            col = (0 if sub == "L" else n_cells) + spec.cell_index(nb)
            if row_x & (1 << col):
                raise ValueError("duplicate Tanner edge in X check")
            row_x |= 1 << col
        row_z = 0
        for sub, nb in tanner_neighbors(spec, "Z", cell):
            col = (0 if sub == "L" else n_cells) + spec.cell_index(nb)
            if row_z & (1 << col):
                raise ValueError("duplicate Tanner edge in Z check")
            row_z |= 1 << col
        h_x.append(row_x)
        h_z.append(row_z)
    checks = ParityChecks(spec, h_x, h_z)
    for rx in h_x:
        for rz in h_z:
            if gf2.dot(rx, rz):
                raise ValueError(
                    "h_x . h_z^T != 0; displacement convention is inconsistent"
                )
    return checks


def compute_k(checks: ParityChecks) -> int:
    n = checks.n
    return n - gf2.rank(checks.h_x, n) - gf2.rank(checks.h_z, n)


@dataclass
class LogicalOperators:
    x_logicals: List[int]
    z_logicals: List[int]

    @property
    def k(self) -> int:
        return len(self.x_logicals)


def extract_logicals(checks: ParityChecks) -> LogicalOperators:
    """Paired logical operator bases.

    X logicals span ker(h_z) / rowspace(h_x), Z logicals span
    ker(h_x) / rowspace(h_z), and the Z basis is transformed so the
    overlap-parity pairing matrix is the identity.
    """
    n = checks.n
    k = compute_k(checks)
    if k <= 0:
        raise ValueError("code has no logical qubits (k = 0)")
    x_cands = gf2.quotient_basis(gf2.kernel_basis(checks.h_z, n), checks.h_x, n)
    z_cands = gf2.quotient_basis(gf2.kernel_basis(checks.h_x, n), checks.h_z, n)
    if len(x_cands) != k or len(z_cands) != k:
        raise ValueError("logical candidate count does not match k")
    # pairing[i] bit j = <x_i, z_j>
    pairing = [
        sum(gf2.dot(x, z) << j for j, z in enumerate(z_cands)) for x in x_cands
    ]
    try:
        inv = gf2.invert(pairing, k)
    except ValueError:
        raise ValueError("symplectic pairing cannot be completed") from None
    # new z_j = sum_b inv[b] bit j ? z_b  so that pairing becomes identity
    z_paired = []
    for j in range(k):
        acc = 0
        for b in range(k):
            if inv[b] & (1 << j):
                acc ^= z_cands[b]
        z_paired.append(acc)
    return LogicalOperators(x_logicals=x_cands, z_logicals=z_paired)


def export_sparse(rows: Sequence[int], n_cols: int, label: str) -> str:
    """Coordinate-format text export: header then one 'row col' per line."""
    lines = [f"# {label} {len(rows)} {n_cols}"]
    for i, row in enumerate(rows):
        r = row
        while r:
            low = r & -r
            lines.append(f"{i} {low.bit_length() - 1}")
            r ^= low
    return "\n".join(lines) + "\n"
