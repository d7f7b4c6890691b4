"""Bit-packed GF(2) linear algebra on integer bitsets.

Rows are Python ints (bit ``j`` of a row is column ``j``), which keeps
XOR-heavy elimination fast for the matrix sizes used here (a few hundred
columns) without any packing bookkeeping.  All elimination routines pivot
on the lowest available column index so results are reproducible across
runs and platforms.
"""

from __future__ import annotations

from typing import Iterable, List, Sequence, Tuple


def from_dense(matrix: Iterable[Iterable[int]]) -> List[int]:
    """Pack a 0/1 row-iterable into integer bitsets."""
    rows = []
    for row in matrix:
        acc = 0
        for j, bit in enumerate(row):
            if bit & 1:
                acc |= 1 << j
        rows.append(acc)
    return rows


def to_dense(rows: Sequence[int], n_cols: int) -> List[List[int]]:
    return [[(r >> j) & 1 for j in range(n_cols)] for r in rows]


def weight(v: int) -> int:
    return bin(v).count("1")


def dot(a: int, b: int) -> int:
    """Inner product mod 2."""
    return bin(a & b).count("1") & 1


def row_reduce(rows: Sequence[int], n_cols: int) -> Tuple[List[int], List[int]]:
    """Reduced row-echelon form.

    Returns (nonzero reduced rows, pivot column per row).
    """
    work = list(rows)
    pivots: List[int] = []
    reduced: List[int] = []
    rank = 0
    for col in range(n_cols):
        mask = 1 << col
        pivot_row = None
        for i in range(rank, len(work)):
            if work[i] & mask:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        work[rank], work[pivot_row] = work[pivot_row], work[rank]
        for i in range(len(work)):
            if i != rank and (work[i] & mask):
                work[i] ^= work[rank]
        pivots.append(col)
        rank += 1
        if rank == len(work):
            break
    reduced = work[:rank]
    return reduced, pivots


def rank(rows: Sequence[int], n_cols: int) -> int:
    return len(row_reduce(rows, n_cols)[0])


def kernel_basis(rows: Sequence[int], n_cols: int) -> List[int]:
    """Basis of the right null space {v : row . v = 0 for all rows}."""
    reduced, pivots = row_reduce(rows, n_cols)
    pivot_set = set(pivots)
    basis = []
    for free in range(n_cols):
        if free in pivot_set:
            continue
        v = 1 << free
        for row, pcol in zip(reduced, pivots):
            if row & (1 << free):
                v |= 1 << pcol
        basis.append(v)
    return basis


def in_rowspan(v: int, reduced_rows: Sequence[int], pivots: Sequence[int]) -> bool:
    """Membership test against an already row-reduced basis."""
    for row, pcol in zip(reduced_rows, pivots):
        if v & (1 << pcol):
            v ^= row
    return v == 0


def quotient_basis(
    vectors: Sequence[int], modulo_rows: Sequence[int], n_cols: int
) -> List[int]:
    """Subset of `vectors` forming a basis of span(vectors) / span(modulo_rows).

    Vectors are taken in order, keeping each one that is independent of the
    modulo space plus the vectors already kept.
    """
    reduced, pivots = row_reduce(modulo_rows, n_cols)
    reduced = list(reduced)
    pivots = list(pivots)
    kept = []
    for v in vectors:
        w = v
        for row, pcol in zip(reduced, pivots):
            if w & (1 << pcol):
                w ^= row
        if w == 0:
            continue
        kept.append(v)
        # insert the residual, keeping the reduced basis sorted by pivot
        pcol = (w & -w).bit_length() - 1
        for i in range(len(reduced)):
            if reduced[i] & (1 << pcol):
                reduced[i] ^= w
        pos = 0
        while pos < len(pivots) and pivots[pos] < pcol:
            pos += 1
        reduced.insert(pos, w)
        pivots.insert(pos, pcol)
    return kept


def invert(rows: Sequence[int], n: int) -> List[int]:
    """Inverse of an n x n matrix; raises ValueError if singular."""
    work = list(rows)
    if len(work) != n:
        raise ValueError("matrix must be square")
    inv = [1 << i for i in range(n)]
    for col in range(n):
        mask = 1 << col
        pivot = None
        for i in range(col, n):
            if work[i] & mask:
                pivot = i
                break
        if pivot is None:
            raise ValueError("matrix is singular over GF(2)")
        work[col], work[pivot] = work[pivot], work[col]
        inv[col], inv[pivot] = inv[pivot], inv[col]
        for i in range(n):
            if i != col and (work[i] & mask):
                work[i] ^= work[col]
                inv[i] ^= inv[col]
    return inv


def matmul(a_rows: Sequence[int], b_rows: Sequence[int]) -> List[int]:
    """Product A @ B with A given by rows and B given by rows."""
    out = []
    for ar in a_rows:
        acc = 0
        r = ar
        while r:
            low = r & -r
            acc ^= b_rows[low.bit_length() - 1]
            r ^= low
        out.append(acc)
    return out


def transpose(rows: Sequence[int], n_cols: int) -> List[int]:
    out = [0] * n_cols
    for i, r in enumerate(rows):
        while r:
            low = r & -r
            out[low.bit_length() - 1] |= 1 << i
            r ^= low
    return out
