"""Exact integer matrix decompositions.

All routines work in arbitrary-precision Python integers, so intermediate
products never overflow.  Matrices are accepted as any array-like of integers
and returned as numpy object arrays holding Python ints; multiplying those
with ``@`` stays exact.

Conventions: vectors are rows, lattices are row-spans, and a decomposition
``S @ A @ T == J`` uses unimodular ``S`` (row operations) on the left and
unimodular ``T`` (column operations) on the right.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


def as_int_rows(a) -> list[list[int]]:
    """Validate an array-like as an integer matrix, returning rows of ints."""
    arr = np.asarray(a, dtype=object)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    rows = []
    for row in arr:
        out = []
        for v in row:
            if isinstance(v, (int, np.integer)):
                out.append(int(v))
            elif isinstance(v, float) and v.is_integer():
                out.append(int(v))
            elif isinstance(v, Fraction) and v.denominator == 1:
                out.append(int(v))
            else:
                raise ValueError(f"non-integer entry {v!r}")
        rows.append(out)
    return rows


def to_object_array(rows) -> np.ndarray:
    out = np.empty((len(rows), len(rows[0])), dtype=object)
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            out[i, j] = int(v)
    return out


def identity_rows(n: int) -> list[list[int]]:
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def matmul_int(a, b) -> list[list[int]]:
    ra, rb = as_int_rows(a), as_int_rows(b)
    if len(ra[0]) != len(rb):
        raise ValueError("shape mismatch")
    cols = list(zip(*rb))
    return [[sum(x * y for x, y in zip(row, col)) for col in cols] for row in ra]


def det_int(a) -> int:
    """Exact determinant by fraction-free (Bareiss) elimination."""
    m = as_int_rows(a)
    n = len(m)
    if any(len(r) != n for r in m):
        raise ValueError("determinant needs a square matrix")
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
            m[i][k] = 0
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


@dataclass
class SmithDecomposition:
    """Unimodular S, T and diagonal J with S @ A @ T == J and J[i,i] | J[i+1,i+1]."""

    s: np.ndarray
    j: np.ndarray
    t: np.ndarray

    @property
    def diagonal(self) -> list[int]:
        return [int(self.j[i, i]) for i in range(self.j.shape[0])]


@dataclass
class TriangularDecomposition:
    """Unimodular S and lower-triangular L with S @ A == L and L[i,i] > 0."""

    s: np.ndarray
    l: np.ndarray

    @property
    def diagonal(self) -> list[int]:
        return [int(self.l[i, i]) for i in range(self.l.shape[0])]


def _pivot_min_abs(a, lo: int):
    """Smallest nonzero |entry| in the trailing submatrix, lowest row then column."""
    best = None
    for i in range(lo, len(a)):
        for j in range(lo, len(a)):
            v = a[i][j]
            if v != 0 and (best is None or abs(v) < abs(best[2])):
                best = (i, j, v)
    return best


def smith_normal_form(a) -> SmithDecomposition:
    """Diagonalize an integer matrix with unimodular row/column transforms.

    Returns the canonical Smith form: nonnegative diagonal entries forming a
    divisibility chain.  The input must be square and nonsingular.  S and T are
    not unique; only J is canonical.
    """
    m = as_int_rows(a)
    n = len(m)
    if any(len(r) != n for r in m):
        raise ValueError("smith_normal_form needs a square matrix")
    if det_int(a) == 0:
        raise ValueError("matrix is singular")
    s = identity_rows(n)
    t = identity_rows(n)

    def row_op(i, k, q):  # row_i -= q * row_k
        m[i] = [x - q * y for x, y in zip(m[i], m[k])]
        s[i] = [x - q * y for x, y in zip(s[i], s[k])]

    def col_op(j, k, q):  # col_j -= q * col_k
        for r in m:
            r[j] -= q * r[k]
        for r in t:
            r[j] -= q * r[k]

    for k in range(n):
        while True:
            piv = _pivot_min_abs(m, k)
            if piv is None:
                raise ValueError("matrix is singular")
            i, j, _ = piv
            if i != k:
                m[k], m[i] = m[i], m[k]
                s[k], s[i] = s[i], s[k]
            if j != k:
                for r in m:
                    r[k], r[j] = r[j], r[k]
                for r in t:
                    r[k], r[j] = r[j], r[k]
            p = m[k][k]
            dirty = False
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    q, r = divmod(m[i][k], p)
                    if 2 * abs(r) > abs(p):  # nearest multiple keeps entries small
                        q += 1
                    row_op(i, k, q)
                    if m[i][k] != 0:
                        dirty = True
            for j in range(k + 1, n):
                if m[k][j] != 0:
                    q, r = divmod(m[k][j], p)
                    if 2 * abs(r) > abs(p):
                        q += 1
                    col_op(j, k, q)
                    if m[k][j] != 0:
                        dirty = True
            if dirty:
                continue
            # pivot must divide the trailing submatrix for the chain property
            fix = None
            for i in range(k + 1, n):
                for j in range(k + 1, n):
                    if m[i][j] % p != 0:
                        fix = i
                        break
                if fix is not None:
                    break
            if fix is None:
                break
            m[k] = [x + y for x, y in zip(m[k], m[fix])]
            s[k] = [x + y for x, y in zip(s[k], s[fix])]
    for k in range(n):
        if m[k][k] < 0:
            m[k] = [-x for x in m[k]]
            s[k] = [-x for x in s[k]]
    return SmithDecomposition(to_object_array(s), to_object_array(m), to_object_array(t))


def _triangularize_rows(rows: list[list[int]], n: int, track_s: bool):
    """Shared core: row-reduce a spanning set to square lower-triangular form.

    ``rows`` has m >= n rows spanning a rank-n lattice.  Column j ends up with
    its gcd on row (m - n + j) and zeros above; the first m - n rows must
    vanish or the span was rank deficient.
    """
    m = [list(r) for r in rows]
    nr = len(m)
    if nr < n:
        raise ValueError("need at least n spanning rows")
    s = identity_rows(nr) if track_s else None
    for j in range(n - 1, -1, -1):
        tgt = nr - n + j
        while True:
            piv = None
            for i in range(tgt + 1):
                v = m[i][j]
                if v != 0 and (piv is None or abs(v) < abs(piv[1])):
                    piv = (i, v)
            if piv is None:
                raise ValueError("rows do not span a rank-n lattice")
            pi, pv = piv
            if pi != tgt:
                m[pi], m[tgt] = m[tgt], m[pi]
                if track_s:
                    s[pi], s[tgt] = s[tgt], s[pi]
            done = True
            for i in range(tgt):
                if m[i][j] != 0:
                    q, r = divmod(m[i][j], pv)
                    if 2 * abs(r) > abs(pv):
                        q += 1
                    m[i] = [x - q * y for x, y in zip(m[i], m[tgt])]
                    if track_s:
                        s[i] = [x - q * y for x, y in zip(s[i], s[tgt])]
                    if m[i][j] != 0:
                        done = False
            if done:
                break
        if m[tgt][j] < 0:
            m[tgt] = [-x for x in m[tgt]]
            if track_s:
                s[tgt] = [-x for x in s[tgt]]
    off = nr - n
    for i in range(off):
        if any(v != 0 for v in m[i]):
            raise ValueError("rows do not span a rank-n lattice")
    # canonical form: entries below the diagonal reduced into [0, diag)
    for j in range(n):
        pj = off + j
        for i in range(pj + 1, nr):
            q = m[i][j] // m[pj][j]
            if q != 0:
                m[i] = [x - q * y for x, y in zip(m[i], m[pj])]
                if track_s:
                    s[i] = [x - q * y for x, y in zip(s[i], s[pj])]
    return m, s, off


def lower_triangularize(a) -> TriangularDecomposition:
    """Left-unimodular reduction of a square nonsingular matrix to lower-triangular
    form with positive diagonal and below-diagonal entries in [0, diagonal)."""
    rows = as_int_rows(a)
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("lower_triangularize needs a square matrix")
    m, s, _ = _triangularize_rows(rows, n, track_s=True)
    return TriangularDecomposition(to_object_array(s), to_object_array(m))


def triangular_from_spanning_rows(rows, n: int) -> np.ndarray:
    """Square lower-triangular generator for the lattice spanned by ``rows``."""
    r = as_int_rows(rows)
    if any(len(x) != n for x in r):
        raise ValueError(f"rows must have {n} columns")
    m, _, off = _triangularize_rows(r, n, track_s=False)
    return to_object_array(m[off:])


def inverse_fractions(a) -> list[list[Fraction]]:
    """Exact inverse over the rationals (Gauss-Jordan on Fractions)."""
    rows = [[Fraction(v) for v in r] for r in as_int_rows(a)]
    n = len(rows)
    aug = [r + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    for k in range(n):
        p = next((i for i in range(k, n) if aug[i][k] != 0), None)
        if p is None:
            raise ValueError("matrix is singular")
        aug[k], aug[p] = aug[p], aug[k]
        pv = aug[k][k]
        aug[k] = [x / pv for x in aug[k]]
        for i in range(n):
            if i != k and aug[i][k] != 0:
                f = aug[i][k]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[k])]
    return [r[n:] for r in aug]


def unimodular_inverse(u) -> np.ndarray:
    """Exact integer inverse of a unimodular matrix (determinant +-1)."""
    d = det_int(u)
    if d not in (1, -1):
        raise ValueError(f"matrix is not unimodular (det = {d})")
    inv = inverse_fractions(u)
    return to_object_array([[int(v) for v in row] for row in inv])


def is_unimodular(u) -> bool:
    try:
        return det_int(u) in (1, -1)
    except ValueError:
        return False
