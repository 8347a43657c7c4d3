"""Integer-lattice shells and balls around a rounded center.

A shell S(center, r) collects the points x with x + offset integral and
``|x + offset - center|^2 = r2``.  Cardinalities come from the square
decompositions of r2 (each decomposition contributes the number of ways to
place its parts in n coordinates times a sign choice per nonzero part), so
counts, enumeration, and uniform sampling all share one table.  Counts are
Python integers throughout; they overflow 64 bits already at n = 32,
r2 = 22.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

ENUMERATION_CAP = 10 ** 7


class ShellTooLargeError(ValueError):
    """Raised when a shell exceeds the enumeration cap; sample it instead."""


@dataclass(frozen=True)
class SquareDecomposition:
    """A multiset of positive squares summing to r2, parts descending."""

    parts: tuple[int, ...]

    def arrangements(self, n: int) -> int:
        """Distinct integer vectors in dimension n realizing these parts."""
        k = len(self.parts)
        if k > n:
            return 0
        mult: dict[int, int] = {}
        for p in self.parts:
            mult[p] = mult.get(p, 0) + 1
        ways = math.factorial(n) // math.factorial(n - k)
        for m in mult.values():
            ways //= math.factorial(m)
        return ways * (1 << k)


@dataclass
class ShellRef:
    """A concrete shell: integer center, squared radius, coordinate offset.

    Points are x = center - offset + w with w integral and |w|^2 = r2.
    """

    center: np.ndarray
    r2: int
    offset: np.ndarray = field(default=None)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.offset is None:
            self.offset = np.zeros_like(self.center)
        else:
            self.offset = np.asarray(self.offset, dtype=np.float64)
        if self.center.shape != self.offset.shape:
            raise ValueError("center and offset dimensions differ")
        if self.r2 < 0:
            raise ValueError("squared radius must be nonnegative")

    @property
    def n(self) -> int:
        return self.center.shape[0]


@lru_cache(maxsize=None)
def _decompose(remaining: int, max_root: int, parts_left: int) -> tuple[tuple[int, ...], ...]:
    """All descending tuples of squares <= max_root^2 summing to remaining,
    using at most parts_left parts."""
    if remaining == 0:
        return ((),)
    if parts_left == 0:
        return ()
    out = []
    r = min(max_root, math.isqrt(remaining))
    for root in range(r, 0, -1):
        sq = root * root
        for tail in _decompose(remaining - sq, root, parts_left - 1):
            out.append((sq,) + tail)
    return tuple(out)


@lru_cache(maxsize=None)
def square_decompositions(r2: int, n: int) -> tuple[SquareDecomposition, ...]:
    """Square decompositions of r2 usable in dimension n (at most n parts)."""
    if r2 < 0:
        raise ValueError("squared radius must be nonnegative")
    return tuple(SquareDecomposition(p) for p in _decompose(r2, math.isqrt(r2), n))


@lru_cache(maxsize=None)
def shell_cardinality(n: int, r2: int) -> int:
    """Exact number of integer vectors at squared distance r2 from a fixed
    integer center in dimension n."""
    if n < 1:
        raise ValueError("dimension must be positive")
    if r2 < 0:
        raise ValueError("squared radius must be nonnegative")
    return sum(d.arrangements(n) for d in square_decompositions(r2, n))


def ball_cardinality(n: int, r2: int) -> int:
    """Number of integer vectors within squared distance r2 of a center."""
    return sum(shell_cardinality(n, s) for s in range(r2 + 1))


@lru_cache(maxsize=64)
def shell_displacements(n: int, r2: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """All integer vectors w with |w|^2 = r2, as an (N, n) int16 array.

    Deterministic order: decompositions as produced by square_decompositions,
    positions lexicographic, signs in binary-counter order.  Raises
    ShellTooLargeError above the cap.
    """
    count = shell_cardinality(n, r2)
    if count > cap:
        raise ShellTooLargeError(
            f"shell (n={n}, r2={r2}) has {count} points, above the cap {cap}; "
            "use sample_shell_uniform")
    if r2 == 0:
        return np.zeros((1, n), dtype=np.int16)
    blocks = []
    for dec in square_decompositions(r2, n):
        roots = [math.isqrt(p) for p in dec.parts]
        k = len(roots)
        pos_list = _distinct_placements(tuple(roots), n)
        pos = np.array(pos_list, dtype=np.int64)          # P x k position indices
        vals = np.array(roots, dtype=np.int16)
        signs = np.empty((1 << k, k), dtype=np.int16)
        for s in range(1 << k):
            for j in range(k):
                signs[s, j] = -1 if (s >> j) & 1 else 1
        p_cnt = pos.shape[0]
        total = p_cnt * (1 << k)
        block = np.zeros((total, n), dtype=np.int16)
        rows_idx = np.repeat(np.arange(total), k)
        cols_idx = np.repeat(pos, 1 << k, axis=0).reshape(-1)
        vals_flat = np.tile((signs * vals[None, :]).reshape(-1), p_cnt)
        block[rows_idx, cols_idx] = vals_flat
        blocks.append(block)
    out = np.concatenate(blocks, axis=0)
    assert out.shape[0] == count
    return out


@lru_cache(maxsize=None)
def _distinct_placements(roots: tuple[int, ...], n: int) -> tuple[tuple[int, ...], ...]:
    """Distinct assignments of the multiset ``roots`` to coordinate indices,
    in lexicographic order of the index tuples (grouped by value)."""
    from itertools import combinations

    groups: list[tuple[int, int]] = []
    for r in roots:
        if groups and groups[-1][0] == r:
            groups[-1] = (r, groups[-1][1] + 1)
        else:
            groups.append((r, 1))

    def rec(avail: tuple[int, ...], gi: int):
        if gi == len(groups):
            yield ()
            return
        _, cnt = groups[gi]
        for picked in combinations(range(len(avail)), cnt):
            chosen = tuple(avail[i] for i in picked)
            rest = tuple(a for i, a in enumerate(avail) if i not in picked)
            for tail in rec(rest, gi + 1):
                yield chosen + tail

    out = []
    for placement in rec(tuple(range(n)), 0):
        idx = []
        at = 0
        for _, cnt in groups:
            idx.extend(placement[at:at + cnt])
            at += cnt
        out.append(tuple(idx))
    return tuple(out)


def enumerate_shell(ref: ShellRef, cap: int = ENUMERATION_CAP):
    """Yield every point of the shell exactly once."""
    disp = shell_displacements(ref.n, ref.r2, cap)
    base = ref.center - ref.offset
    for w in disp:
        yield base + w


def sample_shell_uniform(ref: ShellRef, k: int, rng: np.random.Generator) -> np.ndarray:
    """k independent points, each uniform over the shell.

    A decomposition is drawn with probability proportional to its arrangement
    count, its parts are permuted uniformly over the coordinates, and each
    nonzero coordinate gets an independent uniform sign.
    """
    if ref.r2 < 1:
        raise ValueError("sampling needs a positive squared radius")
    n = ref.n
    decs = [d for d in square_decompositions(ref.r2, n) if d.arrangements(n) > 0]
    weights = np.array([float(d.arrangements(n)) for d in decs])
    probs = weights / weights.sum()
    choice = rng.choice(len(decs), size=k, p=probs)
    out = np.empty((k, n), dtype=np.float64)
    for di, dec in enumerate(decs):
        rows = np.nonzero(choice == di)[0]
        if rows.size == 0:
            continue
        roots = np.array([math.isqrt(p) for p in dec.parts], dtype=np.float64)
        padded = np.zeros(n)
        padded[:roots.size] = roots
        w = np.tile(padded, (rows.size, 1))
        w = rng.permuted(w, axis=1)
        signs = np.where(rng.random((rows.size, n)) < 0.5, -1.0, 1.0)
        out[rows] = w * signs
    return (ref.center - ref.offset)[None, :] + out
