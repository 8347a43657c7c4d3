"""Binary linear codes used to glue lattice cosets together.

Codewords are returned as dense uint8 matrices (one codeword per row) because
the lattice quantizers consume them as selection masks in batched arithmetic.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def first_order_reed_muller(m: int) -> np.ndarray:
    """All 2^(m+1) codewords of the (2^m, m+1) first-order Reed-Muller code.

    Basis: the all-ones word plus the m coordinate-index bit patterns.
    Nonzero weights are 2^(m-1) and 2^m, so every weight is a multiple of 4
    for m >= 3, which is what the mod-4 coset constructions rely on.
    """
    n = 1 << m
    idx = np.arange(n)
    basis = [(idx >> k) & 1 for k in range(m)]
    basis.append(np.ones(n, dtype=np.int64))
    basis = np.array(basis, dtype=np.uint8)
    msgs = np.arange(1 << (m + 1))
    sel = (msgs[:, None] >> np.arange(m + 1)[None, :]) & 1
    return (sel.astype(np.uint8) @ basis) % 2


@lru_cache(maxsize=None)
def extended_golay() -> np.ndarray:
    """All 4096 codewords of the (24, 12, 8) extended binary Golay code."""
    gen = golay_basis()
    msgs = np.arange(4096)
    sel = ((msgs[:, None] >> np.arange(12)[None, :]) & 1).astype(np.uint8)
    return (sel @ gen) % 2


def rm_basis(m: int) -> np.ndarray:
    """Generator rows (m+1 x 2^m) of the first-order Reed-Muller code."""
    n = 1 << m
    idx = np.arange(n)
    rows = [(idx >> k) & 1 for k in range(m)]
    rows.append(np.ones(n, dtype=np.int64))
    return np.array(rows, dtype=np.uint8)


def golay_basis() -> np.ndarray:
    """Generator rows (12 x 24) of the extended Golay code, [I | B] form."""
    qr = {0, 1, 3, 4, 5, 9}
    b = np.zeros((12, 12), dtype=np.uint8)
    for i in range(11):
        for j in range(11):
            b[i, j] = 1 if (i + j) % 11 in qr else 0
    b[:11, 11] = 1
    b[11, :11] = 1
    return np.concatenate([np.eye(12, dtype=np.uint8), b], axis=1)


def weight_distribution(codewords: np.ndarray) -> dict[int, int]:
    w = codewords.sum(axis=1)
    return {int(k): int(c) for k, c in zip(*np.unique(w, return_counts=True))}
