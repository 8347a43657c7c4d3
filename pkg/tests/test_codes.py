import numpy as np

from voroshape import codes


def test_rm14_weight_distribution():
    """First-order length-16 code: all nonzero words except ones have
    weight 8."""
    cw = codes.first_order_reed_muller(4)
    assert cw.shape == (32, 16)
    assert codes.weight_distribution(cw) == {0: 1, 8: 30, 16: 1}


def test_rm15_weight_distribution():
    cw = codes.first_order_reed_muller(5)
    assert cw.shape == (64, 32)
    assert codes.weight_distribution(cw) == {0: 1, 16: 62, 32: 1}


def test_golay_weight_distribution():
    cw = codes.extended_golay()
    assert cw.shape == (4096, 24)
    assert codes.weight_distribution(cw) == {0: 1, 8: 759, 12: 2576,
                                             16: 759, 24: 1}


def test_codes_linear():
    rng = np.random.default_rng(5)
    for cw in (codes.first_order_reed_muller(4), codes.extended_golay()):
        lookup = {tuple(row) for row in cw}
        idx = rng.integers(0, cw.shape[0], size=(40, 2))
        for i, k in idx:
            assert tuple(cw[i] ^ cw[k]) in lookup


def test_bases_span_codes():
    basis = codes.rm_basis(4)
    assert basis.shape[0] == 5
    count = 0
    lookup = {tuple(row) for row in codes.first_order_reed_muller(4)}
    for msg in range(1 << 5):
        word = np.zeros(16, dtype=np.uint8)
        for b in range(5):
            if (msg >> b) & 1:
                word ^= basis[b]
        assert tuple(word) in lookup
        count += 1
    assert count == 32


def test_golay_basis_rank():
    basis = codes.golay_basis()
    assert basis.shape == (12, 24)
    rows = [int("".join(str(b) for b in row), 2) for row in basis]
    rank = 0
    seen = []
    for row in rows:
        cur = row
        for s in seen:
            cur = min(cur, cur ^ s)
        if cur:
            seen.append(cur)
            rank += 1
    assert rank == 12
