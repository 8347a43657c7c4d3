import itertools

import numpy as np
import pytest

from voroshape import shells


def _brute_shell_count(n, r2):
    root = int(np.floor(np.sqrt(r2)))
    count = 0
    for v in itertools.product(range(-root, root + 1), repeat=n):
        if sum(c * c for c in v) == r2:
            count += 1
    return count


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_shell_cardinality_brute_force(n):
    """Counts agree with box enumeration for every r2 up to 16."""
    for r2 in range(17):
        assert shells.shell_cardinality(n, r2) == _brute_shell_count(n, r2)


def test_ball_cardinality_prefix_sums():
    for n in (2, 4, 8):
        total = 0
        for r2 in range(12):
            total += shells.shell_cardinality(n, r2)
            assert shells.ball_cardinality(n, r2) == total


def test_ball_reference_values():
    assert shells.ball_cardinality(8, 4) == 1713
    assert shells.ball_cardinality(8, 22) == 1025649
    assert shells.ball_cardinality(4, 20) == 2041
    assert shells.ball_cardinality(4, 30) == 4785


def test_shell_closed_forms():
    """First few shells have binomial closed forms: sign patterns times
    coordinate choices."""
    for n in (3, 5, 8, 12, 32):
        c2 = n * (n - 1) // 2
        c3 = n * (n - 1) * (n - 2) // 6
        c4 = n * (n - 1) * (n - 2) * (n - 3) // 24
        assert shells.shell_cardinality(n, 0) == 1
        assert shells.shell_cardinality(n, 1) == 2 * n
        assert shells.shell_cardinality(n, 2) == 4 * c2
        assert shells.shell_cardinality(n, 3) == 8 * c3
        assert shells.shell_cardinality(n, 4) == 16 * c4 + 2 * n


def test_square_decompositions():
    found = shells.square_decompositions(9, 4)
    parts = {d.parts for d in found}
    assert parts == {(9,), (4, 4, 1)}
    for d in found:
        assert sum(d.parts) == 9
        assert list(d.parts) == sorted(d.parts, reverse=True)
    # arrangement counts add up to the shell count
    assert sum(d.arrangements(4) for d in found) == shells.shell_cardinality(4, 9)
    # a 9-part decomposition needs 9 coordinates
    nine_ones = shells.square_decompositions(9, 9)
    assert (1,) * 9 in {d.parts for d in nine_ones}


def test_shell_displacements_properties():
    for n, r2 in ((2, 5), (4, 9), (6, 4), (3, 11)):
        disp = shells.shell_displacements(n, r2)
        assert disp.shape == (shells.shell_cardinality(n, r2), n)
        norms = (disp.astype(np.int64) ** 2).sum(axis=1)
        assert (norms == r2).all()
        uniq = {tuple(row) for row in disp.tolist()}
        assert len(uniq) == disp.shape[0]


def test_shell_displacements_match_brute_force():
    n, r2 = 3, 6
    disp = shells.shell_displacements(n, r2)
    got = {tuple(row) for row in disp.tolist()}
    want = set()
    for v in itertools.product(range(-3, 4), repeat=n):
        if sum(c * c for c in v) == r2:
            want.add(v)
    assert got == want


def test_shell_too_large_guard():
    # shell(32, 20) is astronomically past any enumeration cap
    with pytest.raises(shells.ShellTooLargeError):
        shells.shell_displacements(32, 20, cap=10 ** 5)


def test_shell_ref_enumeration_roundtrip():
    center = np.array([2.0, -1.0, 0.0, 3.0])
    off = np.array([0.25, 0.0, 0.0, 0.0])
    ref = shells.ShellRef(center=center, r2=5, offset=off)
    pts = np.array(list(shells.enumerate_shell(ref)))
    assert pts.shape[0] == shells.shell_cardinality(4, 5)
    d2 = ((pts - (center - off)) ** 2).sum(axis=1)
    assert np.allclose(d2, 5.0)


def test_sample_shell_uniform_norms_and_coverage():
    ref = shells.ShellRef(center=np.zeros(4), r2=4)
    rng = np.random.default_rng(3)
    pts = shells.sample_shell_uniform(ref, 4000, rng)
    assert pts.shape == (4000, 4)
    assert ((pts.astype(np.int64) ** 2).sum(axis=1) == 4).all()
    # every point of a small shell should appear in a large sample
    want = {tuple(r) for r in shells.shell_displacements(4, 4).tolist()}
    got = {tuple(r) for r in pts.tolist()}
    assert got == want


def test_sample_shell_uniform_is_uniform():
    """Chi-square across all members of shell(3, 9) stays far from the
    rejection tail."""
    ref = shells.ShellRef(center=np.zeros(3), r2=9)
    members = shells.shell_displacements(3, 9)
    size = members.shape[0]
    index = {tuple(r): i for i, r in enumerate(members.tolist())}
    rng = np.random.default_rng(11)
    draws = shells.sample_shell_uniform(ref, 30 * size, rng)
    counts = np.zeros(size)
    for row in draws.tolist():
        counts[index[tuple(row)]] += 1
    expected = 30.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    dof = size - 1
    # mean dof, sd sqrt(2 dof); allow five sigma
    assert chi2 < dof + 5.0 * np.sqrt(2.0 * dof)


def test_large_shell_sampling_without_enumeration():
    """Sampling works even when the shell is too large to enumerate."""
    assert shells.shell_cardinality(32, 8) > shells.ENUMERATION_CAP
    ref = shells.ShellRef(center=np.zeros(32), r2=8)
    rng = np.random.default_rng(5)
    pts = shells.sample_shell_uniform(ref, 100, rng)
    assert ((pts.astype(np.int64) ** 2).sum(axis=1) == 8).all()
