"""Lattice catalog with exact nearest-point quantizers.

Every lattice here lives in an integer (or half-integer) coordinate system so
it can serve as a shaping sublattice of the cubic lattice Z^n after scaling.
Quantizers return the exact closest lattice point; ties are broken by a fixed
deterministic scan order.  All quantizers accept a single vector or a batch
(one vector per row) and are chunked internally to bound memory.

Catalog:
  Z^n      coordinate rounding
  D_n      even-coordinate-sum vectors; round, then fix parity at the worst
           coordinate
  E8       best of the D8 candidate and the D8 + (1/2)^8 candidate
  BW16     32 cosets of 2*D16 glued by the (16, 5) first-order Reed-Muller code
  Leech24  8192 cosets of 4*D24 glued by the extended Golay code (even and odd
           frames)
  L32      64 cosets of 2*D32 glued by the (32, 6) first-order Reed-Muller code
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import codes, intlinalg


def quantize_cubic(x: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(x, dtype=np.float64))


def quantize_dn(x: np.ndarray) -> np.ndarray:
    """Closest point of D_n (integer vectors with even coordinate sum)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    k = np.rint(X)
    e = X - k
    odd = (k.sum(axis=1) % 2.0) != 0.0
    if np.any(odd):
        rows = np.nonzero(odd)[0]
        j = np.argmax(np.abs(e[rows]), axis=1)
        ej = e[rows, j]
        k[rows, j] += np.where(ej > 0, 1.0, -1.0)
    return k[0] if single else k


def quantize_e8(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    a = quantize_dn(X)
    b = quantize_dn(X - 0.5) + 0.5
    da = ((X - a) ** 2).sum(axis=1)
    db = ((X - b) ** 2).sum(axis=1)
    out = np.where((db < da)[:, None], b, a)
    return out[0] if single else out


@dataclass
class _CosetFamily:
    """One frame of cosets r(c) + s*D_n indexed by codewords c.

    Coordinate residues are res0 + cmul*c_j; parity_const is the parity of
    the lift (r - residue)/s, folded into the D_n even-sum constraint.
    """

    codewords: np.ndarray      # K x n uint8
    res0: int
    cmul: int
    parity_const: int
    cw_float: np.ndarray       # K x n float64
    m0: np.ndarray             # n x K selection matrix for bit 0
    m1: np.ndarray             # n x K selection matrix for bit 1


def _make_family(codewords: np.ndarray, res0: int, cmul: int,
                 parity_const: int) -> _CosetFamily:
    cw = np.ascontiguousarray(codewords.astype(np.float64))
    return _CosetFamily(
        codewords=codewords,
        res0=res0,
        cmul=cmul,
        parity_const=parity_const,
        cw_float=cw,
        m0=np.ascontiguousarray((1.0 - cw).T),
        m1=np.ascontiguousarray(cw.T),
    )


def _coset_tables(X: np.ndarray, fam: _CosetFamily, s: float):
    """Per-coordinate cost tables for both bit values of a coset family."""
    tabs = []
    for b in (0, 1):
        z = (X - (fam.res0 + fam.cmul * b)) / s
        k = np.rint(z)
        e = z - k
        tabs.append((e * e, np.abs(e), k))
    return tabs


def _quantize_code_cosets(X: np.ndarray, families: list[_CosetFamily], s: float) -> np.ndarray:
    """Exact closest point of a union of code-glued cosets of s*D_n.

    Distances to every coset are evaluated through per-coordinate tables and
    two matrix products per family; the parity repair term uses the largest
    rounding error under each codeword's bit selection.
    """
    P, n = X.shape
    best_d2 = np.full(P, np.inf)
    best_cw = np.zeros(P, dtype=np.int64)
    best_fam = np.zeros(P, dtype=np.int64)
    rows = np.arange(P)
    for fi, fam in enumerate(families):
        (e0, a0, k0), (e1, a1, k1) = _coset_tables(X, fam, s)
        sum_e = e0 @ fam.m0 + e1 @ fam.m1
        ksum = k0 @ fam.m0 + k1 @ fam.m1
        par = (ksum + fam.parity_const) % 2.0
        d = a1 - a0
        k_count = fam.codewords.shape[0]
        max_a = np.empty((P, k_count))
        tmp = np.empty_like(a0)
        for kk in range(k_count):
            np.multiply(d, fam.cw_float[kk], out=tmp)
            tmp += a0
            max_a[:, kk] = tmp.max(axis=1)
        d2 = sum_e + par * (1.0 - 2.0 * max_a)
        d2 *= s * s
        cw = d2.argmin(axis=1)
        cd2 = d2[rows, cw]
        upd = cd2 < best_d2
        best_d2[upd] = cd2[upd]
        best_cw[upd] = cw[upd]
        best_fam[upd] = fi
    out = np.empty_like(X)
    for fi, fam in enumerate(families):
        sel = best_fam == fi
        if not np.any(sel):
            continue
        c = fam.codewords[best_cw[sel]].astype(np.float64)
        res = fam.res0 + fam.cmul * c
        z = (X[sel] - res) / s
        k = np.rint(z)
        e = z - k
        odd = ((k.sum(axis=1) + fam.parity_const) % 2.0) != 0.0
        if np.any(odd):
            orow = np.nonzero(odd)[0]
            j = np.argmax(np.abs(e[orow]), axis=1)
            ej = e[orow, j]
            k[orow, j] += np.where(ej > 0, 1.0, -1.0)
        out[sel] = res + s * k
    return out


class Lattice:
    """A catalog lattice: exact generator plus a closest-point quantizer.

    The generator is stored as an integer matrix ``gen_num`` over a common
    denominator ``gen_den`` so downstream integer decompositions stay exact.
    ``index`` counts the cosets enumerated by the quantizer (1 when the
    quantizer is direct).
    """

    def __init__(self, name, n, gen_num, gen_den, kind, min_norm2,
                 index=1, families=None, coset_scale=None, chunk=1 << 16):
        self.name = name
        self.n = n
        self.gen_num = intlinalg.to_object_array(gen_num)
        self.gen_den = int(gen_den)
        self.kind = kind
        self.min_norm2 = float(min_norm2)
        self.index = index
        self.families = families
        self.coset_scale = coset_scale
        self.chunk = chunk
        gf = np.array([[float(v) for v in row] for row in gen_num], dtype=np.float64)
        self._gen_float = gf / self.gen_den
        self._gen_inv = np.linalg.inv(self._gen_float)

    def __repr__(self):
        return f"Lattice({self.name}, n={self.n})"

    def generator(self) -> np.ndarray:
        return self._gen_float.copy()

    def det(self) -> Fraction:
        return Fraction(intlinalg.det_int(self.gen_num), self.gen_den ** self.n)

    def volume(self) -> float:
        return abs(float(self.det()))

    def covering_radius_bound(self) -> float:
        """Half the sum of basis-vector norms; crude but valid upper bound."""
        return 0.5 * float(np.linalg.norm(self._gen_float, axis=1).sum())

    def basis_coordinates(self, points: np.ndarray) -> np.ndarray:
        """Integer coordinates of lattice points in this basis (validated)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        u = pts @ self._gen_inv
        ur = np.rint(u)
        if not np.allclose(ur @ self._gen_float, pts, rtol=0, atol=1e-6):
            raise ValueError("input is not a lattice point")
        return ur if points.ndim > 1 else ur[0]

    def quantize(self, x: np.ndarray) -> np.ndarray:
        """Exact closest lattice point(s) to ``x`` (single vector or batch)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.n:
            raise ValueError(f"expected dimension {self.n}, got {X.shape[1]}")
        out = np.empty_like(X)
        for lo in range(0, X.shape[0], self.chunk):
            hi = min(lo + self.chunk, X.shape[0])
            out[lo:hi] = self._quantize_chunk(X[lo:hi])
        return out[0] if single else out

    def _quantize_chunk(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "cubic":
            return np.rint(X)
        if self.kind == "dn":
            return quantize_dn(X)
        if self.kind == "e8":
            return quantize_e8(X)
        if self.kind == "codecoset":
            return _quantize_code_cosets(X, self.families, self.coset_scale)
        if self.kind == "enum":
            return self._quantize_enum(X)
        raise ValueError(f"unknown lattice kind {self.kind}")

    def _quantize_enum(self, X: np.ndarray) -> np.ndarray:
        """Search quantizer for small generic lattices: enumerate basis
        coordinates in a box whose size is certified by the smallest singular
        value of the generator."""
        if self.n > 6:
            raise ValueError("search quantizer limited to n <= 6")
        G = self._gen_float
        smin = np.linalg.svd(G, compute_uv=False).min()
        out = np.empty_like(X)
        for i, x in enumerate(X):
            u0 = x @ self._gen_inv
            r0 = np.linalg.norm(x - np.rint(u0) @ G)
            w = r0 / smin + 1e-12
            axes = [np.arange(math.floor(u0j - w), math.ceil(u0j + w) + 1)
                    for u0j in u0]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
            cand = grid @ G
            d2 = ((cand - x) ** 2).sum(axis=1)
            out[i] = cand[np.argmin(d2)]
        return out


def dn_generator_rows(n: int) -> list[list[int]]:
    rows = [[0] * n for _ in range(n)]
    rows[0][0] = 2
    for i in range(1, n):
        rows[i][0] = 1
        rows[i][i] = 1
    return rows


def _e8_gen_num() -> list[list[int]]:
    # standard E8 generator (det 1) times 2: D8 chain rows plus the half glue
    rows = [[0] * 8 for _ in range(8)]
    rows[0][0] = 4
    for i in range(1, 7):
        rows[i][i - 1] = -2
        rows[i][i] = 2
    rows[7] = [1] * 8
    return rows


@lru_cache(maxsize=None)
def build_named(name: str, n: int | None = None) -> Lattice:
    """Construct a catalog lattice from its canonical name.

    ``Z`` and ``D`` take their dimension either embedded in the name (``Z4``,
    ``D16``) or via ``n``; the named constructions E8, BW16, Leech24, L32 have
    fixed dimensions.
    """
    base = name
    if name not in ("E8", "BW16", "Leech24", "L32"):
        head = name.rstrip("0123456789")
        tail = name[len(head):]
        base = head
        if tail:
            if n is not None and n != int(tail):
                raise ValueError(f"dimension conflict in {name!r} vs n={n}")
            n = int(tail)
    if base == "Z":
        if n is None or n < 1:
            raise ValueError("Z needs a dimension")
        return Lattice("Z%d" % n, n, intlinalg.identity_rows(n), 1, "cubic", 1.0)
    if base == "D":
        if n is None or n < 2:
            raise ValueError("D needs a dimension >= 2")
        return Lattice("D%d" % n, n, dn_generator_rows(n), 1, "dn", 2.0)
    if base == "E8":
        if n not in (None, 8):
            raise ValueError("E8 is 8-dimensional")
        return Lattice("E8", 8, _e8_gen_num(), 2, "e8", 2.0, index=2)
    if base == "BW16":
        if n not in (None, 16):
            raise ValueError("BW16 is 16-dimensional")
        rm = codes.rm_basis(4).astype(int).tolist()
        span = rm + (2 * np.array(dn_generator_rows(16), dtype=object)).tolist()
        gen = intlinalg.triangular_from_spanning_rows(span, 16)
        lat = Lattice("BW16", 16, gen, 1, "codecoset", 8.0, index=32,
                      families=[_make_family(codes.first_order_reed_muller(4), 0, 1, 0)],
                      coset_scale=2.0, chunk=1 << 13)
        assert lat.det() == 4096
        return lat
    if base == "Leech24":
        if n not in (None, 24):
            raise ValueError("Leech24 is 24-dimensional")
        gb = (2 * codes.golay_basis().astype(object)).tolist()
        span = gb + (4 * np.array(dn_generator_rows(24), dtype=object)).tolist()
        odd_rep = [1] * 24
        odd_rep[0] = 5  # all-ones frame shifted so the coordinate sum is 4 mod 8
        span.append(odd_rep)
        gen = intlinalg.triangular_from_spanning_rows(span, 24)
        golay = codes.extended_golay()
        lat = Lattice("Leech24", 24, gen, 1, "codecoset", 32.0, index=8192,
                      families=[_make_family(golay, 0, 2, 0),
                                _make_family(golay, 1, 2, 1)],
                      coset_scale=4.0, chunk=1 << 9)
        assert lat.det() == 2 ** 36
        return lat
    if base == "L32":
        if n not in (None, 32):
            raise ValueError("L32 is 32-dimensional")
        rm = codes.rm_basis(5).astype(int).tolist()
        span = rm + (2 * np.array(dn_generator_rows(32), dtype=object)).tolist()
        gen = intlinalg.triangular_from_spanning_rows(span, 32)
        lat = Lattice("L32", 32, gen, 1, "codecoset", 8.0, index=64,
                      families=[_make_family(codes.first_order_reed_muller(5), 0, 1, 0)],
                      coset_scale=2.0, chunk=1 << 12)
        assert lat.det() == 2 ** 27
        return lat
    raise ValueError(f"unknown lattice {name!r}")


def custom(name: str, rows, den: int = 1) -> Lattice:
    """Small generic lattice with a search quantizer (n <= 6 only)."""
    rows_obj = intlinalg.to_object_array(rows)
    n = rows_obj.shape[0]
    if n > 6:
        raise ValueError("custom lattices limited to n <= 6")
    gf = np.array([[float(v) for v in r] for r in rows], dtype=np.float64) / den
    best = np.inf
    rng_box = range(-3, 4)
    import itertools
    for u in itertools.product(rng_box, repeat=n):
        if not any(u):
            continue
        v = np.array(u, dtype=np.float64) @ gf
        best = min(best, float((v * v).sum()))
    return Lattice(name, n, rows_obj, den, "enum", best)


def rotation_matrix(n: int) -> np.ndarray:
    """Block-diagonal rotation-scaling with 2x2 blocks [[1, 1], [-1, 1]].

    Satisfies R @ R.T = 2 I, det = 2^(n/2); applying it to a scaled shaping
    lattice doubles its determinant per dimension pair.
    """
    if n % 2:
        raise ValueError("rotation needs an even dimension")
    r = np.zeros((n, n), dtype=np.int64)
    for i in range(0, n, 2):
        r[i, i] = 1
        r[i, i + 1] = 1
        r[i + 1, i] = -1
        r[i + 1, i + 1] = 1
    return r


def quantize_transformed(lat: Lattice, x: np.ndarray, scale: float = 1.0,
                         rotated: bool = False) -> np.ndarray:
    """Closest point of scale * lat (optionally right-multiplied by the
    rotation matrix): map through the inverse transform, quantize, map back."""
    x = np.asarray(x, dtype=np.float64)
    y = x
    if rotated:
        r = rotation_matrix(lat.n)
        y = y @ r.T / 2.0
    y = y / scale
    q = lat.quantize(y)
    q = q * scale
    if rotated:
        q = q @ r
    return q


@dataclass
class NsmEstimate:
    """Monte Carlo normalized second moment and the shaping gain it implies."""

    g: float
    gain_db: float
    g_stderr: float
    samples: int


def nsm_estimate(lat: Lattice, samples: int, rng, workers: int = 1,
                 batch: int = 1 << 14) -> NsmEstimate:
    """Estimate the normalized second moment of the Voronoi region.

    Draws points uniformly over a fundamental parallelepiped (u @ G with u
    uniform in [0,1)^n); the quantization error is then exactly uniform over
    the Voronoi region, so no boundary margin or rejection is needed.
    Gain is quoted in dB against the cube: 10*log10(1/(12 G)).

    ``rng`` is an integer seed or a Generator.  The sample budget is split
    into ``workers`` contiguous quotas, each drawn from its own derived
    stream, so the result depends only on (seed, samples, workers) even if a
    caller fans the quotas out to processes.
    """
    if isinstance(rng, (int, np.integer)):
        streams = [np.random.Generator(np.random.Philox(s))
                   for s in np.random.SeedSequence(int(rng)).spawn(workers)]
    elif workers > 1:
        streams = rng.spawn(workers)
    else:
        streams = [rng]
    quota = [samples // workers] * workers
    quota[-1] += samples - sum(quota)
    G = lat._gen_float
    n = lat.n
    v2n = lat.volume() ** (2.0 / n)
    acc = 0.0
    acc2 = 0.0
    for wrng, todo in zip(streams, quota):
        done = 0
        while done < todo:
            b = min(batch, todo - done)
            u = wrng.random((b, n))
            x = u @ G
            e = x - lat.quantize(x)
            r2 = (e * e).sum(axis=1)
            acc += float(r2.sum())
            acc2 += float((r2 * r2).sum())
            done += b
    mean = acc / samples
    var = max(acc2 / samples - mean * mean, 0.0)
    g = mean / (n * v2n)
    g_se = math.sqrt(var / samples) / (n * v2n)
    gain = 10.0 * math.log10(1.0 / (12.0 * g))
    return NsmEstimate(g=g, gain_db=gain, g_stderr=g_se, samples=samples)
