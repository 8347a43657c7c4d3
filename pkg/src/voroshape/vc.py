"""Voronoi constellations and integer <-> point mappings.

A constellation is the set of offset coding-lattice points inside the Voronoi
region of a scaled (optionally rotated) shaping sublattice.  Three mappings
enumerate the points of a cubic-coding constellation by integer vectors with
per-coordinate ranges:

  kurkoski   ranges from the diagonal of a lower-triangular shaping
             generator; the message itself is reduced modulo the shaping
             lattice, preserving coordinate adjacency (pseudo-Gray friendly)
  feng       ranges from the Smith normal form diagonal; message passes
             through a unimodular transform
  ferdinand  ranges as kurkoski but encoding scales each coordinate by its
             diagonal; applicable only when every below-diagonal entry of the
             triangular generator is divisible by its row diagonal

A fourth mapping, scaled, covers the classical self-similar construction
where coding and shaping are the same lattice at two scales; it is the
baseline the cubic designs are compared against.

All encode/decode paths accept single vectors or batches (rows).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import intlinalg, lattices, shells

ENUM_LIMIT = 1 << 17
FLOAT_EXACT_GUARD = 1 << 40


class MappingError(ValueError):
    """The requested mapping does not apply to this constellation."""


class MessageRangeError(ValueError):
    """A message coordinate is outside its allowed range."""


@dataclass
class MappingTables:
    """Integer data driving one mapping; product of ranges equals M."""

    kind: str
    ranges: np.ndarray                  # int64 per-coordinate range
    lower: np.ndarray | None = None     # int64 lower-triangular generator
    t_fwd: np.ndarray | None = None     # int64 unimodular T (decode side)
    t_inv: np.ndarray | None = None     # int64 T^-1 (encode side)


def _to_int64(obj_mat, what: str) -> np.ndarray:
    arr = np.array([[int(v) for v in row] for row in obj_mat], dtype=object)
    if abs(max(int(v) for v in arr.reshape(-1))) >= FLOAT_EXACT_GUARD or \
       abs(min(int(v) for v in arr.reshape(-1))) >= FLOAT_EXACT_GUARD:
        raise OverflowError(f"{what} entries exceed the exact-arithmetic guard")
    return arr.astype(np.int64)


class VoronoiConstellation:
    """An indexed finite constellation carved from a lattice partition.

    Attributes of note: ``M`` (exact Python int), ``beta`` (bits per symbol
    per dimension pair), ``offset``, ``tables`` (mapping data), and
    ``bits_per_coord`` (populated when every range is a power of two).
    """

    def __init__(self, coding: lattices.Lattice, shaping: lattices.Lattice,
                 m: int, rotated: bool, mapping: str, offset: np.ndarray):
        if m < 1:
            raise ValueError("scale must be a positive integer")
        self.coding = coding
        self.shaping = shaping
        self.m = int(m)
        self.rotated = bool(rotated)
        self.mapping = mapping
        self.n = coding.n
        if shaping.n != coding.n:
            raise ValueError("coding and shaping dimensions differ")
        self.offset = np.asarray(offset, dtype=np.float64).copy()
        if self.offset.shape != (self.n,):
            raise ValueError("offset dimension mismatch")

        eff_num, eff_den = self._effective_generator_exact()
        self._eff_num = eff_num
        self._eff_den = eff_den
        self._check_sublattice()

        det_eff = Fraction(intlinalg.det_int(eff_num), eff_den ** self.n)
        det_cod = coding.det()
        ratio = abs(det_eff / det_cod)
        if ratio.denominator != 1 or ratio.numerator < 1:
            raise ValueError("shaping determinant is not an integer multiple "
                             "of the coding determinant")
        self.M: int = ratio.numerator
        self.beta = 2.0 * _log2_int(self.M) / self.n

        self.tables = self._build_tables()
        prod = math.prod(int(r) for r in self.tables.ranges)
        assert prod == self.M

        self.bits_per_coord = None
        bits = []
        for r in map(int, self.tables.ranges):
            if r & (r - 1) == 0:
                bits.append(r.bit_length() - 1)
            else:
                bits = None
                break
        if bits is not None:
            self.bits_per_coord = np.array(bits, dtype=np.int64)
        self.total_bits = int(self.bits_per_coord.sum()) if bits is not None else None

    # -- construction internals -------------------------------------------

    def _effective_generator_exact(self):
        """Exact integer numerator and denominator of m * G_shaping (* R)."""
        num = intlinalg.to_object_array(
            [[v * self.m for v in row] for row in self.shaping.gen_num])
        den = self.shaping.gen_den
        if self.rotated:
            r = lattices.rotation_matrix(self.n).tolist()
            num = intlinalg.to_object_array(intlinalg.matmul_int(num, r))
        g = math.gcd(den, *(abs(int(v)) for v in num.reshape(-1) if v != 0))
        if g > 1:
            num = intlinalg.to_object_array(
                [[int(v) // g for v in row] for row in num])
            den //= g
        return num, den

    def _check_sublattice(self):
        """Every effective shaping basis row must be a coding-lattice point."""
        if self._eff_den != 1 and self.coding.kind == "cubic":
            raise ValueError("shaping lattice is not a sublattice of the "
                             "coding lattice at this scale")
        rows = np.array([[float(v) for v in row] for row in self._eff_num],
                        dtype=np.float64) / self._eff_den
        coords = rows @ np.linalg.inv(self.coding.generator())
        if not np.allclose(coords, np.rint(coords), atol=1e-9):
            raise ValueError("shaping lattice is not a sublattice of the "
                             "coding lattice")

    def _build_tables(self) -> MappingTables:
        if self.mapping == "scaled":
            if self.rotated:
                raise MappingError("scaled mapping does not support rotation")
            if self.shaping is not self.coding and \
               self.shaping.name != self.coding.name:
                raise MappingError("scaled mapping needs shaping = m x coding")
            ranges = np.full(self.n, self.m, dtype=np.int64)
            return MappingTables(kind="scaled", ranges=ranges)
        if self.coding.kind != "cubic":
            raise MappingError(f"{self.mapping} mapping requires a cubic "
                               "coding lattice")
        if self._eff_den != 1:
            raise ValueError("effective shaping generator is not integral")
        if self.mapping in ("kurkoski", "ferdinand"):
            tri = intlinalg.lower_triangularize(self._eff_num)
            lower = _to_int64(tri.l, "triangular generator")
            ranges = np.diagonal(lower).copy()
            if self.mapping == "ferdinand":
                for i in range(self.n):
                    for j in range(i):
                        if lower[i, j] % lower[i, i] != 0:
                            raise MappingError(
                                "ferdinand mapping inapplicable: entry "
                                f"L[{i},{j}]={lower[i, j]} is not divisible "
                                f"by the diagonal L[{i},{i}]={lower[i, i]}")
            return MappingTables(kind=self.mapping, ranges=ranges, lower=lower)
        if self.mapping == "feng":
            snf = intlinalg.smith_normal_form(self._eff_num)
            j = _to_int64(snf.j, "smith form")
            t = _to_int64(snf.t, "smith transform")
            t_inv = _to_int64(intlinalg.unimodular_inverse(snf.t),
                              "smith transform inverse")
            ranges = np.diagonal(j).copy()
            return MappingTables(kind="feng", ranges=ranges, t_fwd=t,
                                 t_inv=t_inv)
        raise MappingError(f"unknown mapping {self.mapping!r}")

    def with_offset(self, offset: np.ndarray) -> "VoronoiConstellation":
        return VoronoiConstellation(self.coding, self.shaping, self.m,
                                    self.rotated, self.mapping, offset)

    # -- geometry ---------------------------------------------------------

    def quantize_shaping(self, x: np.ndarray) -> np.ndarray:
        """Closest point of the effective (scaled, rotated) shaping lattice."""
        return lattices.quantize_transformed(self.shaping, x, scale=self.m,
                                             rotated=self.rotated)

    def member_mask(self, x: np.ndarray, tol: float = 1e-6) -> np.ndarray:
        """True where x lies in the constellation's Voronoi region (i.e. the
        shaping quantizer returns zero)."""
        q = self.quantize_shaping(np.atleast_2d(x))
        return (q * q).sum(axis=1) < tol

    def d_min(self) -> float:
        return math.sqrt(self.coding.min_norm2)

    # -- mappings ---------------------------------------------------------

    def _validate_messages(self, u: np.ndarray) -> np.ndarray:
        U = np.atleast_2d(np.asarray(u))
        if U.shape[1] != self.n:
            raise MessageRangeError("message dimension mismatch")
        Ui = np.rint(U).astype(np.int64)
        if not np.array_equal(Ui, np.asarray(U)):
            raise MessageRangeError("messages must be integers")
        if np.any(Ui < 0) or np.any(Ui >= self.tables.ranges[None, :]):
            raise MessageRangeError("message coordinate out of range")
        return Ui

    def encode(self, u: np.ndarray) -> np.ndarray:
        """Map integer messages to constellation points."""
        single = np.asarray(u).ndim == 1
        Ui = self._validate_messages(u)
        U = Ui.astype(np.float64)
        t = self.tables
        if t.kind == "kurkoski":
            c = U - self.offset
        elif t.kind == "ferdinand":
            d = U / np.diagonal(t.lower).astype(np.float64)
            c = d @ t.lower.astype(np.float64) - self.offset
        elif t.kind == "feng":
            c = U @ t.t_inv.astype(np.float64) - self.offset
        elif t.kind == "scaled":
            c = U @ self.coding.generator() - self.offset
        else:
            raise MappingError(t.kind)
        x = c - self.quantize_shaping(c)
        return x[0] if single else x

    def decode(self, y: np.ndarray) -> np.ndarray:
        """Map received vectors back to integer messages."""
        Y = np.asarray(y, dtype=np.float64)
        single = Y.ndim == 1
        Y = np.atleast_2d(Y)
        if Y.shape[1] != self.n:
            raise MessageRangeError("received vector dimension mismatch")
        t = self.tables
        if t.kind == "kurkoski":
            W = np.rint(Y + self.offset)
            L = t.lower.astype(np.float64)
            diag = np.diagonal(t.lower).astype(np.float64)
            for i in range(self.n - 1, -1, -1):
                v = np.floor(W[:, i] / diag[i])
                W -= v[:, None] * L[i][None, :]
            out = W.astype(np.int64)
        elif t.kind == "ferdinand":
            # digit extraction from the bottom row up: take c_i mod the row
            # diagonal, then clear the full (possibly fractional-multiple)
            # contribution of row i using the integer ratios L_ij / L_ii
            W = np.rint(Y + self.offset)
            diag = np.diagonal(t.lower)
            ratio = (t.lower // diag[:, None]).astype(np.float64)
            out = np.empty(W.shape, dtype=np.int64)
            for i in range(self.n - 1, -1, -1):
                ci = np.rint(W[:, i])
                out[:, i] = np.mod(ci.astype(np.int64), diag[i])
                W -= ci[:, None] * ratio[i][None, :]
        elif t.kind == "feng":
            C = np.rint(Y + self.offset)
            U = C @ t.t_fwd.astype(np.float64)
            if np.abs(U).max(initial=0.0) >= float(1 << 52):
                raise OverflowError("decode transform exceeds exact range")
            out = np.mod(U.astype(np.int64), self.tables.ranges[None, :])
        elif t.kind == "scaled":
            lam = self.coding.quantize(Y + self.offset)
            U = self.coding.basis_coordinates(lam)
            out = np.mod(np.rint(U).astype(np.int64), self.m)
        else:
            raise MappingError(t.kind)
        return out[0] if single else out

    def enumerate_messages(self) -> np.ndarray:
        """All M messages in lexicographic order (requires M <= 2^17)."""
        if self.M > ENUM_LIMIT:
            raise ValueError(f"M={self.M} too large to enumerate")
        grids = np.meshgrid(*[np.arange(int(r)) for r in self.tables.ranges],
                            indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int64)

    def enumerate_points(self):
        """(messages, points) for the whole constellation (M <= 2^17)."""
        u = self.enumerate_messages()
        return u, self.encode(u)

    def random_messages(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.tables.ranges[None, :], size=(count, self.n),
                            dtype=np.int64)

    # -- bit labels -------------------------------------------------------

    def _require_bits(self):
        if self.bits_per_coord is None:
            raise MappingError("bit labels need every coordinate range to be "
                               "a power of two")

    def gray_label(self, u: np.ndarray) -> np.ndarray:
        """Per-coordinate binary-reflected Gray codewords of the messages,
        returned as int64 code values (one per coordinate)."""
        self._require_bits()
        Ui = self._validate_messages(u)
        g = Ui ^ (Ui >> 1)
        return g[0] if np.asarray(u).ndim == 1 else g

    def gray_unlabel(self, g: np.ndarray) -> np.ndarray:
        """Inverse of gray_label."""
        self._require_bits()
        G = np.atleast_2d(np.asarray(g, dtype=np.int64)).copy()
        shift = 1
        while shift < 64:
            G ^= G >> shift
            shift <<= 1
        if np.any(G < 0) or np.any(G >= self.tables.ranges[None, :]):
            raise MessageRangeError("label out of range")
        return G[0] if np.asarray(g).ndim == 1 else G

    def label_bits(self, u: np.ndarray) -> np.ndarray:
        """Gray labels unpacked to a flat bit matrix, coordinate 0 first,
        most significant bit of each coordinate first."""
        self._require_bits()
        g = np.atleast_2d(self.gray_label(u))
        cols = []
        for i, b in enumerate(self.bits_per_coord):
            for k in range(int(b) - 1, -1, -1):
                cols.append((g[:, i] >> k) & 1)
        out = np.stack(cols, axis=1).astype(np.uint8) if cols else \
            np.zeros((g.shape[0], 0), dtype=np.uint8)
        return out

    def __repr__(self):
        rot = "R" if self.rotated else ""
        return (f"VoronoiConstellation({self.coding.name}/{self.m}"
                f"{self.shaping.name}{rot}, M={self.M}, {self.mapping})")


def _log2_int(v: int) -> float:
    return math.log2(v)


# -- construction helpers -------------------------------------------------

_SPEC_RE = re.compile(
    r"^(?P<coding>Z\d+|D\d+|E8|BW16|Leech24|L32)"
    r"/(?P<m>\d*)"
    r"(?P<shaping>Z\d*|D\d+|E8|BW16|Leech24|L32)"
    r"(?P<rot>R)?$")


def parse_spec(spec: str) -> dict:
    """Parse a constellation spec string like Z4/16D4, Z8/8E8, D4/16D4, or
    Z4/2D4R into its parts."""
    m = _SPEC_RE.match(spec.strip())
    if not m:
        raise ValueError(f"cannot parse constellation spec {spec!r}")
    coding = m.group("coding")
    scale = int(m.group("m")) if m.group("m") else 1
    shaping = m.group("shaping")
    if shaping == "Z":
        head = coding.rstrip("0123456789")
        if head != "Z":
            raise ValueError("bare Z shaping needs a cubic coding lattice")
        shaping = coding
    return {"coding": coding, "m": scale, "shaping": shaping,
            "rotated": m.group("rot") == "R"}


def construct(coding, shaping, m: int = 1, rotated: bool = False,
              mapping: str | None = None, offset="auto",
              rng=None, perturb: float = 1e-9) -> VoronoiConstellation:
    """Build a constellation from lattice names (or Lattice objects).

    ``offset`` is a vector, or one of: "zero", "random" (uniform over the
    coding Voronoi region), "optimize" (centroid iteration, needs
    M <= 2^17), "auto" (optimize when enumerable, else random).  Every
    offset is nudged by a random vector of norm ``perturb`` so that no
    constellation point sits on the shaping Voronoi boundary.
    """
    cod = coding if isinstance(coding, lattices.Lattice) else \
        lattices.build_named(coding)
    shp = shaping if isinstance(shaping, lattices.Lattice) else \
        lattices.build_named(shaping)
    if mapping is None:
        mapping = "scaled" if cod.kind != "cubic" else "kurkoski"
    rng = _as_rng(rng)

    vc = VoronoiConstellation(cod, shp, m, rotated, mapping,
                              np.zeros(cod.n))
    if isinstance(offset, str):
        if offset == "auto":
            offset = "optimize" if vc.M <= ENUM_LIMIT else "random"
        if offset == "zero":
            a = np.zeros(cod.n)
        elif offset == "random":
            u = rng.random(cod.n)
            x = u @ cod.generator()
            a = x - cod.quantize(x)
        elif offset == "optimize":
            a = optimize_offset(vc, rng=rng, perturb=0.0)
        else:
            raise ValueError(f"unknown offset policy {offset!r}")
    else:
        a = np.asarray(offset, dtype=np.float64)
    if perturb > 0:
        d = rng.standard_normal(cod.n)
        a = a + perturb * d / np.linalg.norm(d)
    return vc.with_offset(a)


def from_spec(spec: str, mapping: str | None = None, offset="auto",
              rng=None, perturb: float = 1e-9) -> VoronoiConstellation:
    p = parse_spec(spec)
    return construct(p["coding"], p["shaping"], p["m"], p["rotated"],
                     mapping, offset, rng, perturb)


def _as_rng(rng) -> np.random.Generator:
    if rng is None:
        return np.random.default_rng(0)
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    return rng


def optimize_offset(vc: VoronoiConstellation, tol: float = 1e-10,
                    max_iter: int = 200, rng=None, starts: int = 3,
                    perturb: float = 1e-9) -> np.ndarray:
    """Minimize average symbol energy over the offset by centroid iteration.

    Each pass recenters the enumerated constellation on its centroid and
    refolds; the energy never increases.  Multiple random starts guard
    against (but cannot rule out) poor local minima in 8 and more
    dimensions.  The returned offset carries a final random perturbation of
    norm ``perturb`` to keep points off the Voronoi boundary.
    """
    if vc.M > ENUM_LIMIT:
        raise ValueError(f"M={vc.M} too large to optimize; use a random offset")
    rng = _as_rng(rng)
    U = vc.enumerate_messages().astype(np.float64)
    start_list = [np.zeros(vc.n)]
    for _ in range(max(0, starts - 1)):
        u = rng.random(vc.n)
        x = u @ vc.coding.generator()
        start_list.append(x - vc.coding.quantize(x))
    best_a = None
    best_es = np.inf
    for a0 in start_list:
        a = a0.copy()
        prev_es = np.inf
        for _ in range(max_iter):
            c = U - a
            x = c - vc.quantize_shaping(c)
            es = float((x * x).sum() / x.shape[0])
            if es > prev_es + 1e-12:
                break
            prev_es = es
            mu = x.mean(axis=0)
            if np.linalg.norm(mu) < tol:
                break
            a = a + mu
        if prev_es < best_es:
            best_es = prev_es
            best_a = a
    if perturb > 0:
        d = rng.standard_normal(vc.n)
        best_a = best_a + perturb * d / np.linalg.norm(d)
    return best_a


# -- figures of merit -----------------------------------------------------

@dataclass
class MeritReport:
    """Figures of merit for one constellation."""

    spec: str
    M: int
    beta: float
    es: float
    es_stderr: float
    d_min: float
    gamma: float
    gamma_pam: float
    gain_db: float
    exact: bool

    def as_dict(self) -> dict:
        return {
            "spec": self.spec, "M": self.M, "beta": self.beta,
            "es": self.es, "es_stderr": self.es_stderr, "d_min": self.d_min,
            "gamma": self.gamma, "gamma_pam": self.gamma_pam,
            "gain_db": self.gain_db, "exact": self.exact,
        }


def average_energy(vc: VoronoiConstellation, samples: int = 10 ** 6,
                   rng=None) -> tuple[float, float, bool]:
    """Average squared point norm: exact by enumeration when M <= 2^17,
    otherwise Monte Carlo over uniform messages."""
    if vc.M <= ENUM_LIMIT:
        _, x = vc.enumerate_points()
        return float((x * x).sum() / vc.M), 0.0, True
    rng = _as_rng(rng)
    chunk = 1 << 13
    acc = 0.0
    acc2 = 0.0
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        u = vc.random_messages(b, rng)
        x = vc.encode(u)
        e = (x * x).sum(axis=1)
        acc += float(e.sum())
        acc2 += float((e * e).sum())
        done += b
    mean = acc / samples
    var = max(acc2 / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples), False


def merit_report(vc: VoronoiConstellation, samples: int = 10 ** 6,
                 rng=None) -> MeritReport:
    """Spectral efficiency, energy, asymptotic power efficiency, and the
    shaping gain over PAM at equal spectral efficiency."""
    es, se, exact = average_energy(vc, samples, rng)
    beta = vc.beta
    d2 = vc.coding.min_norm2
    gamma = d2 * _log2_int(vc.M) / (4.0 * es)
    gamma_pam = 3.0 * beta / (2.0 * (2.0 ** beta - 1.0))
    gain = 10.0 * math.log10(gamma / gamma_pam)
    rot = "R" if vc.rotated else ""
    spec = f"{vc.coding.name}/{vc.m}{vc.shaping.name}{rot}"
    return MeritReport(spec=spec, M=vc.M, beta=beta, es=es, es_stderr=se,
                       d_min=vc.d_min(), gamma=gamma, gamma_pam=gamma_pam,
                       gain_db=gain, exact=exact)


def _min_vector_half_set(coding: lattices.Lattice) -> np.ndarray:
    """One representative from each +/- pair of minimal coding-lattice
    vectors (first nonzero coordinate positive)."""
    r2 = int(round(coding.min_norm2))
    disp = shells.shell_displacements(coding.n, r2).astype(np.float64)
    q = coding.quantize(disp)
    member = np.all(q == disp, axis=1)
    disp = disp[member]
    keep = []
    for w in disp:
        nz = np.nonzero(w)[0]
        if w[nz[0]] > 0:
            keep.append(w)
    return np.array(keep)


def gray_penalty(vc: VoronoiConstellation, samples: int | None = None,
                 rng=None) -> float:
    """Mean Hamming distance between bit labels over minimum-distance pairs.

    Enumerates the constellation when M <= 2^17; otherwise scores the
    neighbors of ``samples`` random points.  A value of 1 means perfect
    Gray labeling.
    """
    vc._require_bits()
    if vc.M <= ENUM_LIMIT and samples is None:
        u = vc.enumerate_messages()
        x = vc.encode(u)
    else:
        if samples is None:
            raise ValueError("large constellation: pass a sampling budget")
        rng = _as_rng(rng)
        u = vc.random_messages(samples, rng)
        x = vc.encode(u)
    halfset = _min_vector_half_set(vc.coding)
    labels = vc.gray_label(u)
    total = 0
    pairs = 0
    for w in halfset:
        xn = x + w[None, :]
        mask = vc.member_mask(xn)
        if not np.any(mask):
            continue
        un = vc.decode(xn[mask])
        ln = vc.gray_label(un)
        diff = labels[mask] ^ ln
        total += int(np.bitwise_count(diff.astype(np.uint64)).sum())
        pairs += int(mask.sum())
    if pairs == 0:
        raise ValueError("no minimum-distance pairs found")
    return total / pairs
