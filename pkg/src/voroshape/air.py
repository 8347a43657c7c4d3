"""AWGN workbench for Voronoi constellations.

Exact and shell-sampled marginal densities f_Y, mutual information
estimation with convergence control over the number of shells, exact and
important-set bit LLRs, an LLR record exporter, and PAM/QAM/capacity
reference curves.  Densities are handled in natural-log domain throughout;
f_Y underflows float64 far below the SNRs where anything interesting
happens.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import shells
from .vc import VoronoiConstellation, _as_rng

LN2 = math.log(2.0)

# full-constellation scans: enumeration ceiling and working-set bound
DEFAULT_ENUM_POINTS = 1 << 24
MEMORY_GUARD_BYTES = 2 << 30

# per-shell handling: enumerate at or below the cap, otherwise draw
# uniform trials; kept-point budget K_d
SHELL_ENUM_CAP = 30000
SHELL_BUDGET = 10000

# log-domain gather margin: terms more than this many nats below a class
# (or global) peak are dropped; e^-60 is far below every tolerance here
GATHER_MARGIN_NATS = 60.0

_SCAN_CHUNK = 1 << 18
_SCREEN_SLACK = 0.5


class ConvergenceError(RuntimeError):
    """Shell count cap reached before the relative-increment rule held."""


# -- channel ---------------------------------------------------------------

@dataclass(frozen=True)
class AwgnChannel:
    """n-dimensional AWGN with total noise power sigma2 (variance sigma2/n
    per dimension).  snr_db is informational: 10 log10(Es / sigma2)."""

    n: int
    sigma2: float
    snr_db: float | None = None

    def __post_init__(self):
        if self.n < 1 or self.sigma2 <= 0.0:
            raise ValueError("need n >= 1 and sigma2 > 0")

    @property
    def per_dim_var(self) -> float:
        return self.sigma2 / self.n

    @property
    def two_s(self) -> float:
        # the exponent scale 2 sigma^2 / n
        return 2.0 * self.sigma2 / self.n

    @property
    def log_norm(self) -> float:
        return -0.5 * self.n * math.log(2.0 * math.pi * self.sigma2 / self.n)

    def sample(self, x: np.ndarray, rng) -> np.ndarray:
        rng = _as_rng(rng)
        x = np.asarray(x, dtype=np.float64)
        return x + rng.normal(0.0, math.sqrt(self.per_dim_var), x.shape)

    def loglik(self, d2) -> np.ndarray:
        """Natural-log conditional density at squared distance d2."""
        return self.log_norm - np.asarray(d2, dtype=np.float64) / self.two_s


def channel_for_snr(vc: VoronoiConstellation, snr_db: float,
                    es: float | None = None) -> AwgnChannel:
    if es is None:
        es = symbol_energy(vc)
    sigma2 = es / (10.0 ** (snr_db / 10.0))
    return AwgnChannel(vc.n, sigma2, snr_db)


# -- cached full-constellation scans ---------------------------------------

@dataclass
class _PointCache:
    scale: int                      # stored ints are scale * (x + offset)
    points: np.ndarray              # (M, n) int16
    norms2: np.ndarray              # (M,) float32, |x + offset|^2
    offset: np.ndarray
    es: float                       # exact mean |x|^2
    total_bits: int = 0
    by_label: bool = False          # row index == packed gray label


_CACHES: dict[int, tuple[VoronoiConstellation, _PointCache]] = {}
_ES_CACHE: dict[int, tuple[VoronoiConstellation, float]] = {}


def clear_caches():
    _CACHES.clear()
    _ES_CACHE.clear()


def _messages_for_index_range(vc, start, stop):
    """Messages number start..stop-1 in the lexicographic enumeration."""
    ranges = vc.tables.ranges
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.size, vc.n), dtype=np.int64)
    stride = 1
    for j in range(vc.n - 1, -1, -1):
        out[:, j] = (idx // stride) % ranges[j]
        stride *= int(ranges[j])
    return out


def _pack_labels(vc, u):
    g = np.atleast_2d(vc.gray_label(u)).astype(np.uint64)
    total = int(vc.total_bits)
    packed = np.zeros(g.shape[0], dtype=np.uint64)
    used = 0
    for i, b in enumerate(map(int, vc.bits_per_coord)):
        used += b
        packed |= g[:, i] << np.uint64(total - used)
    return packed


def constellation_cache(vc: VoronoiConstellation,
                        max_points: int = DEFAULT_ENUM_POINTS,
                        with_labels: bool = False) -> _PointCache:
    """Build (or fetch) the int16 point table for full scans."""
    key = id(vc)
    hit = _CACHES.get(key)
    if hit is not None and hit[0] is vc:
        cache = hit[1]
        if not with_labels or cache.by_label:
            return cache
    if vc.M > max_points:
        raise ValueError(
            f"M={vc.M} exceeds the enumeration ceiling {max_points}; "
            "use fy_importance / llr_approx instead")
    if vc.M * (2 * vc.n + 4) > MEMORY_GUARD_BYTES:
        raise ValueError("constellation table would exceed the memory guard")
    scale = int(vc.coding.gen_den)
    m = int(vc.M)
    if with_labels:
        vc._require_bits()
        if (1 << int(vc.total_bits)) != m:
            raise AssertionError("label space does not cover the "
                                 "constellation")
    pts = np.empty((m, vc.n), dtype=np.int16)
    norms = np.empty(m, dtype=np.float32)
    es_acc = 0.0
    for start in range(0, m, _SCAN_CHUNK):
        stop = min(start + _SCAN_CHUNK, m)
        u = _messages_for_index_range(vc, start, stop)
        x = np.atleast_2d(vc.encode(u))
        shifted = (x + vc.offset) * scale
        snapped = np.rint(shifted)
        if np.abs(shifted - snapped).max(initial=0.0) > 1e-6:
            raise AssertionError("constellation point not on the expected grid")
        if np.abs(snapped).max(initial=0.0) > 32000:
            raise AssertionError("constellation point outside int16 range")
        shifted /= scale
        rows = _pack_labels(vc, u).astype(np.int64) if with_labels else \
            np.arange(start, stop)
        pts[rows] = snapped.astype(np.int16)
        norms[rows] = (shifted * shifted).sum(axis=1)
        es_acc += float((x * x).sum())
    cache = _PointCache(scale, pts, norms, vc.offset.copy(), es_acc / m,
                        int(vc.total_bits) if with_labels else 0, with_labels)
    _CACHES[key] = (vc, cache)
    return cache


def symbol_energy(vc: VoronoiConstellation) -> float:
    """Mean squared norm of the constellation, deterministic per vc."""
    # entries pin vc so a freed id cannot alias a new constellation
    key = id(vc)
    held = _ES_CACHE.get(key)
    if held is not None and held[0] is vc:
        return held[1]
    hit = _CACHES.get(key)
    if hit is not None and hit[0] is vc:
        es = hit[1].es
    else:
        from .vc import average_energy
        samples = 1 << 18 if vc.M > (1 << 17) else 10 ** 6
        es = average_energy(vc, samples=samples,
                            rng=np.random.default_rng(229))[0]
    _ES_CACHE[key] = (vc, es)
    return es


def _coding_floor_d2(vc, ytil):
    """Squared distance from each shifted receive vector to the coding
    lattice; a lower bound on the distance to the constellation."""
    q = vc.coding.quantize(ytil)
    e = ytil - q
    return (e * e).sum(axis=1)


def _gather_scan(cache, ytil, thresh):
    """One pass over the point table.

    Returns per-row best squared distance found and, for every row of ytil,
    the indices of points whose screened squared distance is at most the
    row's threshold.
    """
    m, n = cache.points.shape
    B = ytil.shape[0]
    yt32 = ytil.astype(np.float32)
    ynorm = (yt32 * yt32).sum(axis=1)
    th32 = (thresh + _SCREEN_SLACK + 1e-3 * np.abs(thresh)).astype(np.float32)
    best = np.full(B, np.inf, dtype=np.float32)
    rows_acc, cols_acc = [], []
    inv = np.float32(1.0 / cache.scale)
    for start in range(0, m, _SCAN_CHUNK):
        stop = min(start + _SCAN_CHUNK, m)
        pf = cache.points[start:stop].astype(np.float32) * inv
        d2 = cache.norms2[start:stop, None] - 2.0 * (pf @ yt32.T)
        d2 += ynorm[None, :]
        np.minimum(best, d2.min(axis=0), out=best)
        mask = d2 <= th32[None, :]
        if mask.any():
            r, c = np.nonzero(mask)
            rows_acc.append(r.astype(np.int64) + start)
            cols_acc.append(c)
    if rows_acc:
        rows = np.concatenate(rows_acc)
        cols = np.concatenate(cols_acc)
        order = np.argsort(cols, kind="stable")
        rows = rows[order]
        cols = cols[order]
        bounds = np.searchsorted(cols, np.arange(B + 1))
        picks = [rows[bounds[j]:bounds[j + 1]] for j in range(B)]
    else:
        picks = [np.empty(0, dtype=np.int64) for _ in range(B)]
    return best, picks


def _logsumexp(a):
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return -np.inf
    peak = a.max()
    if not np.isfinite(peak):
        return peak
    return peak + math.log(np.exp(a - peak).sum())


def fy_exact_log(vc: VoronoiConstellation, ch: AwgnChannel, y: np.ndarray,
                 max_points: int = DEFAULT_ENUM_POINTS,
                 batch: int = 64) -> np.ndarray:
    """Natural log of f_Y(y) by full constellation scan.

    Screens points in float32 against a per-row distance threshold, then
    resolves the surviving terms exactly in float64.  Dropped terms sit more
    than GATHER_MARGIN_NATS below the peak.
    """
    cache = constellation_cache(vc, max_points)
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    out = np.empty(Y.shape[0])
    s2 = ch.two_s
    base = ch.log_norm - math.log(vc.M)
    for start in range(0, Y.shape[0], batch):
        ytil = Y[start:start + batch] + vc.offset
        floor = _coding_floor_d2(vc, ytil)
        thresh = floor + (GATHER_MARGIN_NATS + 15.0) * s2
        best, picks = _gather_scan(cache, ytil, thresh)
        redo = best > floor + 15.0 * s2 + _SCREEN_SLACK
        if redo.any():
            t2 = best[redo] + np.float32(GATHER_MARGIN_NATS * s2)
            _, picks2 = _gather_scan(cache, ytil[redo], t2.astype(np.float64))
            for slot, j in enumerate(np.nonzero(redo)[0]):
                picks[j] = picks2[slot]
        for j in range(ytil.shape[0]):
            pg = cache.points[picks[j]].astype(np.float64) / cache.scale
            diff = ytil[j][None, :] - pg
            d2 = (diff * diff).sum(axis=1)
            out[start + j] = base + _logsumexp(-d2 / s2)
    return out


def fy_exact(vc, ch, y, max_points: int = DEFAULT_ENUM_POINTS):
    """f_Y(y) as a plain density (may underflow; see fy_exact_log).

    A single vector gives a float, a batch gives a 1-D array."""
    single = np.asarray(y).ndim == 1
    out = np.exp(fy_exact_log(vc, ch, np.atleast_2d(y),
                              max_points=max_points))
    return float(out[0]) if single else out


# -- shell-based importance estimator --------------------------------------

def _shell_split(n: int, d_shells: int, enum_cap: int):
    """Shell indices 1..D split into enumerable and sampled, with the
    enumerable displacements stacked into one block."""
    enum_parts, sampled = [], []
    ids, counts = [], []
    for d in range(1, d_shells + 1):
        r2 = d - 1
        card = shells.shell_cardinality(n, r2)
        if card == 0:
            continue
        # the center shell is a single point; never sample it
        if card <= enum_cap or r2 == 0:
            disp = shells.shell_displacements(n, r2)
            enum_parts.append(disp)
            ids.append(d)
            counts.append(card)
        else:
            sampled.append((d, card))
    block = np.concatenate(enum_parts, axis=0) if enum_parts else \
        np.zeros((0, n), dtype=np.int16)
    return block, np.array(ids), np.array(counts), sampled


def shell_log_terms(vc: VoronoiConstellation, ch: AwgnChannel, y: np.ndarray,
                    d_shells: int, rng=None,
                    enum_cap: int = SHELL_ENUM_CAP,
                    budget: int = SHELL_BUDGET) -> np.ndarray:
    """Per-shell natural-log contributions to M * f_Y(y) / exp(log_norm).

    Shell d holds the lattice-translate points at squared distance d-1 from
    the rounded receive vector.  Enumerable shells are summed over their
    membership-filtered points exactly (subsampled to the budget when the
    filtered set is larger); larger shells are estimated from uniform trials
    reweighted by shell cardinality.
    """
    if d_shells < 1:
        raise ValueError("need at least one shell")
    rng = _as_rng(rng)
    y = np.asarray(y, dtype=np.float64)
    ytil = y + vc.offset
    center = np.rint(ytil)
    base = center - vc.offset
    s2 = ch.two_s
    out = np.full(d_shells, -np.inf)

    block, ids, counts, sampled = _shell_split(vc.n, d_shells, enum_cap)
    if block.shape[0]:
        X = base[None, :] + block
        keep = vc.member_mask(X)
        stops = np.cumsum(counts)
        starts = stops - counts
        for sid, a, b in zip(ids, starts, stops):
            sel = np.nonzero(keep[a:b])[0]
            ni = sel.size
            if ni == 0:
                continue
            if ni > budget:
                sel = sel[rng.choice(ni, size=budget, replace=False)]
                lw = math.log(ni / budget)
            else:
                lw = 0.0
            diff = X[a + sel] - y[None, :]
            d2 = (diff * diff).sum(axis=1)
            out[sid - 1] = lw + _logsumexp(-d2 / s2)

    if sampled:
        refs = [shells.ShellRef(center, d - 1, vc.offset) for d, _ in sampled]
        draws = [shells.sample_shell_uniform(ref, budget, rng) for ref in refs]
        Xs = np.concatenate(draws, axis=0)
        keep = vc.member_mask(Xs)
        for i, (d, card) in enumerate(sampled):
            seg = keep[i * budget:(i + 1) * budget]
            if not seg.any():
                continue
            pts = Xs[i * budget:(i + 1) * budget][seg]
            diff = pts - y[None, :]
            d2 = (diff * diff).sum(axis=1)
            out[d - 1] = math.log(card / budget) + _logsumexp(-d2 / s2)
    return out


def fy_importance_log(vc, ch, y, d_shells: int, rng=None,
                      enum_cap: int = SHELL_ENUM_CAP,
                      budget: int = SHELL_BUDGET) -> np.ndarray:
    rng = _as_rng(rng)
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    base = ch.log_norm - math.log(vc.M)
    out = np.empty(Y.shape[0])
    for j in range(Y.shape[0]):
        terms = shell_log_terms(vc, ch, Y[j], d_shells, rng,
                                enum_cap=enum_cap, budget=budget)
        out[j] = base + _logsumexp(terms)
    return out


def fy_importance(vc, ch, y, d_shells: int, rng=None,
                  enum_cap: int = SHELL_ENUM_CAP,
                  budget: int = SHELL_BUDGET):
    """Shell-estimated f_Y(y): float for a single vector, array for a
    batch."""
    single = np.asarray(y).ndim == 1
    out = np.exp(fy_importance_log(vc, ch, np.atleast_2d(y), d_shells,
                                   rng, enum_cap=enum_cap, budget=budget))
    return float(out[0]) if single else out


# -- shell-count selection -------------------------------------------------

@dataclass
class ChooseDResult:
    d: int
    ratios: np.ndarray              # index D-1: aggregated next-shell step
    probes: int
    realizations: int
    rel_tol: float
    stat: str = "mean"
    probe_style: str = "region"


def region_probes(vc: VoronoiConstellation, count: int, rng=None) -> np.ndarray:
    """Vectors uniform over the shaping Voronoi region (parallelepiped draw
    folded by the shaping quantizer)."""
    rng = _as_rng(rng)
    num = np.array([[float(v) for v in row] for row in vc._eff_num])
    z = rng.random((count, vc.n)) @ (num / vc._eff_den)
    return z - vc.quantize_shaping(z)


def choose_d(vc: VoronoiConstellation, ch: AwgnChannel,
             probes: int = 10, realizations: int = 5,
             rel_tol: float = 5e-3, d_cap: int = 40, rng=None,
             probe_y: np.ndarray | None = None,
             probe_style: str = "region", stat: str = "mean",
             enum_cap: int = SHELL_ENUM_CAP,
             budget: int = SHELL_BUDGET) -> ChooseDResult:
    """Smallest shell count D whose next-shell relative increment
    (f^(D+1) - f^(D)) / f^(D) stays below rel_tol.

    The increment is measured on ``probes`` probe vectors with
    ``realizations`` independent shell estimates each; ``stat`` aggregates
    those measurements per D, either "mean" (default) or the more
    conservative "max".  ``probe_style`` selects where probes come from:
    "region" draws them uniformly over the shaping Voronoi region,
    "channel" passes random constellation points through the channel.  An
    explicit ``probe_y`` overrides both.
    """
    rng = _as_rng(rng)
    if probe_y is None:
        if probe_style == "region":
            probe_y = region_probes(vc, probes, rng)
        elif probe_style == "channel":
            u = vc.random_messages(probes, rng)
            probe_y = ch.sample(vc.encode(u), rng)
        else:
            raise ValueError(f"unknown probe_style {probe_style!r}")
    else:
        probe_y = np.atleast_2d(np.asarray(probe_y, dtype=np.float64))
        probes = probe_y.shape[0]
    if stat not in ("mean", "max"):
        raise ValueError(f"unknown stat {stat!r}")
    # evaluate shells in widening windows; deep windows are expensive, so
    # stop as soon as the rule fires inside the current one
    stage = min(8, d_cap)
    while True:
        logs = np.full((probes, realizations, stage), -np.inf)
        for p in range(probes):
            for r in range(realizations):
                logs[p, r] = shell_log_terms(vc, ch, probe_y[p], stage, rng,
                                             enum_cap=enum_cap, budget=budget)
        cum = np.logaddexp.accumulate(logs, axis=2)
        with np.errstate(invalid="ignore"):
            steps = np.exp(logs[:, :, 1:] - cum[:, :, :-1])
        steps = np.where(np.isnan(steps), np.inf, steps)
        agg = steps.mean(axis=(0, 1)) if stat == "mean" else \
            steps.max(axis=(0, 1))
        ok = np.nonzero(agg < rel_tol)[0]
        if ok.size:
            return ChooseDResult(int(ok[0]) + 1, agg, probes, realizations,
                                 rel_tol, stat, probe_style)
        if stage >= d_cap:
            raise ConvergenceError(
                f"no D <= {d_cap - 1} met the {rel_tol:.3%} increment rule; "
                f"final {stat} ratio {agg[-1]:.3e}")
        stage = min(d_cap, stage + 8)


# -- mutual information ----------------------------------------------------

@dataclass
class MiEstimate:
    snr_db: float | None
    mi: float                       # bits per symbol per dimension pair
    stderr: float
    ns: int
    d_shells: int | None
    backend: str

    def __post_init__(self):
        if self.ns < 10 ** 3:
            raise ValueError("mutual information runs need Ns >= 1000")


def mi_estimate(vc: VoronoiConstellation, ch: AwgnChannel, ns: int,
                d_shells: int | None = None, rng=None,
                backend: str = "auto", batch: int = 2048,
                max_points: int = DEFAULT_ENUM_POINTS,
                enum_cap: int = SHELL_ENUM_CAP,
                budget: int = SHELL_BUDGET) -> MiEstimate:
    """Monte Carlo mutual information in bits/symbol/dimension-pair.

    Draws uniform messages, passes them through the channel and averages
    log2 of the conditional-to-marginal density ratio; the marginal comes
    from the exact scan or the shell estimator.
    """
    if ns < 10 ** 3:
        raise ValueError("mutual information runs need Ns >= 1000")
    rng = _as_rng(rng)
    if backend == "auto":
        backend = "exact" if vc.M <= max_points else "importance"
    if backend == "importance" and d_shells is None:
        d_shells = choose_d(vc, ch, rng=rng, enum_cap=enum_cap,
                            budget=budget).d
    vals = np.empty(ns)
    done = 0
    while done < ns:
        k = min(batch, ns - done)
        u = vc.random_messages(k, rng)
        x = np.atleast_2d(vc.encode(u))
        g = rng.normal(0.0, math.sqrt(ch.per_dim_var), x.shape)
        y = x + g
        num = ch.log_norm - (g * g).sum(axis=1) / ch.two_s
        if backend == "exact":
            den = fy_exact_log(vc, ch, y, max_points=max_points)
        elif backend == "importance":
            den = fy_importance_log(vc, ch, y, d_shells, rng,
                                    enum_cap=enum_cap, budget=budget)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        vals[done:done + k] = (num - den) / LN2
        done += k
    scalef = 2.0 / vc.n
    mi = scalef * vals.mean()
    stderr = scalef * vals.std(ddof=1) / math.sqrt(ns)
    return MiEstimate(ch.snr_db, mi, stderr, ns, d_shells, backend)


# -- bit LLRs --------------------------------------------------------------

@dataclass(frozen=True)
class LlrParams:
    """Important-set LLR parameters: ball squared radius and the default
    squared distance substituted for an empty bit class."""

    r2: int
    q: float

    def __post_init__(self):
        object.__setattr__(self, "r2", int(self.r2))
        if self.q <= self.r2:
            raise ValueError("default distance q must exceed the ball "
                             "radius^2")


def _bit_class_mins(cache, ytil):
    """Per-receive-vector minimum screened squared distance, overall and per
    (bit, class).

    Relies on the by-label cache layout: rows whose index has bit b of the
    packed label clear form the class-0 set, and each label bit partitions
    the rows into aligned power-of-two blocks, so every class minimum falls
    out of one tournament-tree reduction per chunk.
    """
    m, n = cache.points.shape
    B = ytil.shape[0]
    tb = cache.total_bits
    yt32 = ytil.astype(np.float32)
    ynorm = (yt32 * yt32).sum(axis=1)
    inv = np.float32(1.0 / cache.scale)
    best = np.full(B, np.inf, dtype=np.float32)
    cmins = np.full((tb, 2, B), np.inf, dtype=np.float32)
    chunk = min(m, _SCAN_CHUNK)
    logc = chunk.bit_length() - 1
    for start in range(0, m, chunk):
        pf = cache.points[start:start + chunk].astype(np.float32) * inv
        d2 = cache.norms2[start:start + chunk, None] - 2.0 * (pf @ yt32.T)
        d2 += ynorm[None, :]
        lev = d2
        for ell in range(logc):
            b = tb - 1 - ell
            pair = lev.reshape(-1, 2, B)
            if b >= 0:
                np.minimum(cmins[b, 0], pair[:, 0].min(axis=0),
                           out=cmins[b, 0])
                np.minimum(cmins[b, 1], pair[:, 1].min(axis=0),
                           out=cmins[b, 1])
            lev = pair.min(axis=1)
        cmin = lev.reshape(B)
        np.minimum(best, cmin, out=best)
        for b in range(tb - logc):
            side = (start >> (tb - 1 - b)) & 1
            np.minimum(cmins[b, side], cmin, out=cmins[b, side])
    return best, cmins


def llr_exact(vc: VoronoiConstellation, ch: AwgnChannel, y: np.ndarray,
              max_points: int = DEFAULT_ENUM_POINTS,
              batch: int = 32) -> np.ndarray:
    """Exact per-bit LLRs log Pr(bit=0|y)/Pr(bit=1|y), natural log.

    Full log-domain class sums over the constellation; each class is summed
    to within GATHER_MARGIN_NATS of its own peak, so arbitrarily
    unbalanced bits keep their exact (large) values.
    """
    cache = constellation_cache(vc, max_points, with_labels=True)
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    tb = cache.total_bits
    out = np.empty((Y.shape[0], tb))
    s2 = ch.two_s
    for start in range(0, Y.shape[0], batch):
        ytil = Y[start:start + batch] + vc.offset
        best, cmins = _bit_class_mins(cache, ytil)
        worst = cmins.max(axis=(0, 1)).astype(np.float64)
        thresh = worst + GATHER_MARGIN_NATS * s2
        _, picks = _gather_scan(cache, ytil, thresh)
        for j in range(ytil.shape[0]):
            sel = picks[j]          # row index doubles as the packed label
            pg = cache.points[sel].astype(np.float64) / cache.scale
            diff = ytil[j][None, :] - pg
            d2 = (diff * diff).sum(axis=1)
            expo = -d2 / s2
            for b in range(tb):
                bit = (sel >> (tb - 1 - b)) & 1
                ls0 = _logsumexp(expo[bit == 0])
                ls1 = _logsumexp(expo[bit == 1])
                out[start + j, b] = ls0 - ls1
    return out[0] if np.asarray(y).ndim == 1 else out


def _important_set(vc, y, r2):
    """Constellation points within squared radius r2 of the rounded receive
    vector, with their labels."""
    ytil = y + vc.offset
    base = np.rint(ytil) - vc.offset
    parts = []
    for s in range(r2 + 1):
        if shells.shell_cardinality(vc.n, s) == 0:
            continue
        parts.append(shells.shell_displacements(vc.n, s))
    disp = np.concatenate(parts, axis=0)
    X = base[None, :] + disp
    X = X[vc.member_mask(X)]
    return X


def llr_approx(vc: VoronoiConstellation, ch: AwgnChannel, y: np.ndarray,
               params: LlrParams) -> np.ndarray:
    """Important-set max-log LLRs: per bit class, the smallest squared
    distance inside the ball, with params.q substituted for empty classes,
    scaled by -1/(2 sigma^2/n)."""
    vc._require_bits()
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    tb = int(vc.total_bits)
    out = np.empty((Y.shape[0], tb))
    s2 = ch.two_s
    for j in range(Y.shape[0]):
        X = _important_set(vc, Y[j], params.r2)
        if X.shape[0] == 0:
            out[j] = 0.0
            continue
        bits = vc.label_bits(vc.decode(X))
        diff = X - Y[j][None, :]
        d2 = (diff * diff).sum(axis=1)
        for b in range(tb):
            mask1 = bits[:, b] == 1
            d0 = d2[~mask1].min() if (~mask1).any() else params.q
            d1 = d2[mask1].min() if mask1.any() else params.q
            out[j, b] = (d1 - d0) / s2
    return out[0] if np.asarray(y).ndim == 1 else out


# -- LLR export ------------------------------------------------------------

LLR_RECORD_DTYPE = np.dtype([("symbol", "<u8"), ("bit", "<u8"),
                             ("llr", "<f8")])


def write_llr_records(path, symbol_idx, bit_idx, llr, fmt: str = "bin"):
    """(symbol, bit, llr) records; binary form is packed little-endian
    u64/u64/f64, 24 bytes per record."""
    rec = np.empty(len(llr), dtype=LLR_RECORD_DTYPE)
    rec["symbol"] = symbol_idx
    rec["bit"] = bit_idx
    rec["llr"] = llr
    if fmt == "bin":
        rec.tofile(path)
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write("symbol_index,bit_index,llr\n")
            for r in rec:
                fh.write(f"{int(r['symbol'])},{int(r['bit'])},"
                         f"{r['llr']:.12g}\n")
    else:
        raise ValueError(f"unknown LLR export format {fmt!r}")


def read_llr_records(path, fmt: str = "bin") -> np.ndarray:
    if fmt == "bin":
        return np.fromfile(path, dtype=LLR_RECORD_DTYPE)
    if fmt == "csv":
        sym, bit, llr = [], [], []
        with open(path) as fh:
            next(fh)
            for line in fh:
                a, b, c = line.strip().split(",")
                sym.append(int(a))
                bit.append(int(b))
                llr.append(float(c))
        rec = np.empty(len(llr), dtype=LLR_RECORD_DTYPE)
        rec["symbol"], rec["bit"], rec["llr"] = sym, bit, llr
        return rec
    raise ValueError(f"unknown LLR export format {fmt!r}")


# -- reference curves ------------------------------------------------------

def awgn_capacity(snr_db: float) -> float:
    """Gaussian capacity, bits per dimension pair."""
    return math.log2(1.0 + 10.0 ** (snr_db / 10.0))


def pam_mi(bits: int, snr_db: float, nodes: int = 161) -> float:
    """Exact MI of equiprobable 2^bits-PAM on a 1-D AWGN channel with
    SNR = Es/sigma^2, by Gauss-Hermite quadrature.  Bits per dimension."""
    L = 1 << bits
    levels = 2.0 * np.arange(L) - (L - 1)
    es = float((levels * levels).mean())
    levels /= math.sqrt(es)
    sigma = 10.0 ** (-snr_db / 20.0)
    t, w = np.polynomial.hermite.hermgauss(nodes)
    acc = 0.0
    for p in levels:
        yv = p + math.sqrt(2.0) * sigma * t
        d = yv[:, None] - levels[None, :]
        expo = -(d * d) / (2.0 * sigma * sigma)
        peak = expo.max(axis=1)
        mix = peak + np.log(np.exp(expo - peak[:, None]).sum(axis=1))
        cond = -((yv - p) ** 2) / (2.0 * sigma * sigma)
        acc += float((w * (cond - (mix - math.log(L)))).sum())
    return acc / (L * math.sqrt(math.pi)) / LN2


def qam_mi(bits_per_pair: int, snr_db: float) -> float:
    """Square-QAM MI, bits per dimension pair; per-dimension SNR equals the
    per-pair SNR for a square constellation."""
    if bits_per_pair % 2:
        raise ValueError("square QAM needs an even number of bits per pair")
    return 2.0 * pam_mi(bits_per_pair // 2, snr_db)


def snr_gap_db(mi: float, snr_db: float) -> float:
    """Horizontal gap (dB) from the capacity curve at the given MI."""
    return snr_db - 10.0 * math.log10(2.0 ** mi - 1.0)


def qam_snr_for_mi(target_mi: float, bits_per_pair: int,
                   lo: float = -10.0, hi: float = 80.0) -> float:
    """SNR (dB) where square QAM reaches the target MI, by bisection."""
    if not qam_mi(bits_per_pair, hi) >= target_mi >= qam_mi(bits_per_pair, lo):
        raise ValueError("target MI outside the bracket")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if qam_mi(bits_per_pair, mid) < target_mi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
