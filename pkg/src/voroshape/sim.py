"""Seeded Monte Carlo sweeps: error rates, mutual information, merit tables.

Each sweep runs off a SweepConfig and yields a SweepResult whose data payload
depends only on the config (seed included).  Random numbers come from
counter-based Philox streams keyed by (seed, snr index, batch index), so the
per-point work can be split across workers in any order without changing the
outcome.  Points checkpoint individually under a directory keyed by the
config hash, which makes long sweeps resumable.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import air, lattices, vc as vcmod

SCHEMA_VERSION = 1

ERROR_RATE_FIELDS = ["snr_db", "symbols", "bit_errors", "symbol_errors",
                     "ber", "ber_stderr", "ser", "ser_stderr",
                     "low_confidence"]
MI_FIELDS = ["snr_db", "mi", "stderr", "ns", "d_shells", "backend",
             "capacity", "qam_mi"]
MERIT_FIELDS = ["spec", "M", "bits", "beta", "es", "es_stderr", "d_min",
                "gain_db", "asymptote_db", "exact"]


def stream(seed: int, snr_index: int, batch_index: int) -> np.random.Generator:
    """Counter-based generator for one (seed, point, batch) cell."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF,
                    ((snr_index & 0xFFFFFFFF) << 32) | (batch_index & 0xFFFFFFFF)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SweepConfig:
    """Everything that determines a sweep's data payload."""

    vc_spec: str
    snr_db: tuple = ()
    seed: int = 0
    max_symbols: int = 10 ** 7
    min_errors: int = 200
    batch: int = 4096
    ns: int = 10 ** 4
    d_shells: int | None = None
    d_policy: str = "lowest"
    backend: str = "auto"
    shell_enum_cap: int = air.SHELL_ENUM_CAP
    shell_budget: int = air.SHELL_BUDGET
    qam_bits: int | None = None
    samples: int = 10 ** 6
    nsm_samples: int = 10 ** 5
    workers: int = 1

    def __post_init__(self):
        snrs = tuple(float(s) for s in self.snr_db)
        object.__setattr__(self, "snr_db", snrs)
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError("snr grid must be strictly increasing")
        if self.min_errors < 100:
            raise ValueError("min_errors must be at least 100")
        if self.d_policy not in ("lowest", "per-snr"):
            raise ValueError("d_policy must be 'lowest' or 'per-snr'")
        if self.backend not in ("auto", "exact", "importance"):
            raise ValueError("unknown backend " + repr(self.backend))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = list(self.snr_db)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class SweepResult:
    """Per-SNR records plus reproducibility metadata."""

    kind: str
    config: SweepConfig
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def fields(self) -> list:
        return {"error-rate": ERROR_RATE_FIELDS, "mi": MI_FIELDS,
                "merits": MERIT_FIELDS}[self.kind]

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={SCHEMA_VERSION} kind={self.kind}"
                  f" config={self.config.config_hash()}"
                  f" seed={self.config.seed}"
                  f" version={self.meta.get('version', '')}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.fields)
        for rec in self.records:
            w.writerow([_csv_cell(rec.get(k)) for k in self.fields])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.json_payload(), indent=1,
                                         sort_keys=True) + "\n")

    def json_payload(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": self.kind,
            "config": self.config.as_dict(),
            "config_hash": self.config.config_hash(),
            "version": self.meta.get("version", ""),
            "meta": self.meta,
            "records": self.records,
        }


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return f"{v:.12g}"
    return v


def _version() -> str:
    from . import __version__
    return __version__


def _vc_meta(c: vcmod.VoronoiConstellation) -> dict:
    return {
        "vc": repr(c),
        "n": c.n,
        "M": int(c.M),
        "beta": c.beta,
        "d_min": c.d_min(),
        "version": _version(),
    }


def _ckpt_file(ckpt_dir, cfg: SweepConfig, kind: str, idx: int) -> Path:
    return Path(ckpt_dir) / f"{cfg.config_hash()}.{kind}.{idx:03d}.json"


def _ckpt_load(ckpt_dir, cfg, kind, idx):
    if ckpt_dir is None:
        return None
    p = _ckpt_file(ckpt_dir, cfg, kind, idx)
    if p.is_file():
        return json.loads(p.read_text())
    return None


def _ckpt_save(ckpt_dir, cfg, kind, idx, rec) -> None:
    if ckpt_dir is None:
        return
    d = Path(ckpt_dir)
    d.mkdir(parents=True, exist_ok=True)
    _ckpt_file(ckpt_dir, cfg, kind, idx).write_text(json.dumps(rec, sort_keys=True))


def _error_rate_point(c, ch, cfg: SweepConfig, idx: int) -> dict:
    has_bits = c.bits_per_coord is not None
    nbits = int(c.total_bits) if has_bits else 0
    symbols = 0
    bit_err = 0
    sym_err = 0
    b = 0
    while symbols < cfg.max_symbols:
        events = bit_err if has_bits else sym_err
        if events >= cfg.min_errors:
            break
        take = min(cfg.batch, cfg.max_symbols - symbols)
        rng = stream(cfg.seed, idx, b)
        u = c.random_messages(take, rng)
        y = ch.sample(c.encode(u), rng)
        uh = c.decode(y)
        bad = np.any(uh != u, axis=1)
        sym_err += int(bad.sum())
        if has_bits and bad.any():
            db = c.label_bits(u[bad]) ^ c.label_bits(uh[bad])
            bit_err += int(db.sum())
        symbols += take
        b += 1
    ser = sym_err / symbols
    rec = {
        "snr_db": ch.snr_db,
        "symbols": symbols,
        "symbol_errors": sym_err,
        "ser": ser,
        "ser_stderr": math.sqrt(ser * (1.0 - ser) / symbols),
        "bit_errors": bit_err if has_bits else None,
        "ber": None,
        "ber_stderr": None,
        "low_confidence": (bit_err if has_bits else sym_err) < cfg.min_errors,
    }
    if has_bits:
        ber = bit_err / (symbols * nbits)
        rec["ber"] = ber
        rec["ber_stderr"] = math.sqrt(ber * (1.0 - ber) / (symbols * nbits))
    return rec


def run_error_rate_sweep(cfg: SweepConfig, checkpoint_dir=None,
                         progress=None) -> SweepResult:
    """Uncoded BER/SER over the SNR grid with the configured stop rule.

    Stops each point at ``min_errors`` error events (bit events when the
    constellation carries bit labels, else symbol events) or ``max_symbols``,
    whichever comes first; short points are flagged low confidence.
    """
    c = vcmod.from_spec(cfg.vc_spec, rng=np.random.default_rng(cfg.seed))
    res = SweepResult("error-rate", cfg, meta=_vc_meta(c))
    res.meta["stop_rule"] = {"min_errors": cfg.min_errors,
                             "max_symbols": cfg.max_symbols}
    timing = []
    for i, snr in enumerate(cfg.snr_db):
        rec = _ckpt_load(checkpoint_dir, cfg, "er", i)
        resumed = rec is not None
        t0 = time.perf_counter()
        if rec is None:
            ch = air.channel_for_snr(c, snr)
            rec = _error_rate_point(c, ch, cfg, i)
            _ckpt_save(checkpoint_dir, cfg, "er", i, rec)
        timing.append({"snr_db": snr, "resumed": resumed,
                       "wall_s": time.perf_counter() - t0})
        res.records.append(rec)
        if progress is not None:
            progress(rec)
    res.meta["timing"] = timing
    return res


def run_mi_sweep(cfg: SweepConfig, checkpoint_dir=None,
                 progress=None) -> SweepResult:
    """Mutual information over the SNR grid, with capacity and QAM columns.

    The shell depth for the importance backend follows ``cfg.d_policy``:
    chosen once at the lowest SNR (the deepest requirement) and reused, or
    re-chosen at every point.  An explicit ``cfg.d_shells`` bypasses both.
    """
    c = vcmod.from_spec(cfg.vc_spec, rng=np.random.default_rng(cfg.seed))
    res = SweepResult("mi", cfg, meta=_vc_meta(c))
    qam_bits = cfg.qam_bits
    if qam_bits is None:
        qam_bits = 2 * math.ceil(c.beta / 2.0)
    res.meta["qam_bits"] = qam_bits
    need_depth = cfg.backend == "importance" or (
        cfg.backend == "auto" and c.M > air.DEFAULT_ENUM_POINTS)
    d_shared = cfg.d_shells
    if need_depth and d_shared is None and cfg.d_policy == "lowest":
        ch0 = air.channel_for_snr(c, cfg.snr_db[0])
        d_shared = air.choose_d(c, ch0, rng=stream(cfg.seed, 0, 1 << 20),
                                enum_cap=cfg.shell_enum_cap,
                                budget=cfg.shell_budget).d
        res.meta["d_policy"] = {"mode": "lowest", "d": d_shared,
                                "at_snr_db": cfg.snr_db[0]}
    timing = []
    for i, snr in enumerate(cfg.snr_db):
        rec = _ckpt_load(checkpoint_dir, cfg, "mi", i)
        resumed = rec is not None
        t0 = time.perf_counter()
        if rec is None:
            ch = air.channel_for_snr(c, snr)
            d = d_shared
            if need_depth and d is None:
                d = air.choose_d(c, ch, rng=stream(cfg.seed, i, 1 << 20),
                                 enum_cap=cfg.shell_enum_cap,
                                 budget=cfg.shell_budget).d
            est = air.mi_estimate(c, ch, cfg.ns, d_shells=d,
                                  rng=stream(cfg.seed, i, 0),
                                  backend=cfg.backend,
                                  enum_cap=cfg.shell_enum_cap,
                                  budget=cfg.shell_budget)
            rec = {
                "snr_db": snr,
                "mi": est.mi,
                "stderr": est.stderr,
                "ns": est.ns,
                "d_shells": est.d_shells,
                "backend": est.backend,
                "capacity": air.awgn_capacity(snr),
                "qam_mi": air.qam_mi(qam_bits, snr),
            }
            _ckpt_save(checkpoint_dir, cfg, "mi", i, rec)
        timing.append({"snr_db": snr, "resumed": resumed,
                       "wall_s": time.perf_counter() - t0})
        res.records.append(rec)
        if progress is not None:
            progress(rec)
    res.meta["timing"] = timing
    return res


def tabulate_merits(specs, samples: int = 10 ** 6, nsm_samples: int = 10 ** 5,
                    seed: int = 0, progress=None) -> SweepResult:
    """Merit rows (spectral efficiency, energy, power-efficiency gain) for a
    list of constellation spec strings, plus the shaping lattice's asymptotic
    gain column when ``nsm_samples`` > 0."""
    cfg = SweepConfig(vc_spec=";".join(specs), seed=seed, samples=samples,
                      nsm_samples=nsm_samples)
    res = SweepResult("merits", cfg, meta={"version": _version(),
                                           "samples": samples,
                                           "nsm_samples": nsm_samples})
    asym: dict = {}
    for i, spec in enumerate(specs):
        c = vcmod.from_spec(spec, rng=np.random.default_rng(seed))
        rep = vcmod.merit_report(c, samples=samples, rng=stream(seed, i, 0))
        a_db = None
        if nsm_samples > 0:
            key = c.shaping.name
            if key not in asym:
                est = lattices.nsm_estimate(c.shaping, nsm_samples,
                                            stream(seed, i, 1))
                asym[key] = est.gain_db
            a_db = asym[key]
        row = {
            "spec": rep.spec,
            "M": int(rep.M),
            "bits": math.log2(rep.M),
            "beta": rep.beta,
            "es": rep.es,
            "es_stderr": rep.es_stderr,
            "d_min": rep.d_min,
            "gain_db": rep.gain_db,
            "asymptote_db": a_db,
            "exact": rep.exact,
        }
        res.records.append(row)
        if progress is not None:
            progress(row)
    res.meta["asymptotes_db"] = asym
    return res
