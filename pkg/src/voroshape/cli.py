"""Command line front end binding the library into reproducible runs.

Every subcommand resolves its options from built-in defaults, then an
optional ``key = value`` config file, then explicit flags, and echoes the
resolved configuration (with its hash, the seed, and the package version)
into whatever it writes.  Sweep-style commands emit CSV + JSON and, by
default, a rendered figure next to them.

Exit codes: 0 success, 2 argument or config problems, 3 estimator
non-convergence, 1 anything else.  Failures print a one-line JSON error
record to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, air, figures, lattices, sim
from . import vc as vcmod

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_NOCONV = 3


class ConfigError(ValueError):
    pass


def _count(text: str) -> int:
    return int(float(text))


def _snr_grid(text: str) -> tuple:
    """Comma list "2,4,6" or range "2:8:2" (stop inclusive)."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(count))
    return tuple(float(p) for p in text.split(","))


def _vector(text: str) -> np.ndarray:
    return np.array([float(p) for p in text.split(",")])


def _ivector(text: str) -> np.ndarray:
    return np.array([int(p) for p in text.split(",")], dtype=np.int64)


def load_config(path) -> dict:
    """Flat key = value file; '#' comments; values parsed as JSON scalars
    when possible, else kept as strings."""
    conf = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            conf[key] = json.loads(val)
        except json.JSONDecodeError:
            conf[key] = val
    return conf


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _args_dict(args) -> dict:
    skip = {"cmd", "func", "config"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip or callable(v):
            continue
        if isinstance(v, np.ndarray):
            v = v.tolist()
        if isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _args_hash(args) -> str:
    blob = json.dumps(_args_dict(args), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _stamp(args, extra: dict | None = None) -> dict:
    meta = {"config": _args_dict(args), "config_hash": _args_hash(args),
            "seed": getattr(args, "seed", None), "version": __version__}
    if extra:
        meta.update(extra)
    return meta


def _print_stamp(args) -> None:
    print(f"# config={_args_hash(args)} seed={getattr(args, 'seed', None)}"
          f" version={__version__}")


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True,
                                     default=str) + "\n")


def _emit_sweep(res, args, figure_fn) -> None:
    if args.out:
        base = Path(args.out)
        base.parent.mkdir(parents=True, exist_ok=True)
        res.to_csv(base.with_suffix(".csv"))
        res.to_json(base.with_suffix(".json"))
        if not args.no_figure:
            figure_fn(base.with_suffix(".png"))
    sys.stdout.write(res.csv_text())


# -- subcommands -----------------------------------------------------------

def cmd_merits(args) -> int:
    specs = [s.strip() for s in args.specs.split(",") if s.strip()]
    if not specs:
        raise ConfigError("merits needs at least one spec in --specs")
    res = sim.tabulate_merits(specs, samples=args.samples,
                              nsm_samples=args.nsm_samples, seed=args.seed)
    _emit_sweep(res, args, lambda p: figures.merits_figure(res.records, p))
    return EXIT_OK


def cmd_encode(args) -> int:
    c = vcmod.from_spec(args.vc, rng=np.random.default_rng(args.seed))
    if args.u is not None:
        u = np.atleast_2d(args.u)
    else:
        u = c.random_messages(args.count, np.random.default_rng(args.seed))
    x = np.atleast_2d(c.encode(u))
    _print_stamp(args)
    for row_u, row_x in zip(u, x):
        print(",".join(str(int(v)) for v in row_u), "->",
              ",".join(_fmt(float(v)) for v in row_x))
    return EXIT_OK


def cmd_decode(args) -> int:
    c = vcmod.from_spec(args.vc, rng=np.random.default_rng(args.seed))
    y = np.atleast_2d(args.y)
    u = np.atleast_2d(c.decode(y))
    _print_stamp(args)
    for row_y, row_u in zip(y, u):
        print(",".join(_fmt(float(v)) for v in row_y), "->",
              ",".join(str(int(v)) for v in row_u))
    return EXIT_OK


def cmd_ber(args) -> int:
    cfg = sim.SweepConfig(vc_spec=args.vc, snr_db=args.snrs, seed=args.seed,
                          max_symbols=args.max_symbols,
                          min_errors=args.min_errors, batch=args.batch,
                          workers=args.threads)
    res = sim.run_error_rate_sweep(cfg, checkpoint_dir=args.checkpoint_dir)
    _emit_sweep(res, args,
                lambda p: figures.error_rate_figure(res.records, p,
                                                    title=args.vc))
    return EXIT_OK


def cmd_mi(args) -> int:
    cfg = sim.SweepConfig(vc_spec=args.vc, snr_db=args.snrs, seed=args.seed,
                          ns=args.ns, d_shells=args.d, d_policy=args.d_policy,
                          backend=args.backend, shell_budget=args.budget,
                          shell_enum_cap=args.enum_cap,
                          qam_bits=args.qam_bits, workers=args.threads)
    res = sim.run_mi_sweep(cfg, checkpoint_dir=args.checkpoint_dir)
    beta = res.meta.get("beta")
    _emit_sweep(res, args,
                lambda p: figures.mi_figure(res.records, p, beta=beta,
                                            title=args.vc))
    return EXIT_OK


def cmd_llr_export(args) -> int:
    if not args.out:
        raise ConfigError("llr-export needs --out")
    c = vcmod.from_spec(args.vc, rng=np.random.default_rng(args.seed))
    ch = air.channel_for_snr(c, args.snr)
    rng = sim.stream(args.seed, 0, 0)
    u = c.random_messages(args.symbols, rng)
    y = ch.sample(c.encode(u), rng)
    if args.estimator == "exact":
        llr = air.llr_exact(c, ch, y)
    else:
        llr = air.llr_approx(c, ch, y, air.LlrParams(r2=args.r2, q=args.q))
    nbits = llr.shape[1]
    sym = np.repeat(np.arange(args.symbols, dtype=np.uint64), nbits)
    bit = np.tile(np.arange(nbits, dtype=np.uint64), args.symbols)
    flat = llr.reshape(-1)
    base = Path(args.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    ext = ".llr.bin" if args.format == "bin" else ".llr.csv"
    data_path = base.with_suffix(ext)
    air.write_llr_records(data_path, sym, bit, flat, fmt=args.format)
    _write_json(base.with_suffix(".json"),
                _stamp(args, {"records": int(flat.size),
                              "bits_per_symbol": int(nbits),
                              "layout": "little-endian u64 symbol, u64 bit, "
                                        "f64 llr (24 bytes per record)",
                              "data_file": data_path.name}))
    if not args.no_figure:
        figures.llr_figure(np.rec.fromarrays([sym, bit, flat],
                                             dtype=air.LLR_RECORD_DTYPE),
                           base.with_suffix(".png"), title=args.vc)
    print(f"wrote {flat.size} records to {data_path}")
    return EXIT_OK


def cmd_nsm(args) -> int:
    lat = lattices.build_named(args.lattice)
    est = lattices.nsm_estimate(lat, args.samples, args.seed,
                                workers=max(args.threads, 1))
    _print_stamp(args)
    print(f"lattice={lat.name} n={lat.n} samples={est.samples}")
    print(f"G={_fmt(est.g)} stderr={_fmt(est.g_stderr)}"
          f" gain_db={_fmt(est.gain_db)}")
    if args.out:
        base = Path(args.out)
        base.parent.mkdir(parents=True, exist_ok=True)
        _write_json(base.with_suffix(".json"),
                    _stamp(args, {"g": est.g, "g_stderr": est.g_stderr,
                                  "gain_db": est.gain_db,
                                  "samples": est.samples}))
    return EXIT_OK


def cmd_choose_d(args) -> int:
    c = vcmod.from_spec(args.vc, rng=np.random.default_rng(args.seed))
    ch = air.channel_for_snr(c, args.snr)
    res = air.choose_d(c, ch, probes=args.probes,
                       realizations=args.realizations, rel_tol=args.tol,
                       d_cap=args.cap, rng=np.random.default_rng(args.seed),
                       probe_style=args.probe_style, stat=args.stat,
                       enum_cap=args.enum_cap, budget=args.budget)
    _print_stamp(args)
    print(f"D={res.d} (stat={res.stat}, probes={res.probes}, "
          f"realizations={res.realizations}, tol={_fmt(res.rel_tol)})")
    if args.out:
        base = Path(args.out)
        base.parent.mkdir(parents=True, exist_ok=True)
        with open(base.with_suffix(".csv"), "w") as fh:
            fh.write(f"# config={_args_hash(args)} seed={args.seed}"
                     f" version={__version__}\n")
            fh.write("d,ratio\n")
            for i, r in enumerate(res.ratios, start=1):
                fh.write(f"{i},{_fmt(float(r))}\n")
        _write_json(base.with_suffix(".json"),
                    _stamp(args, {"d": res.d,
                                  "ratios": [float(r) for r in res.ratios]}))
        if not args.no_figure:
            figures.convergence_figure(res.ratios, res.d, res.rel_tol,
                                       base.with_suffix(".png"),
                                       title=f"{args.vc} @ {args.snr} dB")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _common(sub) -> None:
    sub.add_argument("--config", default=None,
                     help="flat key = value config file; flags override it")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", default=None,
                     help="output base path (suffixes added per artifact)")
    sub.add_argument("--no-figure", action="store_true",
                     help="skip the rendered figure next to the CSV")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker plan hint, recorded in metadata")


def build_parser() -> tuple:
    parser = argparse.ArgumentParser(
        prog="voroshape",
        description="Voronoi constellation toolbox: mappings, merit tables, "
                    "error-rate and mutual-information experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="cmd", required=True)
    table = {}

    p = subs.add_parser("merits", help="merit table for a list of specs")
    p.add_argument("--specs", required=True,
                   help="comma-separated constellation specs")
    p.add_argument("--samples", type=_count, default=10 ** 6)
    p.add_argument("--nsm-samples", type=_count, default=10 ** 5)
    p.set_defaults(func=cmd_merits)
    table["merits"] = p

    p = subs.add_parser("encode", help="map integer messages to points")
    p.add_argument("--vc", required=True)
    p.add_argument("--u", type=_ivector, default=None,
                   help="comma-separated message digits")
    p.add_argument("--count", type=_count, default=1,
                   help="random messages when --u is absent")
    p.set_defaults(func=cmd_encode)
    table["encode"] = p

    p = subs.add_parser("decode", help="map received vectors to messages")
    p.add_argument("--vc", required=True)
    p.add_argument("--y", type=_vector, required=True,
                   help="comma-separated received vector")
    p.set_defaults(func=cmd_decode)
    table["decode"] = p

    p = subs.add_parser("ber", help="uncoded error-rate sweep")
    p.add_argument("--vc", required=True)
    p.add_argument("--snrs", type=_snr_grid, required=True,
                   help="comma list or start:stop:step (dB)")
    p.add_argument("--max-symbols", type=_count, default=10 ** 7)
    p.add_argument("--min-errors", type=_count, default=200)
    p.add_argument("--batch", type=_count, default=4096)
    p.add_argument("--checkpoint-dir", default=None)
    p.set_defaults(func=cmd_ber)
    table["ber"] = p

    p = subs.add_parser("mi", help="mutual-information sweep")
    p.add_argument("--vc", required=True)
    p.add_argument("--snrs", type=_snr_grid, required=True)
    p.add_argument("--ns", type=_count, default=10 ** 4)
    p.add_argument("--d", type=int, default=None,
                   help="fixed shell count; default picks one")
    p.add_argument("--d-policy", choices=("lowest", "per-snr"),
                   default="lowest")
    p.add_argument("--backend", choices=("auto", "exact", "importance"),
                   default="auto")
    p.add_argument("--budget", type=_count, default=air.SHELL_BUDGET,
                   help="samples per oversized shell")
    p.add_argument("--enum-cap", type=_count, default=air.SHELL_ENUM_CAP,
                   help="largest shell enumerated exactly")
    p.add_argument("--qam-bits", type=int, default=None,
                   help="bits per dimension pair of the QAM reference")
    p.add_argument("--checkpoint-dir", default=None)
    p.set_defaults(func=cmd_mi)
    table["mi"] = p

    p = subs.add_parser("llr-export",
                        help="bit LLR records for an external decoder")
    p.add_argument("--vc", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--symbols", type=_count, default=1000)
    p.add_argument("--estimator", choices=("exact", "approx"),
                   default="approx")
    p.add_argument("--r2", type=int, default=20,
                   help="ball squared radius for the approx estimator")
    p.add_argument("--q", type=float, default=50.0,
                   help="distance substituted for an empty bit class")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=cmd_llr_export)
    table["llr-export"] = p

    p = subs.add_parser("nsm", help="normalized second moment of a lattice")
    p.add_argument("--lattice", required=True)
    p.add_argument("--samples", type=_count, default=10 ** 6)
    p.set_defaults(func=cmd_nsm)
    table["nsm"] = p

    p = subs.add_parser("choose-d", help="shell count for density estimates")
    p.add_argument("--vc", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--probes", type=int, default=10)
    p.add_argument("--realizations", type=int, default=5)
    p.add_argument("--tol", type=float, default=5e-3)
    p.add_argument("--cap", type=int, default=40)
    p.add_argument("--probe-style", choices=("region", "channel"),
                   default="region")
    p.add_argument("--stat", choices=("mean", "max"), default="mean")
    p.add_argument("--budget", type=_count, default=air.SHELL_BUDGET)
    p.add_argument("--enum-cap", type=_count, default=air.SHELL_ENUM_CAP)
    p.set_defaults(func=cmd_choose_d)
    table["choose-d"] = p

    for sub in table.values():
        _common(sub)
    return parser, table


def _apply_config(argv, parser, table) -> None:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config is None:
        return
    conf = load_config(known.config)
    cmd = next((tok for tok in argv if tok in table), None)
    if cmd is None:
        return
    sub = table[cmd]
    valid = {a.dest for a in sub._actions}
    bad = set(conf) - valid
    if bad:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(bad))}")
    typed = {}
    for act in sub._actions:
        if act.dest in conf:
            val = conf[act.dest]
            if act.type is not None and isinstance(val, str):
                val = act.type(val)
            elif act.type is not None and not isinstance(val, bool) \
                    and not isinstance(val, (list, tuple)):
                val = act.type(str(val))
            typed[act.dest] = val
            act.required = False
    sub.set_defaults(**typed)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, table = build_parser()
    try:
        _apply_config(argv, parser, table)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except air.ConvergenceError as e:
        _error_record(e, EXIT_NOCONV)
        return EXIT_NOCONV
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as e:
        _error_record(e, EXIT_USAGE)
        return EXIT_USAGE
    except Exception as e:
        _error_record(e, EXIT_INTERNAL)
        return EXIT_INTERNAL


def _error_record(exc, code) -> None:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit": code}
    print(json.dumps(rec), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
