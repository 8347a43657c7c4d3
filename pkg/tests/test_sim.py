import json
import math

import numpy as np
import pytest

from voroshape import air, sim, vc as vcmod


def _q(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def two_pam_ber(snr_db):
    """Closed-form error rate for the 2-point line folded modulo the
    shaping lattice: both decision boundaries wrap."""
    sigma = math.sqrt(0.25 / 10.0 ** (snr_db / 10.0))
    total = 0.0
    for k in range(40):
        total += _q((0.5 + 2.0 * k) / sigma) - _q((1.5 + 2.0 * k) / sigma)
    return 2.0 * total


def test_config_validation():
    with pytest.raises(ValueError):
        sim.SweepConfig("Z4/4D4", snr_db=(10.0, 8.0))
    with pytest.raises(ValueError):
        sim.SweepConfig("Z4/4D4", snr_db=(8.0, 8.0))
    with pytest.raises(ValueError):
        sim.SweepConfig("Z4/4D4", min_errors=99)
    with pytest.raises(ValueError):
        sim.SweepConfig("Z4/4D4", d_policy="maximal")
    with pytest.raises(ValueError):
        sim.SweepConfig("Z4/4D4", backend="montecarlo")


def test_config_hash_sensitivity():
    a = sim.SweepConfig("Z4/4D4", snr_db=(10.0,), seed=1)
    b = sim.SweepConfig("Z4/4D4", snr_db=(10.0,), seed=2)
    c = sim.SweepConfig("Z4/4D4", snr_db=(10.0, 12.0), seed=1)
    hashes = {a.config_hash(), b.config_hash(), c.config_hash()}
    assert len(hashes) == 3
    assert a.config_hash() == sim.SweepConfig("Z4/4D4", snr_db=(10.0,),
                                              seed=1).config_hash()


def test_stream_determinism_and_separation():
    a = sim.stream(7, 0, 0).random(5)
    b = sim.stream(7, 0, 0).random(5)
    assert (a == b).all()
    c = sim.stream(7, 0, 1).random(5)
    d = sim.stream(7, 1, 0).random(5)
    e = sim.stream(8, 0, 0).random(5)
    assert not (a == c).all()
    assert not (a == d).all()
    assert not (a == e).all()


def test_error_rate_zero_noise_limit():
    cfg = sim.SweepConfig("Z4/4D4", snr_db=(60.0,), max_symbols=20000,
                          min_errors=100, batch=5000)
    res = sim.run_error_rate_sweep(cfg)
    rec = res.records[0]
    assert rec["symbol_errors"] == 0
    assert rec["bit_errors"] == 0
    assert rec["ser"] == 0.0
    assert rec["ber"] == 0.0
    assert rec["low_confidence"] is True
    assert rec["symbols"] == 20000


def test_error_rate_determinism_and_counting():
    cfg = sim.SweepConfig("Z4/4D4", snr_db=(14.0, 16.0), max_symbols=60000,
                          min_errors=150, batch=8192, seed=3)
    r1 = sim.run_error_rate_sweep(cfg)
    r2 = sim.run_error_rate_sweep(cfg)
    assert r1.records == r2.records
    assert r1.csv_text() == r2.csv_text()
    c = vcmod.from_spec("Z4/4D4")
    for rec in r1.records:
        assert rec["symbols"] <= cfg.max_symbols
        assert 0.0 <= rec["ber"] <= rec["ser"] <= 1.0
        assert rec["bit_errors"] <= rec["symbol_errors"] * c.total_bits
        assert rec["bit_errors"] >= rec["symbol_errors"]
        want_flag = rec["bit_errors"] < cfg.min_errors
        assert rec["low_confidence"] == want_flag


def test_error_rate_checkpoint_resume(tmp_path):
    cfg = sim.SweepConfig("Z4/4D4", snr_db=(14.0, 16.0), max_symbols=30000,
                          min_errors=100, batch=8192, seed=3)
    r1 = sim.run_error_rate_sweep(cfg, checkpoint_dir=tmp_path)
    assert [t["resumed"] for t in r1.meta["timing"]] == [False, False]
    files = sorted(p.name for p in tmp_path.iterdir())
    assert len(files) == 2
    assert all(cfg.config_hash() in name for name in files)
    r2 = sim.run_error_rate_sweep(cfg, checkpoint_dir=tmp_path)
    assert [t["resumed"] for t in r2.meta["timing"]] == [True, True]
    assert r1.records == r2.records
    # a different seed must not collide with the cached points
    other = sim.SweepConfig("Z4/4D4", snr_db=(14.0, 16.0), max_symbols=30000,
                            min_errors=100, batch=8192, seed=4)
    r3 = sim.run_error_rate_sweep(other, checkpoint_dir=tmp_path)
    assert r3.records != r1.records


def test_two_pam_matches_wrapped_tail():
    cfg = sim.SweepConfig("Z1/2Z1", snr_db=(4.0,), max_symbols=400000,
                          min_errors=200, batch=50000, seed=11)
    rec = sim.run_error_rate_sweep(cfg).records[0]
    want = two_pam_ber(4.0)
    z = (rec["ber"] - want) / rec["ber_stderr"]
    assert abs(z) < 4.0


def test_mi_sweep_backends_agree():
    base = dict(vc_spec="Z4/16D4", snr_db=(18.0,), ns=2000, seed=5)
    ex = sim.run_mi_sweep(sim.SweepConfig(backend="exact", **base))
    im = sim.run_mi_sweep(sim.SweepConfig(backend="importance", d_shells=9,
                                          **base))
    a, b = ex.records[0], im.records[0]
    assert a["backend"] == "exact"
    assert b["backend"] == "importance"
    assert b["d_shells"] == 9
    sig = math.hypot(a["stderr"], b["stderr"])
    assert abs(a["mi"] - b["mi"]) < 4.0 * sig
    assert a["capacity"] == air.awgn_capacity(18.0)
    assert a["qam_mi"] == air.qam_mi(10, 18.0)
    assert ex.meta["qam_bits"] == 10


def test_mi_sweep_lowest_depth_policy():
    cfg = sim.SweepConfig("Z4/16D4", snr_db=(16.0, 22.0), ns=1000,
                          backend="importance", seed=5)
    res = sim.run_mi_sweep(cfg)
    assert res.meta["d_policy"]["mode"] == "lowest"
    d = res.meta["d_policy"]["d"]
    assert all(rec["d_shells"] == d for rec in res.records)
    assert res.records[0]["mi"] < res.records[1]["mi"]


def test_mi_sweep_checkpoint(tmp_path):
    cfg = sim.SweepConfig("Z4/16D4", snr_db=(20.0,), ns=1000,
                          backend="exact", seed=5)
    r1 = sim.run_mi_sweep(cfg, checkpoint_dir=tmp_path)
    r2 = sim.run_mi_sweep(cfg, checkpoint_dir=tmp_path)
    assert r2.meta["timing"][0]["resumed"] is True
    assert r1.records == r2.records


def test_tabulate_merits_identities():
    specs = ["Z4/2D4", "Z4/4D4", "Z4/4D4R", "Z4/8D4"]
    res = sim.tabulate_merits(specs, samples=20000, nsm_samples=4000, seed=9)
    rows = {r["spec"]: r for r in res.records}
    assert rows["Z4/2D4"]["M"] == 2 * 2 ** 4
    assert rows["Z4/4D4"]["M"] == 2 * 4 ** 4
    assert rows["Z4/8D4"]["M"] == 2 * 8 ** 4
    assert rows["Z4/4D4R"]["M"] == 2 * 4 ** 4 * 4
    assert rows["Z4/4D4R"]["beta"] == rows["Z4/4D4"]["beta"] + 1.0
    for spec in specs:
        row = rows[spec]
        assert row["beta"] == 2.0 * math.log2(row["M"]) / 4.0
        assert row["exact"] is True
        assert row["es"] > 0
        assert row["d_min"] == 1.0
    # one shaping family, one asymptote
    asym = {row["asymptote_db"] for row in res.records}
    assert len(asym) == 1


def test_csv_and_json_formats():
    cfg = sim.SweepConfig("Z4/4D4", snr_db=(60.0,), max_symbols=5000,
                          min_errors=100, batch=5000, seed=2)
    res = sim.run_error_rate_sweep(cfg)
    text = res.csv_text()
    lines = text.strip().split("\n")
    assert lines[0].startswith("# schema=1 kind=error-rate config=")
    assert f"config={cfg.config_hash()}" in lines[0]
    assert f"seed={cfg.seed}" in lines[0]
    assert lines[1] == ",".join(sim.ERROR_RATE_FIELDS)
    cells = lines[2].split(",")
    assert cells[0] == "60"
    assert cells[-1] == "1"  # low_confidence rendered as int
    payload = res.json_payload()
    assert payload["schema"] == 1
    assert payload["kind"] == "error-rate"
    assert payload["config"]["vc_spec"] == "Z4/4D4"
    assert payload["config_hash"] == cfg.config_hash()
    assert payload["records"] == res.records
    json.dumps(payload)  # fully serializable


def test_csv_none_rendered_empty():
    assert sim._csv_cell(None) == ""
    assert sim._csv_cell(True) == 1
    assert sim._csv_cell(0.1) == "0.1"
    assert sim._csv_cell(1.0 / 3.0) == "0.333333333333"
