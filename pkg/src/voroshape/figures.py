"""File-based matplotlib renderings of sweep and estimator outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def _shaping_label(spec: str) -> str:
    tail = spec.split("/", 1)[-1]
    return tail.lstrip("0123456789")


def merits_figure(records, path, title="") -> None:
    """Power-efficiency gain against spectral efficiency, one curve per
    shaping lattice, with dashed asymptote lines where present."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    groups: dict = {}
    for rec in records:
        groups.setdefault(_shaping_label(rec["spec"]), []).append(rec)
    for name, rows in sorted(groups.items()):
        rows = sorted(rows, key=lambda r: r["beta"])
        ax.plot([r["beta"] for r in rows], [r["gain_db"] for r in rows],
                marker="o", ms=3.5, label=name)
        a = rows[-1].get("asymptote_db")
        if a is not None:
            ax.axhline(a, ls="--", lw=0.8, color="0.4")
    ax.set_xlabel("spectral efficiency (bits per dimension pair)")
    ax.set_ylabel("gain over cubic baseline (dB)")
    ax.legend(fontsize=8)
    ax.grid(True, lw=0.3)
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)


def error_rate_figure(records, path, title="") -> None:
    """BER and SER curves on a log axis."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    snr = [r["snr_db"] for r in records]
    ser = [r["ser"] for r in records]
    ax.plot(snr, ser, marker="s", ms=4, label="SER")
    if any(r.get("ber") is not None for r in records):
        ber = [r["ber"] for r in records]
        ax.plot(snr, ber, marker="o", ms=4, label="BER")
    low = [r for r in records if r.get("low_confidence")]
    if low:
        ax.plot([r["snr_db"] for r in low], [r["ser"] for r in low],
                ls="none", marker="x", ms=8, color="r",
                label="low confidence")
    if any(v > 0 for v in ser):
        ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("error rate")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", lw=0.3)
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)


def mi_figure(records, path, beta=None, title="") -> None:
    """Estimated mutual information with capacity and square-QAM references."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    snr = [r["snr_db"] for r in records]
    mi = [r["mi"] for r in records]
    err = [3.0 * r["stderr"] for r in records]
    ax.errorbar(snr, mi, yerr=err, marker="o", ms=4, capsize=2,
                label="constellation")
    if all("capacity" in r for r in records):
        ax.plot(snr, [r["capacity"] for r in records], ls="--", color="0.3",
                label="capacity")
    if all(r.get("qam_mi") is not None for r in records):
        ax.plot(snr, [r["qam_mi"] for r in records], ls=":", color="0.5",
                label="QAM")
    if beta is not None:
        ax.axhline(beta, ls="-.", lw=0.8, color="0.6")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("MI (bits per symbol per dimension pair)")
    ax.legend(fontsize=8)
    ax.grid(True, lw=0.3)
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)


def convergence_figure(ratios, d, rel_tol, path, title="") -> None:
    """Next-shell relative increment against shell count, with the decision
    threshold and the chosen depth marked."""
    ratios = np.asarray(ratios, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    dd = np.arange(1, ratios.size + 1)
    finite = np.isfinite(ratios) & (ratios > 0)
    ax.semilogy(dd[finite], ratios[finite], marker="o", ms=3.5)
    ax.axhline(rel_tol, ls="--", color="r", lw=0.8)
    ax.axvline(d, ls=":", color="0.4", lw=0.8)
    ax.set_xlabel("shell count")
    ax.set_ylabel("relative increment of the next shell")
    ax.grid(True, which="both", lw=0.3)
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)


def llr_figure(records, path, title="") -> None:
    """Histogram of exported LLRs."""
    arr = np.asarray(records)
    if arr.dtype.names:
        llr = arr["llr"].astype(np.float64)
    else:
        llr = np.asarray([r[2] for r in records], dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    lim = np.percentile(np.abs(llr), 99.5) if llr.size else 1.0
    lim = max(float(lim), 1e-3)
    ax.hist(np.clip(llr, -lim, lim), bins=81, color="0.5")
    ax.set_xlabel("LLR")
    ax.set_ylabel("count")
    ax.grid(True, lw=0.3)
    if title:
        ax.set_title(title, fontsize=10)
    _save(fig, path)
