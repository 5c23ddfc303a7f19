"""Figures written next to the CSV/JSON artifacts (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes independent of the matplotlib build date
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def regret_curves(cumulative: np.ndarray, path: Path, bound: float | None = None, title: str = "") -> Path:
    """Mean cumulative regret with a 10-90% band over episodes."""
    t = np.arange(1, cumulative.shape[1] + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    lo, hi = np.percentile(cumulative, [10, 90], axis=0)
    ax.fill_between(t, lo, hi, alpha=0.25, label="10-90% of episodes")
    ax.plot(t, cumulative.mean(axis=0), label="mean")
    if bound is not None:
        ax.axhline(bound, color="k", ls="--", lw=1, label="gap-free bound at n")
    ax.set_xlabel("round t")
    ax.set_ylabel("cumulative expected regret")
    ax.set_title(title)
    ax.legend(loc="upper left")
    return _save(fig, path)


def boundary_curves(rows: list[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant in dict.fromkeys(r["variant"] for r in rows):
        sel = [r for r in rows if r["variant"] == variant]
        n = np.array([r["N"] for r in sel], dtype=float)
        y = np.array([r["threshold"] for r in sel])
        ax.plot(n, y / np.sqrt(n), marker=".", label=variant)
    ax.set_xscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("threshold / sqrt(N)")
    ax.legend()
    return _save(fig, path)


def bound_curves(rows: list[dict], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant in dict.fromkeys(r["variant"] for r in rows):
        sel = [r for r in rows if r["variant"] == variant]
        ax.plot([r["n"] for r in sel], [r["gapfree"] for r in sel], marker=".", label=variant)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("gap-free regret bound")
    ax.legend()
    return _save(fig, path)


def crossing_summary(reports: list[dict], path: Path) -> Path:
    """Measured frequency against the claimed bound, one marker per report."""
    fig, ax = plt.subplots(figsize=(6, 4))
    bound = np.array([r["bound"] for r in reports])
    freq = np.array([r["frequency"] for r in reports])
    err = np.array([[r["frequency"] - r["ci95"][0], r["ci95"][1] - r["frequency"]] for r in reports]).T
    ax.errorbar(bound, freq, yerr=err, fmt="o", ms=3, alpha=0.7)
    top = max(bound.max(), freq.max()) * 1.1
    ax.plot([0, top], [0, top], "k--", lw=1, label="frequency = bound")
    ax.set_xlabel("claimed bound")
    ax.set_ylabel("measured frequency (95% CI)")
    ax.legend()
    return _save(fig, path)
