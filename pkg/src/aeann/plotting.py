"""Figures written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def figure_path(out) -> Path:
    return Path(out).with_suffix(".png")


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_lsh_curve(rows, path) -> Path:
    """Analytic vs Monte-Carlo collision probability, one line per width."""
    fig, ax = plt.subplots(figsize=(6, 4))
    widths = sorted({r["W"] for r in rows})
    for W in widths:
        sel = [r for r in rows if r["W"] == W]
        s = np.array([r["s"] for r in sel])
        ax.plot(s, [r["p_analytic"] for r in sel], "-", label=f"analytic W={W:g}")
        mc = [r["p_montecarlo"] for r in sel]
        if not all(np.isnan(mc)):
            ax.plot(s, mc, "o", ms=3, label=f"Monte Carlo W={W:g}")
    ax.set_xlabel("l2 distance s")
    ax.set_ylabel("collision probability")
    ax.set_ylim(0, 1.02)
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)


def plot_center_scores(scores, path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(scores, dtype=float), bins=min(30, max(5, len(scores) // 3)), color="0.4")
    ax.axvline(1.0, color="C3", lw=1, ls="--", label="C = 1")
    ax.set_xlabel("noncontraction ratio C")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)


def plot_eval(exact, returned, c_radius: float, path) -> Path:
    """Returned distance against exact NN distance per query; misses drawn at zero height."""
    exact = np.asarray(exact, dtype=float)
    returned = np.asarray(returned, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    hit = ~np.isnan(returned)
    ax.scatter(exact[hit], returned[hit], s=8, label="answered")
    if (~hit).any():
        ax.scatter(exact[~hit], np.zeros((~hit).sum()), s=8, marker="x", color="C3", label="no answer")
    hi = max(1e-12, float(np.nanmax(np.concatenate([exact, returned[hit]]))) if exact.size else 1.0)
    ax.plot([0, hi], [0, hi], color="0.6", lw=0.8)
    ax.axhline(c_radius, color="C3", lw=0.8, ls="--")
    ax.set_xlabel("exact NN distance")
    ax.set_ylabel("returned distance")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)
