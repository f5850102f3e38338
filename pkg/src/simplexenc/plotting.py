"""Figures written next to the CSV reports."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = {2: "tab:red", 3: "tab:green", 4: "tab:blue", "simplex": "tab:red", "grid": "tab:green"}


def _finish(fig, ax, path):
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_utilization(reports, path):
    """Estimated utilization per level with the dashed analytic bound per dimension."""
    by_n = defaultdict(list)
    for r in reports:
        by_n[r.n].append(r)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for n, rows in sorted(by_n.items()):
        rows.sort(key=lambda r: r.level)
        color = COLORS.get(n)
        ax.plot([r.level for r in rows], [r.estimate_pct for r in rows], "o-", color=color, label=f"n = {n}")
        ax.axhline(rows[0].bound_pct, color=color or "k", ls="--", lw=1)
    ax.set_xscale("log", base=2)
    ax.set_ylim(0, 100)
    ax.set_xlabel("Level")
    ax.set_ylabel("Utilized percentage")
    return _finish(fig, ax, path)


def plot_volume_ratio(dims, ratios_pct, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(dims, ratios_pct, "o-", color="tab:red", label="L = inf")
    ax.fill_between(dims, ratios_pct, 100.0, color="tab:red", alpha=0.2)
    ax.set_ylim(0, 100)
    ax.set_xlabel("Dimension")
    ax.set_ylabel("Utilized percentage")
    return _finish(fig, ax, path)


def plot_kernel(reports, path):
    """Wall time and vertices per sample against dimension, one line per backend."""
    by_backend = defaultdict(list)
    for r in reports:
        by_backend[r.backend].append(r)
    fig, (ax_t, ax_v) = plt.subplots(1, 2, figsize=(9, 3.5))
    for backend, rows in sorted(by_backend.items()):
        rows.sort(key=lambda r: r.n)
        dims = [r.n for r in rows]
        ax_t.plot(dims, [r.seconds for r in rows], "o-", color=COLORS.get(backend), label=backend)
        ax_v.plot(dims, [r.vertices_per_sample for r in rows], "o-", color=COLORS.get(backend), label=backend)
    ax_t.set_xlabel("Dimension")
    ax_t.set_ylabel("Kernel run-time (s)")
    ax_v.set_xlabel("Dimension")
    ax_v.set_ylabel("Vertices per sample")
    ax_t.grid(True, alpha=0.3)
    ax_t.legend(frameon=False)
    return _finish(fig, ax_v, path)


def plot_curve(curves: dict, path, ylabel="PSNR (dB)"):
    """``curves`` maps a label to ``(steps, values)``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (steps, values) in curves.items():
        ax.plot(steps, values, "-", color=COLORS.get(label), label=label)
    ax.set_xlabel("Step")
    ax.set_ylabel(ylabel)
    return _finish(fig, ax, path)
