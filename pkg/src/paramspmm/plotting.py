"""Figures for benchmark CSVs. Everything renders off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _by_dim(records):
    out = {}
    for r in records:
        out.setdefault(int(r["dim"]), []).append(r)
    return out


def _table(records):
    """matrices x configs throughput table for one dim (NaN where missing)."""
    mats = list(dict.fromkeys(r["matrix"] for r in records))
    cfgs = list(dict.fromkeys(r["config_id"] for r in records))  # bench writes lattice order
    mi = {m: i for i, m in enumerate(mats)}
    ci = {c: i for i, c in enumerate(cfgs)}
    T = np.full((len(mats), len(cfgs)), np.nan)
    for r in records:
        T[mi[r["matrix"]], ci[r["config_id"]]] = float(r["gflops"])
    return mats, cfgs, T


def plot_heatmap(records, path, title=None):
    mats, cfgs, T = _table(records)
    norm = T / np.nanmax(T, axis=1, keepdims=True)
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(cfgs)), max(3, 0.25 * len(mats) + 1.5)))
    im = ax.imshow(norm, aspect="auto", cmap="viridis", vmin=0, vmax=1, interpolation="nearest")
    ax.set_xticks(range(len(cfgs)), cfgs, rotation=90, fontsize=7)
    ax.set_yticks(range(len(mats)), mats, fontsize=7)
    ax.set_xlabel("configuration")
    fig.colorbar(im, ax=ax, label="throughput / best")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_best_counts(records, path, title=None):
    mats, cfgs, T = _table(records)
    best = np.nanargmax(np.nan_to_num(T, nan=-np.inf), axis=1)
    counts = np.bincount(best, minlength=len(cfgs))
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(cfgs)), 3.5))
    ax.bar(range(len(cfgs)), counts, color="tab:blue")
    ax.set_xticks(range(len(cfgs)), cfgs, rotation=90, fontsize=7)
    ax.set_ylabel("matrices where best")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_best_by_dim(records, path):
    """Best GFLOPS per matrix across dims."""
    per = {}
    for r in records:
        key = (r["matrix"], int(r["dim"]))
        per[key] = max(per.get(key, 0.0), float(r["gflops"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for m in sorted({k[0] for k in per}):
        dims = sorted(d for (mm, d) in per if mm == m)
        ax.plot(dims, [per[(m, d)] for d in dims], marker="o", ms=3, lw=1, label=m)
    ax.set_xlabel("dim")
    ax.set_ylabel("best GFLOPS")
    if len({k[0] for k in per}) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(records, out_dir) -> list:
    """Write all figures for ``records`` (bench CSV rows) into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for dim, recs in sorted(_by_dim(records).items()):
        p = out_dir / f"heatmap_dim{dim}.png"
        plot_heatmap(recs, p, f"dim={dim}")
        written.append(p)
        p = out_dir / f"best_configs_dim{dim}.png"
        plot_best_counts(recs, p, f"dim={dim}")
        written.append(p)
    p = out_dir / "best_gflops_by_dim.png"
    plot_best_by_dim(records, p)
    written.append(p)
    return written
