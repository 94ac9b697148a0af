"""Static SVG charts of grid results (needs matplotlib; install the ``plot`` extra).

Output is deterministic: fixed SVG hash salt and no date metadata.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("SVG output needs matplotlib (pip install 'ehrlag[plot]')") from exc
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "ehrlag"
    matplotlib.rcParams["svg.fonttype"] = "none"
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def interval_chart(path, reports_by_gold: dict, order, z: float = 1.96) -> Path:
    """AUROC +- z sd per config, one row per config, one colour per gold."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 0.16 * len(order) + 1.2))
    y = np.arange(len(order))[::-1]
    for i, (label, reps) in enumerate(reports_by_gold.items()):
        a = np.array([reps[c.key].auroc for c in order])
        s = np.array([reps[c.key].sd for c in order])
        ax.errorbar(a, y + 0.2 * i, xerr=z * s, fmt="o", ms=2.5, lw=0.8, label=label)
    ax.axvline(0.5, color="grey", lw=0.6, ls="--")
    ax.set_yticks(y)
    ax.set_yticklabels([c.key for c in order], fontsize=5)
    ax.set_xlabel("AUROC")
    ax.legend(fontsize=6, loc="lower right")
    fig.tight_layout()
    path = _save(fig, Path(path))
    plt.close(fig)
    return path


def trajectory_chart(path, contents, config_key: str, z: float = 1.96, ncols: int = 7) -> Path:
    """Coefficient trajectories with bands for every pair under one config."""
    plt = _pyplot()
    n = len(contents.pairs)
    nrows = max(1, -(-n // ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(1.7 * ncols, 1.3 * nrows), squeeze=False)
    for ax in axes.flat[n:]:
        ax.axis("off")
    for ax, pair in zip(axes.flat, contents.pairs):
        p = contents.cells[(pair, config_key)].profile
        tau = np.arange(1, p.max_lag + 1)
        lo, hi = p.bands(z)
        ax.fill_between(tau, lo, hi, alpha=0.3, lw=0)
        ax.plot(tau, p.beta_hat, lw=0.8)
        ax.axhline(0.0, color="grey", lw=0.5)
        ax.set_title(f"{pair[0]} / {pair[1]}", fontsize=5)
        ax.tick_params(labelsize=4)
    fig.suptitle(config_key, fontsize=7)
    fig.tight_layout()
    path = _save(fig, Path(path))
    plt.close(fig)
    return path


def render_svgs(rdir: Path, contents, reports, lead: str, order) -> list[Path]:
    out = [interval_chart(rdir / "auroc_intervals.svg", reports, order)]
    out.append(trajectory_chart(rdir / "trajectories_best.svg", contents, order[0].key))
    return out
