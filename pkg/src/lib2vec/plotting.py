"""Figures written next to the CSV outputs of ``eval`` and ``export``."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ._io import atomic_write_bytes  # noqa: E402

# fixed metadata keeps PNG bytes stable across runs
_META = {"Software": None}


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())
    return Path(path)


def score_bars(rows: Sequence[tuple], path, title: str = "Regularity tests") -> Path:
    """Grouped bars of model vs random accuracy; ``rows`` are (family, metric, model, random)."""
    labels = [f"{fam}\n{metric}" for fam, metric, _, _ in rows]
    model = np.array([r[2] for r in rows], dtype=float)
    rand = np.array([r[3] for r in rows], dtype=float)
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.7 * len(rows) + 1.5), 3.6))
    ax.bar(x - 0.2, model, 0.4, label="embeddings")
    ax.bar(x + 0.2, np.nan_to_num(rand), 0.4, label="random", color="0.7")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=7, rotation=60, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def scatter_2d(points: np.ndarray, labels: Sequence[str], groups: Sequence[str], path,
               title: str = "") -> Path:
    """2-D scatter colored by group, each point annotated with its label."""
    points = np.asarray(points, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 5))
    names = sorted(set(groups))
    cmap = plt.get_cmap("tab20", max(len(names), 1))
    for k, g in enumerate(names):
        sel = [i for i, gg in enumerate(groups) if gg == g]
        ax.scatter(points[sel, 0], points[sel, 1], s=18, color=cmap(k), label=g)
    if len(labels) <= 60:
        for (x, y), lab in zip(points, labels):
            ax.annotate(lab, (x, y), fontsize=6, xytext=(2, 2), textcoords="offset points")
    if len(names) <= 20:
        ax.legend(fontsize=6, ncol=2)
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def vectors_scatter(vectors: Mapping[str, np.ndarray], groups: Mapping[str, str], path,
                    title: str = "") -> Path:
    from .evalkit import pca

    names = sorted(vectors)
    x = np.stack([vectors[n] for n in names])
    if len(names) >= 2:
        pts = pca(x, min(2, x.shape[1]))
    else:
        pts = np.zeros((len(names), 2))
    if pts.shape[1] < 2:
        pts = np.hstack([pts, np.zeros((len(pts), 1))])
    return scatter_2d(pts, names, [groups.get(n, n) for n in names], path, title)
