"""Matplotlib figure emission for the report path.

All figures are written as SVG with a fixed hash salt and no creation-date
metadata, so identical inputs produce identical bytes.  Files are written
to a temporary name and renamed into place.
"""

from __future__ import annotations

import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import DataError  # noqa: E402

HASH_SALT = "tsnecwm"


def _save_svg(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with plt.rc_context({"svg.hashsalt": HASH_SALT}):
        fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    os.replace(tmp, path)


def emit_scatter(Y, labels, path, title: str | None = None, label_name: str = "label") -> Path:
    """Scatter a 2-column map colored by integer label, with a legend.

    The SVG contains exactly one marker element per point.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != 2:
        raise DataError(f"scatter needs an N x 2 map, got shape {Y.shape}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("empty label set")
    if labels.shape[0] != Y.shape[0]:
        raise DataError("labels and map rows differ in length")

    fig, ax = plt.subplots(figsize=(6, 5))
    for value in np.unique(labels):
        pts = Y[labels == value]
        ax.scatter(pts[:, 0], pts[:, 1], s=12, linewidths=0, label=f"{label_name} {value}")
    ax.set_xlabel("dim 1")
    ax.set_ylabel("dim 2")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    _save_svg(fig, path)
    return Path(path)


def emit_cost_trace(trace, path, title: str = "KL cost per iteration") -> Path:
    trace = np.asarray(trace, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(trace.shape[0]), trace, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    ax.set_title(title)
    _save_svg(fig, path)
    return Path(path)


def emit_criterion_curves(cells, criterion: str, path) -> Path:
    """One line per covariance model: criterion value against component count."""
    by_model: dict[str, list[tuple[int, float]]] = {}
    for cell in cells:
        if cell.status != "OK":
            continue
        value = cell.criteria.values.get(criterion)
        if value is None:
            continue
        by_model.setdefault(cell.model, []).append((cell.G, value))
    fig, ax = plt.subplots(figsize=(7, 5))
    for model in sorted(by_model):
        pts = sorted(by_model[model])
        ax.plot([g for g, _ in pts], [v for _, v in pts], marker="o", ms=3, lw=1, label=model)
    ax.set_xlabel("number of components G")
    ax.set_ylabel(criterion)
    ax.set_title(f"{criterion} across the covariance models")
    ax.legend(fontsize=7, ncols=2)
    _save_svg(fig, path)
    return Path(path)
