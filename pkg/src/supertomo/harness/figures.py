"""Matplotlib figure rendering for reconstructions and error curves."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ..linops import Image  # noqa: E402
from ..solvers import CurveRecord  # noqa: E402
from .io import WINDOW_HI, WINDOW_LO  # noqa: E402


def save_image_figure(path, image: Image, lo: float = WINDOW_LO, hi: float = WINDOW_HI,
                      title: str | None = None) -> None:
    """Windowed gray-scale rendering of an image grid."""
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.imshow(image.grid(), cmap="gray", vmin=lo, vmax=hi, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _curve_xy(trace: list[CurveRecord], x_field: str, y_field: str):
    xs = [getattr(rec, x_field) for rec in trace]
    ys = [getattr(rec, y_field) for rec in trace]
    return xs, ys


def save_curves_figure(
    path,
    curves: list[tuple[str, list[CurveRecord]]],
    x_field: str = "k",
    y_field: str = "se",
    mark_min: bool = True,
) -> None:
    """One line per labeled trace; the per-curve minimum is dotted.

    Curves whose y values are all NaN (no reference image available) are
    skipped; if everything is NaN the figure falls back to the residual f.
    """
    usable = [
        (name, trace)
        for name, trace in curves
        if any(not math.isnan(getattr(r, y_field)) for r in trace)
    ]
    if not usable:
        y_field = "f"
        usable = list(curves)
    xlabel = {"k": "iteration", "seconds": "wall time [s]"}.get(x_field, x_field)
    ylabel = {"se": "selective error", "f": "squared residual", "tv": "total variation"}.get(
        y_field, y_field
    )

    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for name, trace in usable:
        xs, ys = _curve_xy(trace, x_field, y_field)
        (line,) = ax.semilogy(xs, ys, lw=1.4, label=name)
        if mark_min:
            finite = [(x, y) for x, y in zip(xs, ys) if not math.isnan(y)]
            if finite:
                xm, ym = min(finite, key=lambda t: t[1])
                ax.plot([xm], [ym], "o", ms=4, color=line.get_color())
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(path, ranking: list[dict], top: int = 20) -> None:
    """Horizontal bars of the best parameter sets by minimum selective error."""
    # failed sets carry min_se=inf; they stay in the CSV but can't be drawn
    rows = [row for row in ranking if math.isfinite(row["min_se"])][:top]
    labels = [
        f"{row['algorithm']} " + ",".join(f"{k}={v:g}" for k, v in row["params"].items())
        for row in rows
    ]
    values = [row["min_se"] for row in rows]
    fig, ax = plt.subplots(figsize=(6.4, 0.34 * max(len(rows), 4) + 1.2))
    ax.barh(range(len(rows)), values, color="#4878d0")
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("min selective error (first 15 iterations)")
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
