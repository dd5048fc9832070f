"""Matplotlib SVG rendering for experiment outputs.

Every figure is written as deterministic SVG: a fixed hash salt and a cleared
Date field keep repeated runs byte-comparable.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "blindpick"

__all__ = [
    "save_svg",
    "occupancy_figure",
    "loss_curve_figure",
    "bar_figure",
    "sweep_figure",
]


def save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def occupancy_figure(grid, estimates, truths, path, title="occupancy"):
    """Top-down occupancy cells with estimated centers (dots) and true
    centroids (triangles)."""
    fig, ax = plt.subplots(figsize=(5, 5))
    side = grid.cells.shape[0] * grid.delta
    ax.imshow(
        grid.cells,
        origin="lower",
        extent=(0, side, 0, side),
        cmap="Greys",
        vmin=0.0,
        vmax=1.5,
        interpolation="nearest",
    )
    if estimates:
        xs, ys = zip(*estimates)
        ax.scatter(xs, ys, marker="o", s=60, color="tab:blue", label="estimate")
    if truths:
        xs, ys = zip(*truths)
        ax.scatter(xs, ys, marker="^", s=60, color="tab:red", label="true centroid")
    ax.set_xlim(0, side)
    ax.set_ylim(0, side)
    ax.set_xlabel("x (cm)")
    ax.set_ylabel("y (cm)")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    save_svg(fig, path)


def loss_curve_figure(history, path, title="training loss"):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(len(history)), history, color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean batch loss")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    save_svg(fig, path)


def bar_figure(labels, means, ses, ylabel, path, title=""):
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(labels), 3.4))
    xs = range(len(labels))
    ax.bar(xs, means, yerr=ses, capsize=4, color="tab:blue", alpha=0.85)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0, 1.05 if max(means, default=0) <= 1.0 else None)
    if title:
        ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    save_svg(fig, path)


def sweep_figure(xs, series, xlabel, ylabel, path, title=""):
    """series: {label: (means, ses)} drawn as error-bar lines over xs."""
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for label, (means, ses) in series.items():
        ax.errorbar(xs, means, yerr=ses, marker="o", capsize=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    save_svg(fig, path)
