"""Figures for record files, rendered next to the CSV output of ``report``."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402
from matplotlib.patches import Patch, Polygon  # noqa: E402

log = logging.getLogger(__name__)

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

# status -> (code, colour); filtered composites get their own colour
STATUS_COLOURS = {
    "Prime": (0, "#1b9e77"),
    "ProbablePrime": (1, "#66c2a5"),
    "Composite": (2, "#bdbdbd"),
    "Filtered": (3, "#636363"),
    "NonCandidate": (4, "#ffffff"),
    "Skipped": (5, "#9ecae1"),
}


def _figsize(width=6.0, ratio=None):
    ratio = (math.sqrt(5) - 1) / 2 if ratio is None else ratio
    return width, width * ratio


def plot_search_records(records: list[dict], path) -> Path:
    """Status grid: one row per triplet, one column per k."""
    path = Path(path)
    k_max = max((r["k_max"] for r in records), default=0)
    grid = []
    labels = []
    for r in records:
        row = [STATUS_COLOURS["NonCandidate"][0]] * (k_max + 1)
        for v in r["verdicts"]:
            key = "Filtered" if v.get("filter") and v["status"] == "Composite" else v["status"]
            row[v["k"]] = STATUS_COLOURS[key][0]
        grid.append(row)
        labels.append(f"({r['a']},{r['b']},{r['c']})")
    cmap = ListedColormap([c for _, c in sorted(STATUS_COLOURS.values())])
    with plt.rc_context(STYLE):
        height = max(2.0, 0.22 * len(records) + 1.0)
        fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * (k_max + 1) + 2.5), height))
        if grid:
            ax.imshow(grid, cmap=cmap, vmin=-0.5, vmax=len(STATUS_COLOURS) - 0.5,
                      aspect="auto", interpolation="nearest")
        ax.set_xticks(range(k_max + 1))
        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(labels)
        ax.set_xlabel("k")
        ax.set_ylabel("(a, b, c)")
        ax.set_title("P(k) = a^(b^k) + c")
        handles = [Patch(facecolor=c, edgecolor="k", linewidth=0.4, label=s)
                   for s, (_, c) in STATUS_COLOURS.items()]
        ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.01, 1.0), frameon=False)
        fig.savefig(path)
        plt.close(fig)
    log.info("wrote %s", path)
    return path


def _draw_polygon_estimate(ax, rec: dict) -> None:
    from . import geom2d

    poly = geom2d.validate_polygon(rec["shape"]["vertices"])
    probe = geom2d.Point2.of(rec["probe"])
    pedal = geom2d.oblique_pedal(poly, probe, rec["angle_deg"])
    ax.add_patch(Polygon(poly.array, closed=True, fill=False, edgecolor="k", linewidth=1.0))
    for a in poly.vertices:
        ax.plot([probe.x, a.x], [probe.y, a.y], color="#d95f02", linewidth=0.6)
    for e in pedal.entries:
        ax.plot([probe.x, e.foot.x], [probe.y, e.foot.y], color="#7570b3", linewidth=0.6)
        ax.plot(e.foot.x, e.foot.y, "o", color="#7570b3", markersize=2)
    ax.plot(probe.x, probe.y, "o", color="k", markersize=3)
    ax.set_aspect("equal")
    ax.autoscale_view()
    ax.set_xticks([])
    ax.set_yticks([])


def plot_estimate_records(records: list[dict], path) -> Path:
    """Minimum ratio against its conjectured floor, plus argmin polygons."""
    path = Path(path)
    planar = [r for r in records if r.get("target") == "sides"]
    ncols = 1 + min(len(planar), 4)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, ncols, figsize=(3.0 * ncols, 3.0), squeeze=False)
        ax = axes[0][0]
        xs = range(len(records))
        ax.bar(xs, [r["min_ratio"] for r in records], color="#1b9e77", label="min ratio")
        floors = [(i, r["floor"]) for i, r in enumerate(records) if r.get("floor") is not None]
        if floors:
            ax.scatter([i for i, _ in floors], [f for _, f in floors], marker="_", s=400,
                       color="#d95f02", label="floor", zorder=3)
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"{r['n']}\n{r['target']}" for r in records])
        ax.set_ylabel("ratio")
        ax.legend(frameon=False)
        for ax, rec in zip(axes[0][1:], planar):
            _draw_polygon_estimate(ax, rec)
            ax.set_title(f"n={rec['n']}, α={rec['angle_deg']:g}°\nratio={rec['min_ratio']:.6f}")
        fig.savefig(path)
        plt.close(fig)
    log.info("wrote %s", path)
    return path


def plot_records(records: list[dict], path) -> Path:
    kinds = {r.get("record_type") for r in records}
    if kinds == {"search"}:
        return plot_search_records(records, path)
    if kinds == {"constant_estimate"}:
        return plot_estimate_records(records, path)
    raise ValueError(f"cannot plot record types {sorted(map(str, kinds))}")
