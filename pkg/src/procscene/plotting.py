"""Matplotlib figures for evaluation reports (Agg backend, files only)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon, Rectangle  # noqa: E402

from .geometry import footprint  # noqa: E402
from .metrics import SceneMetrics  # noqa: E402
from .scene import Scene  # noqa: E402

# strip the version string so identical inputs give identical bytes
_PNG_META = {"Software": None}


def draw_topdown(ax, scene: Scene, colliding: set[str] = frozenset(), floating: set[str] = frozenset()) -> None:
    lo, hi = scene.boundary.lo, scene.boundary.hi
    ax.add_patch(Rectangle((lo[0], lo[1]), hi[0] - lo[0], hi[1] - lo[1], fill=False, lw=1.5, ec="black"))
    order = sorted(scene.objects, key=lambda o: float(o.box.corners[:, 2].max()))
    for obj in order:
        if obj.id in colliding:
            color = "tab:red"
        elif obj.id in floating:
            color = "tab:orange"
        else:
            color = "tab:blue"
        ax.add_patch(Polygon(footprint(obj.box), closed=True, fc=color, ec="black", alpha=0.35, lw=0.6))
        cx, cy = obj.box.center[:2]
        ax.text(cx, cy, obj.id, fontsize=5, ha="center", va="center")
    ax.set_xlim(lo[0] - 0.1, hi[0] + 0.1)
    ax.set_ylim(lo[1] - 0.1, hi[1] + 0.1)
    ax.set_aspect("equal")
    ax.set_title(scene.id, fontsize=7)
    ax.tick_params(labelsize=5)


def save_layouts(scenes: Sequence[Scene], path: str | Path, flags=None, max_scenes: int = 16) -> None:
    """Grid of top-down layouts; ``flags`` maps scene id to (colliding, floating) id sets."""
    scenes = list(scenes)[:max_scenes]
    cols = max(1, min(4, len(scenes)))
    rows = max(1, math.ceil(len(scenes) / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3.4 * rows), squeeze=False)
    for ax in axes.flat:
        ax.set_axis_off()
    for ax, scene in zip(axes.flat, scenes):
        ax.set_axis_on()
        coll, flo = (flags or {}).get(scene.id, (set(), set()))
        draw_topdown(ax, scene, coll, flo)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def save_metric_histograms(metrics: Sequence[SceneMetrics], path: str | Path) -> None:
    names = ["collision_rate", "floating_rate", "acceptance_rate", "resamples_per_object"]
    fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 2.6))
    for ax, name in zip(axes, names):
        values = [getattr(m, name) for m in metrics if not math.isnan(getattr(m, name))]
        ax.hist(values, bins=20, color="tab:blue", alpha=0.8)
        ax.set_title(name.replace("_", " "), fontsize=8)
        ax.tick_params(labelsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
