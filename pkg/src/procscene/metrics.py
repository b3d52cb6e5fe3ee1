"""Scene quality metrics: collision, floating, acceptance and resampling rates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInput, EmptyScene
from .geometry import bottom_surface_height, footprint_overlap_area, obb_intersects, top_surface_height
from .scene import Scene
from .spatial import GridIndex

FLOAT_EPS = 0.01


@dataclass(frozen=True)
class SceneMetrics:
    collision_rate: float
    floating_rate: float
    acceptance_rate: float
    resamples_per_object: float
    object_count: int


def colliding_objects(scene: Scene, cell_size: float = 0.5) -> set[str]:
    index = GridIndex(cell_size)
    for obj in scene.objects:
        index.insert(obj.id, obj.box)
    hits: set[str] = set()
    for obj in scene.objects:
        for other in index.query(obj.box):
            if other != obj.id and obb_intersects(obj.box, index.box(other)):
                hits.add(obj.id)
                break
    return hits


def collision_rate(scene: Scene) -> float:
    """Fraction of (non-floor) objects intersecting at least one other object."""
    if not scene.objects:
        raise EmptyScene(f"scene {scene.id!r} has no objects")
    return len(colliding_objects(scene)) / len(scene.objects)


def floating_objects(scene: Scene, eps: float = FLOAT_EPS) -> set[str]:
    """Objects whose bottom is not within ``eps`` of the floor or of a top surface under them."""
    floor = scene.boundary.floor_height
    index = GridIndex()
    for obj in scene.objects:
        index.insert(obj.id, obj.box)
    out = set()
    for obj in scene.objects:
        bottom = bottom_surface_height(obj.box)
        if abs(bottom - floor) <= eps:
            continue
        resting = False
        for other in index.query(obj.box, xy_only=True):
            if other == obj.id:
                continue
            obox = index.box(other)
            if abs(bottom - top_surface_height(obox)) <= eps and footprint_overlap_area(obox, obj.box) > 0.0:
                resting = True
                break
        if not resting:
            out.add(obj.id)
    return out


def floating_rate(scene: Scene, eps: float = FLOAT_EPS) -> float:
    if not scene.objects:
        raise EmptyScene(f"scene {scene.id!r} has no objects")
    return len(floating_objects(scene, eps)) / len(scene.objects)


def scene_metrics(scene: Scene, eps: float = FLOAT_EPS) -> SceneMetrics:
    report = scene.report or {}
    return SceneMetrics(
        collision_rate=collision_rate(scene),
        floating_rate=floating_rate(scene, eps),
        acceptance_rate=float(report.get("acceptance_rate", math.nan)),
        resamples_per_object=float(report.get("resamples_per_object", math.nan)),
        object_count=len(scene.objects),
    )


@dataclass(frozen=True)
class Summary:
    n: int
    mean: dict[str, float]
    sd: dict[str, float]


def aggregate(metrics: Sequence[SceneMetrics]) -> Summary:
    """Mean and sample standard deviation (ddof=1; 0 for a single row) per field."""
    if not metrics:
        raise EmptyInput("no metrics to aggregate")
    mean, sd = {}, {}
    for f in fields(SceneMetrics):
        values = np.array([getattr(m, f.name) for m in metrics], dtype=float)
        mean[f.name] = float(np.mean(values))
        sd[f.name] = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return Summary(len(metrics), mean, sd)


METRIC_FIELDS = [f.name for f in fields(SceneMetrics)]


def metrics_csv(rows: Iterable[tuple[str, SceneMetrics | None, str]], summary: Summary | None) -> str:
    """Per-scene rows (``status`` is ``ok`` or a skip reason) followed by mean/sd footer rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scene", "status", *METRIC_FIELDS])
    for scene_id, m, status in rows:
        if m is None:
            writer.writerow([scene_id, status, *([""] * len(METRIC_FIELDS))])
        else:
            d = asdict(m)
            writer.writerow([scene_id, status, *(_fmt(d[k]) for k in METRIC_FIELDS)])
    if summary is not None:
        writer.writerow([f"mean(n={summary.n})", "aggregate", *(_fmt(summary.mean[k]) for k in METRIC_FIELDS)])
        writer.writerow([f"sd(n={summary.n})", "aggregate", *(_fmt(summary.sd[k]) for k in METRIC_FIELDS)])
    return buf.getvalue()


def _fmt(v: float) -> str:
    return format(float(v), ".6g")
