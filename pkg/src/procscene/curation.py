"""Turn raw scene layouts into relation tuple records and co-occurrence tables.

Three stages: settle-and-filter physical validation, geometric support
extraction, and rule-table functional distillation gated by the k-check
(the dependent's centroid must lie inside the anchor box expanded by k).
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError
from .geometry import (
    OrientedBox,
    bottom_surface_height,
    contains_point,
    expand_box,
    footprint,
    footprint_overlap_area,
    horizontal_overlap_ratio,
    obb_intersects,
    polygon_area,
    top_surface_height,
)
from .hierarchy import StatTables
from .records import FLOOR, ObjectRef, RelationTupleRecord
from .scene import Scene, SceneObject

logger = logging.getLogger(__name__)

_GAP_TOL = 1e-6
_REST_TOL = 1e-9


@dataclass(frozen=True)
class CurationConfig:
    vertical_gap_max: float = 0.03
    overlap_min: float = 0.5
    displacement_max: float = 0.10
    rule_table: Mapping[tuple[str, str], float] = field(default_factory=dict)
    exclude_floor_only: bool = True

    def __post_init__(self):
        if not self.vertical_gap_max > 0 or not self.displacement_max > 0:
            raise ValueError("vertical_gap_max and displacement_max must be positive")
        if not 0 < self.overlap_min <= 1:
            raise ValueError("overlap_min must lie in (0, 1]")
        for pair, k in self.rule_table.items():
            if not k >= 1:
                raise ValueError(f"rule {pair} has k_f = {k}; must be >= 1")


def _settle(objects: Sequence[SceneObject], floor_z: float) -> dict[str, OrientedBox]:
    """Drop objects bottom-up onto the highest surface under them."""
    order = sorted(range(len(objects)), key=lambda i: (bottom_surface_height(objects[i].box), i))
    settled: dict[str, OrientedBox] = {}
    for i in order:
        obj = objects[i]
        box = obj.box
        center_z = float(box.center[2])
        rest = floor_z
        for other in settled.values():
            top = top_surface_height(other)
            if rest < top <= center_z and footprint_overlap_area(other, box) > 0.0:
                rest = top
        dz = rest - bottom_surface_height(box)
        settled[obj.id] = box if abs(dz) < _REST_TOL else box.translated([0.0, 0.0, dz])
    return settled


def physical_validate(scene: Scene, delta: float = 0.10) -> Scene:
    """Settle objects and drop those that move more than ``delta`` or still collide.

    Repeats until no object is removed, so the result is a fixed point.
    """
    original = {o.id: o.box for o in scene.objects}
    alive = list(scene.objects)
    while True:
        settled = _settle(alive, scene.boundary.floor_height)
        moved = {
            oid for oid, box in settled.items()
            if np.linalg.norm(box.center - original[oid].center) > delta
        }
        keep = [oid for oid in settled if oid not in moved]
        colliding = set()
        for i, a in enumerate(keep):
            for b in keep[i + 1:]:
                if obb_intersects(settled[a], settled[b]):
                    colliding.update((a, b))
        removed = moved | colliding
        alive = [
            SceneObject(o.id, o.category, settled[o.id], o.support, o.functional)
            for o in alive
            if o.id not in removed
        ]
        if not removed:
            break
        logger.debug("scene %s: removed %s", scene.id, sorted(removed))
    return Scene(scene.id, scene.boundary, alive)


def extract_support(scene: Scene, eps_v: float = 0.03, tau_h: float = 0.5) -> list[tuple[str, str]]:
    """One (support id, dependent id) pair per object; the floor when nothing qualifies."""
    pairs = []
    for u in scene.objects:
        bottom = bottom_surface_height(u.box)
        best = None
        for low in scene.objects:
            if low.id == u.id:
                continue
            top = top_surface_height(low.box)
            gap = bottom - top
            if gap < -_GAP_TOL or gap > eps_v:
                continue
            ratio = horizontal_overlap_ratio(low.box, u.box)
            if ratio < tau_h:
                continue
            rank = (ratio, top, -polygon_area(footprint(low.box)))
            if best is None or rank > best[0]:
                best = (rank, low.id)
        pairs.append((best[1] if best else FLOOR, u.id))
    return pairs


def k_check(anchor: OrientedBox, dependent: OrientedBox, k: float) -> bool:
    return contains_point(expand_box(anchor, k), dependent.center)


def distill_functional(
    scene: Scene,
    support_pairs: Sequence[tuple[str, str]],
    rule_table: Mapping[tuple[str, str], float],
) -> list[tuple[str, str]]:
    """(functional anchor id, dependent id) pairs among objects on a shared surface.

    Only category pairs in ``rule_table`` are considered, and only if the
    k-check passes. The nearest passing anchor wins; anchors that would close
    a cycle are passed over.
    """
    objs = {o.id: o for o in scene.objects}
    surface_of = {dep: sup for sup, dep in support_pairs}
    by_surface: dict[str, list[str]] = defaultdict(list)
    for sup, dep in support_pairs:
        by_surface[sup].append(dep)

    chosen: dict[str, str] = {}

    def closes_cycle(anchor: str, dep: str) -> bool:
        cur = anchor
        while cur in chosen:
            cur = chosen[cur]
            if cur == dep:
                return True
        return cur == dep

    for d in (o.id for o in scene.objects):
        if d not in surface_of:
            continue
        dep = objs[d]
        passing = []
        for a in by_surface[surface_of[d]]:
            if a == d:
                continue
            k = rule_table.get((objs[a].category, dep.category))
            if k is None or not k_check(objs[a].box, dep.box, k):
                continue
            dist = float(np.linalg.norm(objs[a].box.center - dep.box.center))
            passing.append((dist, a))
        for _, a in sorted(passing):
            if not closes_cycle(a, d):
                chosen[d] = a
                break
    return [(a, d) for d, a in chosen.items()]


def build_stats(records: Sequence[RelationTupleRecord]) -> StatTables:
    sup: dict[str, Counter] = defaultdict(Counter)
    fnc: dict[str, dict[str, Counter]] = defaultdict(lambda: defaultdict(Counter))
    for r in records:
        s, f, d = r.key_labels
        sup[s][d] += 1
        if f is not None:
            fnc[s][f][d] += 1
    return StatTables(
        sup_dep={a: dict(sorted(c.items())) for a, c in sorted(sup.items())},
        func_dep={
            a: {leaf: sorted(c.items()) for leaf, c in sorted(d.items())}
            for a, d in sorted(fnc.items())
        },
    )


@dataclass
class CurationReport:
    scenes_in: int = 0
    scenes_kept: int = 0
    scenes_floor_only: int = 0
    objects_in: int = 0
    objects_removed_validation: int = 0
    support_pairs: int = 0
    floor_pairs: int = 0
    functional_pairs: int = 0
    records: int = 0

    def lines(self) -> list[str]:
        return [
            f"scenes: {self.scenes_in} in, {self.scenes_kept} kept, {self.scenes_floor_only} dropped (floor-only)",
            f"physical validation: {self.objects_in} objects in, {self.objects_removed_validation} removed",
            f"support extraction: {self.support_pairs} object-supported, {self.floor_pairs} floor-supported",
            f"functional distillation: {self.functional_pairs} pairs",
            f"records: {self.records}",
        ]


def curate(
    scenes: Sequence[Scene], config: CurationConfig
) -> tuple[list[RelationTupleRecord], StatTables, CurationReport]:
    """Validate, extract relations and aggregate statistics over a corpus.

    Raises:
        ParseError: duplicate scene ids.
    """
    ids = [s.id for s in scenes]
    dupes = sorted(i for i, n in Counter(ids).items() if n > 1)
    if dupes:
        raise ParseError(f"duplicate scene ids: {dupes}", field="scene_id")

    report = CurationReport(scenes_in=len(scenes))
    records: list[RelationTupleRecord] = []
    for raw in scenes:
        report.objects_in += len(raw.objects)
        scene = physical_validate(raw, config.displacement_max)
        report.objects_removed_validation += len(raw.objects) - len(scene.objects)
        pairs = extract_support(scene, config.vertical_gap_max, config.overlap_min)
        if not pairs:
            continue
        if config.exclude_floor_only and all(s == FLOOR for s, _ in pairs):
            report.scenes_floor_only += 1
            continue
        report.scenes_kept += 1
        functional = {d: a for a, d in distill_functional(scene, pairs, config.rule_table)}
        objs = {o.id: o for o in scene.objects}
        floor_ref = ObjectRef(FLOOR, FLOOR, scene.floor)
        for sup, dep in pairs:
            report.support_pairs += sup != FLOOR
            report.floor_pairs += sup == FLOOR
            f = functional.get(dep)
            report.functional_pairs += f is not None
            d = objs[dep]
            records.append(RelationTupleRecord(
                dependent=ObjectRef(d.id, d.category, d.box),
                support=floor_ref if sup == FLOOR else ObjectRef(sup, objs[sup].category, objs[sup].box),
                functional=None if f is None else ObjectRef(f, objs[f].category, objs[f].box),
                source_scene=scene.id,
            ))
    report.records = len(records)
    if not records:
        logger.warning("curation produced no records from %d scene(s)", len(scenes))
    return records, build_stats(records), report
