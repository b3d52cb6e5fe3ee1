"""Sequential scene assembly with collision-aware rejection and gravity settling.

Each relational tuple is placed by drawing from the predictor's mixture in
the support's frame. Draws that collide with placed boxes or leave the room
are discarded, so accepted placements follow the predicted density truncated
to the collision-free set and renormalized. The normalizer is never computed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, TypeVar

import numpy as np

from .errors import DegenerateRotation, NoSupportBelow, PlacementFailure, ValidationError
from .geometry import (
    OrientedBox,
    bottom_surface_height,
    footprint_overlap_area,
    obb_intersects,
    top_surface_height,
)
from .hierarchy import HierarchySpec, RelationalTuple, category_of, serialize
from .predictor import PredictorTable, RelationKey, predict, snap_size
from .records import FLOOR
from .scene import Boundary, Scene, SceneObject, floor_box
from .spatial import GridIndex

logger = logging.getLogger(__name__)

T = TypeVar("T")

REST_TOL = 1e-9
MIN_SAMPLED_EXTENT = 1e-3
FAILURE_POLICIES = ("skip", "abort")


@dataclass(frozen=True)
class AssemblyConfig:
    max_attempts: int = 64
    seed: int = 0
    gravity_enabled: bool = True
    rejection_enabled: bool = True
    failure_policy: str = "skip"
    cell_size: float = 0.5

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.failure_policy not in FAILURE_POLICIES:
            raise ValueError(f"failure_policy must be one of {FAILURE_POLICIES}")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")


class SceneState:
    """Placed instances plus a grid index over their boxes. The floor is implicit."""

    def __init__(self, boundary: Boundary, cell_size: float = 0.5):
        self.boundary = boundary
        self.floor = floor_box(boundary)
        self.placed: dict[str, SceneObject] = {}
        self.index = GridIndex(cell_size)

    def add(self, obj: SceneObject) -> None:
        if obj.id in self.placed or obj.id == FLOOR:
            raise ValidationError("duplicate placement", edge=(obj.support or FLOOR, obj.id))
        self.placed[obj.id] = obj
        self.index.insert(obj.id, obj.box)

    def __contains__(self, node: str) -> bool:
        return node == FLOOR or node in self.placed

    def box(self, node: str) -> OrientedBox:
        return self.floor if node == FLOOR else self.placed[node].box

    def category(self, node: str) -> str:
        return FLOOR if node == FLOOR else self.placed[node].category

    def objects(self) -> list[SceneObject]:
        return list(self.placed.values())


def feasible(candidate: OrientedBox, state: SceneState) -> bool:
    """Inside the room and clear of every placed box (grid shortlist, then exact test)."""
    if not state.boundary.contains_box(candidate):
        return False
    return not any(obb_intersects(candidate, state.index.box(k)) for k in state.index.query(candidate))


def feasible_bruteforce(candidate: OrientedBox, state: SceneState) -> bool:
    if not state.boundary.contains_box(candidate):
        return False
    return not any(obb_intersects(candidate, o.box) for o in state.placed.values())


def gravity_refine(candidate: OrientedBox, support: OrientedBox, state: SceneState) -> OrientedBox:
    """Drop ``candidate`` vertically onto the highest surface beneath its footprint.

    Surfaces are the support's top and the tops of placed boxes whose
    footprints overlap the candidate's. A surface counts as beneath when it
    is no higher than ``max(candidate bottom, support top)``, so a draw that
    sank slightly into its support is lifted back onto it.

    Raises:
        NoSupportBelow: the support's footprint does not overlap the candidate's.
    """
    bottom = bottom_surface_height(candidate)
    on_floor = support is state.floor or support.allclose(state.floor, atol=0.0)
    if on_floor:
        support_top = state.boundary.floor_height
    else:
        if footprint_overlap_area(support, candidate) <= 0.0:
            raise NoSupportBelow("support surface is not beneath the candidate footprint")
        support_top = top_surface_height(support)
    drop_from = max(bottom, support_top)
    rest = support_top
    for key in state.index.query(candidate, xy_only=True):
        other = state.index.box(key)
        top = top_surface_height(other)
        if rest < top <= drop_from + REST_TOL and footprint_overlap_area(other, candidate) > 0.0:
            rest = top
    dz = rest - bottom
    if abs(dz) < REST_TOL:
        return candidate
    return candidate.translated([0.0, 0.0, dz])


def rejection_sample(
    propose: Callable[[int], T | None],
    accept: Callable[[T], bool],
    max_attempts: int,
) -> tuple[T, int]:
    """Draw until ``accept`` holds; ``propose`` may return None for an invalid draw.

    Returns:
        The accepted value and the number of proposals used.

    Raises:
        PlacementFailure: after ``max_attempts`` rejected proposals.
    """
    for attempt in range(1, max_attempts + 1):
        value = propose(attempt)
        if value is not None and accept(value):
            return value, attempt
    raise PlacementFailure(f"no feasible sample in {max_attempts} attempts", attempts=max_attempts)


def decode_candidate(v: np.ndarray, asset_size=None) -> OrientedBox | None:
    """Box from a sampled vector; None if the sampled rotation is degenerate."""
    size = v[3:6]
    if asset_size is not None:
        size = snap_size(size, asset_size)
    else:
        size = np.maximum(np.abs(size), MIN_SAMPLED_EXTENT)
    try:
        return OrientedBox(v[0:3], size, v[6:12])
    except DegenerateRotation:
        return None


def place_one(
    tup: RelationalTuple,
    table: PredictorTable,
    state: SceneState,
    config: AssemblyConfig,
    rng: np.random.Generator,
    category: str | None = None,
    asset_size=None,
) -> tuple[OrientedBox, int]:
    """Sample a feasible pose for ``tup.dependent``.

    Raises:
        PlacementFailure: ``config.max_attempts`` proposals were rejected.
        UnknownRelation: the table has no entry for the relation.
    """
    category = category if category is not None else category_of(tup.dependent)
    functional = tup.functional if tup.functional is not None and tup.functional in state else None
    key = RelationKey(
        state.category(tup.support),
        state.category(functional) if functional is not None else None,
        category,
    )
    support_box = state.box(tup.support)
    world = predict(table, key, support_box)

    def propose(_attempt: int) -> OrientedBox | None:
        box = decode_candidate(world.sample(rng), asset_size)
        if box is None or not config.gravity_enabled:
            return box
        try:
            return gravity_refine(box, support_box, state)
        except NoSupportBelow:
            return None if config.rejection_enabled else box

    def accept(box: OrientedBox) -> bool:
        return not config.rejection_enabled or feasible(box, state)

    try:
        return rejection_sample(propose, accept, config.max_attempts)
    except PlacementFailure as exc:
        raise PlacementFailure(
            f"could not place {tup.dependent!r} on {tup.support!r}: {exc}",
            node_id=tup.dependent,
            attempts=exc.attempts,
        ) from None


@dataclass
class ObjectAttempt:
    id: str
    category: str
    attempts: int
    accepted: bool
    note: str = ""


@dataclass
class PlacementReport:
    objects: list[ObjectAttempt] = field(default_factory=list)

    @property
    def proposals(self) -> int:
        return sum(o.attempts for o in self.objects)

    @property
    def placed(self) -> int:
        return sum(o.accepted for o in self.objects)

    @property
    def acceptance_rate(self) -> float:
        total = self.proposals
        return self.placed / total if total else 1.0

    @property
    def resamples_per_object(self) -> float:
        placed = [o.attempts - 1 for o in self.objects if o.accepted]
        return float(np.mean(placed)) if placed else 0.0

    def to_doc(self) -> dict[str, Any]:
        return {
            "acceptance_rate": self.acceptance_rate,
            "resamples_per_object": self.resamples_per_object,
            "proposals": self.proposals,
            "placed": self.placed,
            "failed": len(self.objects) - self.placed,
            "objects": [
                {"id": o.id, "category": o.category, "attempts": o.attempts, "accepted": o.accepted, "note": o.note}
                for o in self.objects
            ],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "PlacementReport":
        return cls([
            ObjectAttempt(o["id"], o["category"], int(o["attempts"]), bool(o["accepted"]), o.get("note", ""))
            for o in doc.get("objects", [])
        ])


def scene_rng(master_seed: int, scene_index: int) -> np.random.Generator:
    """Independent per-scene stream, stable regardless of scheduling."""
    return np.random.default_rng([int(master_seed), int(scene_index)])


def assemble(
    spec: HierarchySpec,
    table: PredictorTable,
    asset_library: Mapping[str, Any],
    boundary: Boundary,
    config: AssemblyConfig,
    rng: np.random.Generator | None = None,
    scene_id: str = "scene",
) -> tuple[Scene, PlacementReport]:
    """Serialize ``spec`` and place every tuple in order.

    Dependents whose support anchor failed to place are skipped and
    recorded with zero attempts.

    Raises:
        PlacementFailure: first failure when ``failure_policy == "abort"``.
        UnknownRelation: missing predictor entry (always propagated).
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    state = SceneState(boundary, config.cell_size)
    report = PlacementReport()
    for tup in serialize(spec):
        category = spec.category(tup.dependent)
        if tup.support not in state:
            note = f"support {tup.support!r} was not placed"
            if config.failure_policy == "abort":
                raise PlacementFailure(note, node_id=tup.dependent)
            report.objects.append(ObjectAttempt(tup.dependent, category, 0, False, note))
            continue
        asset = asset_library.get(category)
        try:
            box, attempts = place_one(tup, table, state, config, rng, category, asset)
        except PlacementFailure as exc:
            if config.failure_policy == "abort":
                raise
            logger.info("%s", exc)
            report.objects.append(ObjectAttempt(tup.dependent, category, exc.attempts, False, "rejected"))
            continue
        functional = tup.functional if tup.functional in state and tup.functional != FLOOR else None
        state.add(SceneObject(tup.dependent, category, box, tup.support, functional))
        report.objects.append(ObjectAttempt(tup.dependent, category, attempts, True))
    scene = Scene(scene_id, boundary, state.objects(), report.to_doc())
    return scene, report
