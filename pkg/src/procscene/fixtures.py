"""A small bedroom world used by the tests, the default config and the demo corpus.

It holds a room, asset sizes, a base template, co-occurrence counts and a
hand-built "ground truth" predictor table. Assembling scenes from the
ground-truth table gives a synthetic corpus with known relations, which
drives curation round trips and end-to-end runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assembly import AssemblyConfig, assemble, scene_rng
from .config import CurationParams, EngineConfig
from .geometry import OrientedBox, yaw_rotation
from .hierarchy import StatTables, generate
from .mol import MixtureOfLogistics
from .predictor import PredictorTable, RelationKey, to_local_vector
from .records import FLOOR
from .scene import Boundary, Scene, SceneObject, floor_box

BOUNDARY_MIN = (-2.0, -2.5, 0.0)
BOUNDARY_MAX = (2.0, 2.5, 3.0)

ASSETS = {
    "bed": (1.6, 2.0, 0.5),
    "nightstand": (0.45, 0.4, 0.55),
    "wardrobe": (1.2, 0.6, 2.0),
    "desk": (1.2, 0.6, 0.75),
    "chair": (0.45, 0.5, 0.9),
    "lamp": (0.2, 0.2, 0.45),
    "laptop": (0.34, 0.24, 0.02),
    "mouse": (0.06, 0.1, 0.04),
    "book": (0.15, 0.22, 0.04),
    "cup": (0.08, 0.08, 0.1),
}

TEMPLATE = {
    "format_version": 1,
    "support_tree": [
        {"parent": "Floor", "child": "bed_1"},
        {"parent": "Floor", "child": "nightstand_1"},
        {"parent": "Floor", "child": "desk_1"},
        {"parent": "Floor", "child": "wardrobe_1"},
        {"parent": "nightstand_1", "child": "lamp_1"},
        {"parent": "desk_1", "child": "laptop_1"},
    ],
    "functional_trees": [
        {
            "support_anchor": "Floor",
            "edges": [
                {"parent": "Floor", "child": "bed_1"},
                {"parent": "Floor", "child": "nightstand_1"},
                {"parent": "Floor", "child": "desk_1"},
                {"parent": "Floor", "child": "wardrobe_1"},
            ],
        },
        {"support_anchor": "nightstand_1", "edges": [{"parent": "nightstand_1", "child": "lamp_1"}]},
        {"support_anchor": "desk_1", "edges": [{"parent": "desk_1", "child": "laptop_1"}]},
    ],
}

RULES = [
    ("bed", "nightstand", 1.6),
    ("desk", "chair", 2.5),
    ("laptop", "mouse", 3.0),
    ("laptop", "book", 4.0),
    ("laptop", "cup", 5.0),
    ("lamp", "book", 2.5),
]

N_MAX = 6
K_GEN = 2.0

# placement noise of the ground-truth table (metres / unitless)
CENTER_NOISE = 0.03
SMALL_CENTER_NOISE = 0.01
SIZE_NOISE = 0.02
ROTATION_NOISE = 0.02


def bedroom_stats() -> StatTables:
    return StatTables(
        sup_dep={
            "desk": {"book": 9, "cup": 6, "laptop": 10, "mouse": 8},
            "floor": {"bed": 10, "chair": 10, "desk": 10, "nightstand": 18, "wardrobe": 10},
            "nightstand": {"book": 4, "lamp": 10},
        },
        func_dep={
            "desk": {"laptop": [("mouse", 8), ("book", 6), ("cup", 5)]},
            "floor": {"bed": [("nightstand", 8)], "desk": [("chair", 10)]},
            "nightstand": {"lamp": [("book", 4)]},
        },
    )


def bedroom_boundary() -> Boundary:
    return Boundary(BOUNDARY_MIN, BOUNDARY_MAX)


def bedroom_config() -> EngineConfig:
    return EngineConfig(
        taxonomy=sorted(ASSETS),
        templates={"bedroom": TEMPLATE},
        asset_library={k: list(v) for k, v in ASSETS.items()},
        curation=CurationParams(rule_table=[{"anchor": a, "dependent": d, "k": k} for a, d, k in RULES]),
    )


@dataclass(frozen=True)
class Mode:
    """A placement mode: dependent center offset and yaw in the support's frame."""

    offset: tuple[float, float, float]
    yaw_deg: float = 0.0
    weight: float = 1.0


def _floor_modes(dep: str, centers: list[tuple[float, float, float, float]]) -> list[Mode]:
    # world (x, y, yaw, weight) on the floor; offsets are taken from the floor slab center
    fb = floor_box(bedroom_boundary())
    h = ASSETS[dep][2]
    return [Mode((x - fb.center[0], y - fb.center[1], h / 2 - fb.center[2]), yaw, w) for x, y, yaw, w in centers]


def _top_modes(support: str, dep: str, spots: list[tuple[float, float, float]]) -> list[Mode]:
    dz = ASSETS[support][2] / 2 + ASSETS[dep][2] / 2
    return [Mode((x, y, dz), yaw, 1.0) for x, y, yaw in spots]


def _ground_truth_modes() -> dict[RelationKey, list[Mode]]:
    nightstand = _floor_modes("nightstand", [(-1.1, 2.25, 0.0, 0.5), (1.1, 2.25, 0.0, 0.5)])
    return {
        RelationKey(FLOOR, None, "bed"): _floor_modes("bed", [(0.0, 1.45, 0.0, 1.0)]),
        RelationKey(FLOOR, None, "nightstand"): nightstand,
        RelationKey(FLOOR, "bed", "nightstand"): nightstand,
        RelationKey(FLOOR, None, "desk"): _floor_modes("desk", [(0.8, -2.15, 0.0, 0.6), (1.65, -0.8, 90.0, 0.4)]),
        RelationKey(FLOOR, None, "wardrobe"): _floor_modes("wardrobe", [(-1.65, -1.0, 90.0, 1.0)]),
        RelationKey(FLOOR, "desk", "chair"): _floor_modes(
            "chair", [(0.8, -1.5, 180.0, 0.6), (1.05, -0.8, -90.0, 0.4)]
        ),
        RelationKey("desk", None, "laptop"): _top_modes("desk", "laptop", [(-0.1, 0.05, 0.0)]),
        RelationKey("desk", "laptop", "mouse"): _top_modes("desk", "mouse", [(0.2, 0.05, 0.0)]),
        RelationKey("desk", "laptop", "book"): _top_modes("desk", "book", [(0.45, 0.1, 0.0)]),
        RelationKey("desk", "laptop", "cup"): _top_modes("desk", "cup", [(-0.45, 0.15, 0.0)]),
        RelationKey("nightstand", None, "lamp"): _top_modes("nightstand", "lamp", [(-0.08, 0.05, 0.0)]),
        RelationKey("nightstand", "lamp", "book"): _top_modes("nightstand", "book", [(0.12, -0.07, 0.0)]),
    }


def _support_box(category: str) -> OrientedBox:
    if category == FLOOR:
        return floor_box(bedroom_boundary())
    return OrientedBox([0.0, 0.0, 0.0], ASSETS[category])


def mode_mixture(key: RelationKey, modes: list[Mode]) -> MixtureOfLogistics:
    support = _support_box(key.support)
    dep_size = np.array(ASSETS[key.dependent])
    noise = CENTER_NOISE if key.support == FLOOR else SMALL_CENTER_NOISE
    loc, scale = [], []
    for m in modes:
        world = np.concatenate([support.center + np.array(m.offset), dep_size, yaw_rotation(np.radians(m.yaw_deg))])
        loc.append(to_local_vector(support, world))
        scale.append(np.concatenate([
            np.full(3, noise) / support.size,
            SIZE_NOISE * dep_size / support.size,
            np.full(6, ROTATION_NOISE),
        ]))
    w = np.array([m.weight for m in modes])
    return MixtureOfLogistics(w / w.sum(), np.array(loc), np.array(scale))


def ground_truth_table() -> PredictorTable:
    entries = {key: mode_mixture(key, modes) for key, modes in _ground_truth_modes().items()}
    return PredictorTable(entries, {key: 0 for key in entries}, min_count=1)


def synthetic_corpus(
    n_scenes: int,
    seed: int = 0,
    config: AssemblyConfig | None = None,
) -> list[Scene]:
    """Scenes assembled from the ground-truth table with known support/functional fields.

    The relation fields are kept so callers can score curation against them;
    curation itself never reads them.
    """
    config = config or AssemblyConfig()
    table = ground_truth_table()
    stats = bedroom_stats()
    scenes = []
    for i in range(n_scenes):
        rng = scene_rng(seed, i)
        spec = generate("bedroom", stats, N_MAX, K_GEN, rng, {"bedroom": TEMPLATE})
        scene, _ = assemble(spec, table, ASSETS, bedroom_boundary(), config, rng, scene_id=f"raw_{i:04d}")
        scenes.append(scene)
    return scenes


def strip_relations(scene: Scene) -> Scene:
    """A raw copy: boxes and categories only."""
    objs = [SceneObject(o.id, o.category, o.box) for o in scene.objects]
    return replace(scene, objects=objs, report=None)
