"""Scene containers, scene documents and box-mesh export."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import ParseError
from .geometry import OrientedBox
from .records import FLOOR, box_from_doc, box_to_doc

FORMAT_VERSION = 1
FLOOR_THICKNESS = 0.1


@dataclass(frozen=True, eq=False)
class Boundary:
    """Axis-aligned room volume."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float).reshape(3)
        hi = np.array(self.hi, dtype=float).reshape(3)
        if np.any(hi <= lo):
            raise ValueError(f"empty boundary: {lo} .. {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def floor_height(self) -> float:
        return float(self.lo[2])

    def contains_box(self, box: OrientedBox, tol: float = 1e-9) -> bool:
        corners = box.corners
        return bool(np.all(corners >= self.lo - tol) and np.all(corners <= self.hi + tol))

    def to_doc(self) -> dict:
        return {"min": [float(v) for v in self.lo], "max": [float(v) for v in self.hi]}

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Boundary":
        return cls(doc["min"], doc["max"])

    def __eq__(self, other) -> bool:
        return isinstance(other, Boundary) and np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)


def floor_box(boundary: Boundary) -> OrientedBox:
    """Slab under the room whose top face is the floor plane."""
    lo, hi = boundary.lo, boundary.hi
    center = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, lo[2] - FLOOR_THICKNESS / 2]
    size = [hi[0] - lo[0], hi[1] - lo[1], FLOOR_THICKNESS]
    return OrientedBox(center, size)


@dataclass(frozen=True)
class SceneObject:
    id: str
    category: str
    box: OrientedBox
    support: str | None = None
    functional: str | None = None

    def to_doc(self) -> dict:
        doc = {"id": self.id, "category": self.category, **box_to_doc(self.box)}
        doc["support"] = self.support
        doc["functional"] = self.functional
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping) -> "SceneObject":
        return cls(
            id=str(doc["id"]),
            category=str(doc["category"]),
            box=box_from_doc(doc),
            support=doc.get("support"),
            functional=doc.get("functional"),
        )


@dataclass
class Scene:
    """A placed scene. ``objects`` excludes the floor, which is implied by ``boundary``."""

    id: str
    boundary: Boundary
    objects: list[SceneObject] = field(default_factory=list)
    report: dict[str, Any] | None = None

    @property
    def floor(self) -> OrientedBox:
        return floor_box(self.boundary)

    def get(self, object_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def boxes(self) -> list[OrientedBox]:
        return [o.box for o in self.objects]

    def to_doc(self) -> dict:
        doc = {
            "format_version": FORMAT_VERSION,
            "scene_id": self.id,
            "boundary": self.boundary.to_doc(),
            "objects": [o.to_doc() for o in self.objects],
        }
        if self.report is not None:
            doc["report"] = self.report
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Scene":
        version = doc.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ParseError(f"unsupported format version {version!r}", field="format_version")
        try:
            objects = [SceneObject.from_doc(o) for o in doc.get("objects", [])]
            scene = cls(str(doc["scene_id"]), Boundary.from_doc(doc["boundary"]), objects, doc.get("report"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed scene document: {exc}") from exc
        ids = [o.id for o in objects]
        if len(set(ids)) != len(ids) or FLOOR in ids:
            raise ParseError("object ids must be unique and not 'floor'", field="objects")
        return scene


def dumps_json(doc: Any) -> str:
    return json.dumps(doc, indent=2) + "\n"


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_scene(scene: Scene, path: str | Path) -> None:
    write_atomic(path, dumps_json(scene.to_doc()))


def load_scene(path: str | Path) -> Scene:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from exc
    return Scene.from_doc(doc)


def load_scene_corpus(path: str | Path) -> list[Scene]:
    """Read a directory of scene documents or one ``{"scenes": [...]}`` document."""
    path = Path(path)
    if path.is_dir():
        scenes = []
        for p in sorted(path.glob("*.json")):
            if p.name.startswith("."):
                continue
            try:
                scenes.append(load_scene(p))
            except ParseError as exc:
                raise ParseError(f"scene record {p.name}: {exc}", field=p.name) from exc
        return scenes
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from exc
    if isinstance(doc, Mapping) and "scenes" in doc:
        if doc.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise ParseError("unsupported format version", field="format_version")
        scenes = []
        for i, s in enumerate(doc["scenes"]):
            try:
                scenes.append(Scene.from_doc(s))
            except ParseError as exc:
                raise ParseError(f"scene record {i}: {exc}", field=f"scenes[{i}]") from exc
        return scenes
    return [Scene.from_doc(doc)]


# 12 outward-facing triangles over geometry.CORNER_SIGNS ordering (x, y, z bits = 4, 2, 1)
BOX_TRIANGLES = np.array([
    [0, 1, 3], [0, 3, 2],  # -x
    [4, 6, 7], [4, 7, 5],  # +x
    [0, 4, 5], [0, 5, 1],  # -y
    [2, 3, 7], [2, 7, 6],  # +y
    [0, 2, 6], [0, 6, 4],  # -z
    [1, 5, 7], [1, 7, 3],  # +z
])


def box_mesh(box: OrientedBox) -> tuple[np.ndarray, np.ndarray]:
    return box.corners.copy(), BOX_TRIANGLES.copy()


def export_obj(scene: Scene, include_floor: bool = True) -> str:
    """Wavefront OBJ with one named cuboid group per object."""
    items: Iterable[tuple[str, OrientedBox]] = [(o.id, o.box) for o in scene.objects]
    if include_floor:
        items = [(FLOOR, scene.floor), *items]
    lines = [f"# scene {scene.id}"]
    offset = 1
    for name, box in items:
        verts, tris = box_mesh(box)
        lines.append(f"o {name}")
        lines.extend("v " + " ".join(format(float(c), ".9g") for c in v) for v in verts)
        lines.extend("f " + " ".join(str(int(i) + offset) for i in t) for t in tris)
        offset += len(verts)
    return "\n".join(lines) + "\n"

