"""Relation tuple records and their line-delimited JSON storage."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import ParseError
from .geometry import OrientedBox

FLOOR = "floor"


def box_to_doc(box: OrientedBox) -> dict:
    return {
        "center": [float(v) for v in box.center],
        "size": [float(v) for v in box.size],
        "rotation": [float(v) for v in box.rotation],
    }


def box_from_doc(doc: dict) -> OrientedBox:
    return OrientedBox(doc["center"], doc["size"], doc.get("rotation", [1, 0, 0, 0, 1, 0]))


@dataclass(frozen=True)
class ObjectRef:
    id: str
    category: str
    box: OrientedBox

    def to_doc(self) -> dict:
        return {"id": self.id, "category": self.category, **box_to_doc(self.box)}

    @classmethod
    def from_doc(cls, doc: dict) -> "ObjectRef":
        return cls(str(doc["id"]), str(doc["category"]), box_from_doc(doc))


@dataclass(frozen=True)
class RelationTupleRecord:
    dependent: ObjectRef
    support: ObjectRef
    functional: ObjectRef | None
    source_scene: str

    @property
    def key_labels(self) -> tuple[str, str | None, str]:
        fnc = self.functional.category if self.functional is not None else None
        return (self.support.category, fnc, self.dependent.category)

    def to_doc(self) -> dict:
        return {
            "source_scene": self.source_scene,
            "dependent": self.dependent.to_doc(),
            "support": self.support.to_doc(),
            "functional": None if self.functional is None else self.functional.to_doc(),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RelationTupleRecord":
        fnc = doc.get("functional")
        return cls(
            dependent=ObjectRef.from_doc(doc["dependent"]),
            support=ObjectRef.from_doc(doc["support"]),
            functional=None if fnc is None else ObjectRef.from_doc(fnc),
            source_scene=str(doc["source_scene"]),
        )


def write_records(records: Iterable[RelationTupleRecord], path: str | Path) -> None:
    lines = [json.dumps(r.to_doc(), separators=(",", ":")) for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_records(path: str | Path) -> list[RelationTupleRecord]:
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(RelationTupleRecord.from_doc(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad record: {exc}", line=i) from exc
    return records
