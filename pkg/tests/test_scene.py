import json

import numpy as np
import pytest

from procscene.errors import ParseError
from procscene.geometry import OrientedBox, yaw_rotation
from procscene.scene import (
    BOX_TRIANGLES,
    Boundary,
    Scene,
    SceneObject,
    box_mesh,
    export_obj,
    floor_box,
    load_scene,
    load_scene_corpus,
    save_scene,
)
from procscene.spatial import GridIndex


def _scene():
    return Scene("demo", Boundary([-1, -1, 0], [1, 1, 2]), [
        SceneObject("table_1", "table", OrientedBox([0, 0, 0.4], [1, 0.6, 0.8], yaw_rotation(0.2)), "floor"),
        SceneObject("cup_1", "cup", OrientedBox([0.1, 0, 0.85], [0.1, 0.1, 0.1]), "table_1"),
    ])


def test_scene_document_round_trip(tmp_path):
    scene = _scene()
    save_scene(scene, tmp_path / "s.json")
    back = load_scene(tmp_path / "s.json")
    assert back.to_doc() == scene.to_doc()


def test_scene_document_errors(tmp_path):
    doc = _scene().to_doc()
    doc["objects"].append(dict(doc["objects"][0]))
    with pytest.raises(ParseError, match="unique"):
        Scene.from_doc(doc)
    doc = _scene().to_doc()
    doc["format_version"] = 2
    with pytest.raises(ParseError):
        Scene.from_doc(doc)
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ParseError):
        load_scene(tmp_path / "bad.json")


def test_corpus_bundle_names_bad_record(tmp_path):
    good = _scene().to_doc()
    bad = dict(good)
    del bad["boundary"]
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps({"scenes": [good, bad]}))
    with pytest.raises(ParseError, match="scene record 1"):
        load_scene_corpus(path)
    path.write_text(json.dumps({"scenes": [good]}))
    assert len(load_scene_corpus(path)) == 1


def test_floor_box_top_is_floor():
    b = Boundary([-2, -3, 0.5], [2, 3, 3])
    fb = floor_box(b)
    assert fb.corners[:, 2].max() == pytest.approx(0.5)
    np.testing.assert_allclose(fb.size[:2], [4, 6])


def test_mesh_triangles_face_outward():
    box = OrientedBox([1, 2, 3], [1, 2, 0.5], np.random.default_rng(0).normal(size=6))
    verts, tris = box_mesh(box)
    assert len(tris) == 12
    for t in tris:
        a, b, c = verts[t]
        normal = np.cross(b - a, c - a)
        assert np.dot(normal, (a + b + c) / 3 - box.center) > 0
    # every edge is shared by exactly two triangles
    edges = {}
    for t in BOX_TRIANGLES:
        for i in range(3):
            e = tuple(sorted((t[i], t[(i + 1) % 3])))
            edges[e] = edges.get(e, 0) + 1
    assert set(edges.values()) == {2}


def test_export_obj_structure():
    text = export_obj(_scene())
    lines = text.splitlines()
    assert [ln for ln in lines if ln.startswith("o ")] == ["o floor", "o table_1", "o cup_1"]
    assert sum(ln.startswith("v ") for ln in lines) == 24
    faces = [list(map(int, ln.split()[1:])) for ln in lines if ln.startswith("f ")]
    assert len(faces) == 36 and min(map(min, faces)) == 1 and max(map(max, faces)) == 24
    assert export_obj(_scene(), include_floor=False).count("\no ") == 2


def test_grid_index_matches_aabb_bruteforce():
    rng = np.random.default_rng(1)
    index = GridIndex(0.3)
    boxes = {}
    for i in range(60):
        b = OrientedBox(rng.uniform(-3, 3, 3), rng.uniform(0.05, 1.0, 3), rng.normal(size=6))
        boxes[f"b{i}"] = b
        index.insert(f"b{i}", b)
    for _ in range(50):
        q = OrientedBox(rng.uniform(-3, 3, 3), rng.uniform(0.05, 1.5, 3), rng.normal(size=6))
        qlo, qhi = q.aabb()
        expect = {k for k, b in boxes.items() if np.all(b.aabb()[0] <= qhi + 1e-6) and np.all(qlo <= b.aabb()[1] + 1e-6)}
        assert set(index.query(q)) == expect
    assert len(index) == 60 and "b3" in index
    with pytest.raises(KeyError):
        index.insert("b3", boxes["b3"])
