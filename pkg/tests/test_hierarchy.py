import json

import numpy as np
import pytest

from procscene.errors import ParseError, UnknownSceneType, ValidationError
from procscene.fixtures import K_GEN, N_MAX, TEMPLATE, bedroom_stats
from procscene.hierarchy import (
    HierarchySpec,
    RelationalTuple,
    StatTables,
    base_template,
    category_of,
    generate,
    is_causal,
    load_stats,
    parse_hierarchy,
    save_stats,
    serialize,
    to_document,
)

NESTED_EXAMPLE = {
    "support_tree": [
        {"parent": "Floor", "child": "Object_A"},
        {"parent": "Object_A", "child": "Object_B"},
    ],
    "functional_trees": [
        {
            "support_anchor": "Object_A",
            "edges": [
                {"parent": "Object_A", "child": "Object_B"},
                {"parent": "Object_B", "child": "Object_C"},
            ],
        }
    ],
}


def _desk_spec():
    spec = HierarchySpec()
    spec.add("table_1", "floor", category="table")
    spec.add("laptop_1", "table_1", category="laptop")
    spec.add("keyboard_1", "table_1", "laptop_1", category="keyboard")
    return spec


def test_category_of():
    assert category_of("desk_12") == "desk"
    assert category_of("coffee_table_3") == "coffee_table"
    assert category_of("Object_A") == "Object_A"


def test_serialize_hand_walk():
    assert serialize(_desk_spec()) == [
        RelationalTuple("table_1", "floor", None),
        RelationalTuple("laptop_1", "table_1", None),
        RelationalTuple("keyboard_1", "table_1", "laptop_1"),
    ]


def test_serialize_floor_only():
    assert serialize(HierarchySpec()) == []


def test_serialize_orders_bfs_then_dfs():
    spec = HierarchySpec()
    spec.add("a", "floor")
    spec.add("b", "floor")
    spec.add("a1", "a")
    spec.add("b1", "b")
    spec.add("c", "floor", "a")
    spec.add("a2", "a", "a1")
    order = [t.dependent for t in serialize(spec)]
    # floor's functional tree first (a, c under a, then b), then a's surface, then b's
    assert order == ["a", "c", "b", "a1", "a2", "b1"]
    assert is_causal(serialize(spec))


def test_is_causal_detects_violation():
    assert not is_causal([RelationalTuple("x", "y"), RelationalTuple("y", "floor")])
    assert not is_causal([RelationalTuple("x", "floor", "y"), RelationalTuple("y", "floor")])


def test_nested_example_is_accepted():
    spec = parse_hierarchy(NESTED_EXAMPLE)
    assert spec.support.parent == {"Object_A": "floor", "Object_B": "Object_A", "Object_C": "Object_A"}
    assert [(t.dependent, t.support, t.functional) for t in serialize(spec)] == [
        ("Object_A", "floor", None),
        ("Object_B", "Object_A", None),
        ("Object_C", "Object_A", "Object_B"),
    ]


def test_document_round_trip():
    spec = parse_hierarchy(json.dumps(NESTED_EXAMPLE))
    again = parse_hierarchy(to_document(spec))
    assert serialize(again) == serialize(spec)


@pytest.mark.parametrize(
    "doc, edge",
    [
        ({"support_tree": [{"parent": "Floor", "child": "a"}, {"parent": "Floor", "child": "a"}]}, ("floor", "a")),
        ({"support_tree": [{"parent": "x", "child": "a"}]}, None),
        ({"support_tree": [{"parent": "a", "child": "b"}, {"parent": "b", "child": "a"}]}, None),
        (
            {
                "support_tree": [
                    {"parent": "Floor", "child": "t"},
                    {"parent": "Floor", "child": "s"},
                    {"parent": "t", "child": "cup"},
                    {"parent": "s", "child": "lamp"},
                ],
                "functional_trees": [
                    {"support_anchor": "t", "edges": [{"parent": "lamp", "child": "cup"}]},
                ],
            },
            ("lamp", "cup"),
        ),
    ],
    ids=["double-parent", "ungrounded", "cycle", "cross-surface"],
)
def test_invalid_documents_name_the_edge(doc, edge):
    with pytest.raises(ValidationError) as err:
        parse_hierarchy(doc)
    assert err.value.edge is not None
    if edge is not None:
        assert err.value.edge == edge


def test_malformed_documents():
    with pytest.raises(ParseError):
        parse_hierarchy("{not json")
    with pytest.raises(ParseError):
        parse_hierarchy({"support_tree": [{"parent": "Floor"}]})
    with pytest.raises(ParseError, match="format version"):
        parse_hierarchy({"format_version": 7, "support_tree": []})


def test_base_template():
    spec = base_template("bedroom", {"bedroom": TEMPLATE})
    assert spec.node_count() == 7
    assert base_template("empty", {"empty": {"support_tree": []}}).node_count() == 1
    with pytest.raises(UnknownSceneType):
        base_template("kitchen", {"bedroom": TEMPLATE})


def test_generate_single_candidate_oracle():
    stats = StatTables({"table": {"laptop": 10}}, {"table": {"laptop": [("keyboard", 10)]}})
    template = {"support_tree": [{"parent": "Floor", "child": "table_1"}, {"parent": "table_1", "child": "laptop_1"}]}
    spec = generate("office", stats, 1, 1.0, np.random.default_rng(0), {"office": template})
    assert spec.support.parent["keyboard_1"] == "table_1"
    assert spec.functional["table_1"].parent["keyboard_1"] == "laptop_1"
    assert spec.node_count() == 4


def test_generate_k_zero_returns_template():
    spec = generate("bedroom", bedroom_stats(), 10, 0.0, np.random.default_rng(0), {"bedroom": TEMPLATE})
    assert to_document(spec) == to_document(base_template("bedroom", {"bedroom": TEMPLATE}))


def test_generate_properties():
    stats = bedroom_stats()
    allowed = stats.categories() | {category_of(e["child"]) for e in TEMPLATE["support_tree"]}
    for seed in range(200):
        n_max = seed % 8
        spec = generate("bedroom", stats, n_max, K_GEN, np.random.default_rng(seed), {"bedroom": TEMPLATE})
        labels = list(spec.support.nodes)
        assert len(labels) == len(set(labels))
        assert spec.node_count() - 7 <= n_max
        assert {spec.category(n) for n in labels} - {"floor"} <= allowed
        assert is_causal(serialize(spec))


def test_generate_is_deterministic():
    def run():
        return to_document(generate("bedroom", bedroom_stats(), N_MAX, K_GEN, np.random.default_rng(42), {"bedroom": TEMPLATE}))

    assert run() == run()


def test_generate_recurses_into_new_nodes():
    # chair -> cushion only becomes reachable once the chair is added
    stats = StatTables(
        {"floor": {"desk": 1, "chair": 1}},
        {"floor": {"desk": [("chair", 1)], "chair": [("cushion", 1)]}},
    )
    template = {"support_tree": [{"parent": "Floor", "child": "desk_1"}]}
    spec = generate("office", stats, 5, 1.0, np.random.default_rng(0), {"office": template})
    assert spec.functional["floor"].parent["cushion_1"] == "chair_1"


def test_stats_round_trip(tmp_path):
    stats = bedroom_stats()
    path = tmp_path / "stats.json"
    save_stats(stats, path)
    assert load_stats(path) == stats
    doc = stats.to_document()
    doc["sup_dep"]["floor"]["bed"] = -1
    with pytest.raises(ParseError):
        StatTables.from_document(doc)
