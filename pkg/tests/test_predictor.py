import numpy as np
import pytest

from procscene import mol
from procscene.errors import DegenerateFrame, InsufficientData, ParseError, UnknownRelation
from procscene.fixtures import ground_truth_table
from procscene.geometry import OrientedBox, matrix_to_rotation, yaw_rotation
from procscene.mol import MixtureOfLogistics
from procscene.predictor import (
    PredictorTable,
    RelationKey,
    WorldMixture,
    dumps_params,
    fit_table,
    from_local,
    from_local_vector,
    loads_params,
    predict,
    snap_size,
    to_local,
    to_local_vector,
    training_groups,
)
from procscene.records import ObjectRef, RelationTupleRecord


def _support(yaw=0.7):
    return OrientedBox([1.0, -2.0, 0.4], [1.2, 0.6, 0.8], yaw_rotation(yaw))


def test_local_round_trip():
    rng = np.random.default_rng(0)
    sup = _support()
    for _ in range(50):
        dep = OrientedBox(rng.normal(size=3), rng.uniform(0.1, 2, 3), rng.normal(size=6))
        back = from_local(sup, to_local(sup, dep))
        assert back.allclose(dep, atol=1e-12)
        v = rng.normal(size=12)
        np.testing.assert_allclose(from_local_vector(sup, to_local_vector(sup, v)), v, atol=1e-12)


def test_local_frame_oracle():
    sup = OrientedBox([2.0, 0.0, 0.0], [2.0, 4.0, 1.0], yaw_rotation(np.pi / 2))
    dep = OrientedBox([2.0, 1.0, 0.5], [0.2, 0.2, 0.2], yaw_rotation(np.pi / 2))
    v = to_local(sup, dep)
    # world +y is the support's +x axis after a quarter turn
    np.testing.assert_allclose(v[0:3], [0.5, 0.0, 0.5], atol=1e-12)
    np.testing.assert_allclose(v[3:6], [0.1, 0.05, 0.2], atol=1e-12)
    np.testing.assert_allclose(v[6:12], [1, 0, 0, 0, 1, 0], atol=1e-12)


def test_degenerate_support_frame():
    flat = OrientedBox([0, 0, 0], [1.0, 1.0, 1e-13])
    with pytest.raises(DegenerateFrame):
        to_local(flat, OrientedBox([0, 0, 0], [1, 1, 1]))


def test_world_sampling_is_equivariant():
    local = MixtureOfLogistics([0.5, 0.5], np.zeros((2, 12)) + 0.1, np.full((2, 12), 0.05))
    a, b = _support(0.0), _support(1.3).translated([3.0, 1.0, 0.0])
    xa = WorldMixture(local, a).sample(np.random.default_rng(4), 20)
    xb = WorldMixture(local, b).sample(np.random.default_rng(4), 20)
    np.testing.assert_allclose(to_local_vector(a, xa), to_local_vector(b, xb), atol=1e-12)


def test_world_density_matches_explicit_mixture_for_axis_aligned_support():
    sup = OrientedBox([1.0, 2.0, 0.5], [2.0, 3.0, 1.0], matrix_to_rotation(np.eye(3)[:, [1, 0, 2]] * [1, -1, 1]))
    local = MixtureOfLogistics([0.3, 0.7], np.random.default_rng(1).normal(size=(2, 12)), np.full((2, 12), 0.4))
    wm = WorldMixture(local, sup)
    x = wm.sample(np.random.default_rng(2), 30)
    np.testing.assert_allclose(wm.log_density(x), mol.log_density(wm.as_mixture(), x), atol=1e-9)


def test_snap_size_bounds():
    asset = np.array([1.0, 2.0, 0.5])
    np.testing.assert_allclose(snap_size(asset * 1.05, asset), asset * 1.05)
    np.testing.assert_allclose(snap_size(asset * 3, asset), asset * 1.2)
    np.testing.assert_allclose(snap_size(asset * 0.1, asset), asset * 0.8)


def test_lookup_falls_back_to_coarse_key():
    table = ground_truth_table()
    used, _ = table.lookup(RelationKey("desk", "mouse", "laptop"))
    assert used == RelationKey("desk", None, "laptop")
    used, _ = table.lookup(RelationKey("desk", "laptop", "mouse"))
    assert used == RelationKey("desk", "laptop", "mouse")
    with pytest.raises(UnknownRelation):
        table.lookup(RelationKey("desk", None, "mouse"))
    with pytest.raises(UnknownRelation):
        predict(table, RelationKey("floor", None, "piano"), _support())


def _records(n, rng, sup_cat="desk", fnc_cat=None, dep_cat="cup"):
    support = ObjectRef("s", sup_cat, _support())
    out = []
    for i in range(n):
        dep = OrientedBox(support.box.center + [rng.normal(0, 0.1), rng.normal(0, 0.1), 0.45],
                          [0.08, 0.08, 0.1], yaw_rotation(0.7 + rng.normal(0, 0.05)))
        fnc = None if fnc_cat is None else ObjectRef("f", fnc_cat, support.box)
        out.append(RelationTupleRecord(ObjectRef(f"d{i}", dep_cat, dep), support, fnc, f"scene{i}"))
    return out


def test_training_groups_pool_coarse_keys():
    rng = np.random.default_rng(0)
    recs = _records(5, rng, fnc_cat="laptop") + _records(3, rng)
    groups = training_groups(recs)
    assert len(groups[RelationKey("desk", "laptop", "cup")]) == 5
    assert len(groups[RelationKey("desk", None, "cup")]) == 8


def test_fit_table_min_count_and_determinism():
    rng = np.random.default_rng(1)
    recs = _records(12, rng, fnc_cat="laptop") + _records(4, rng, dep_cat="mouse")
    table = fit_table(recs, k=2, min_count=8, seed=3)
    assert set(table.entries) == {RelationKey("desk", "laptop", "cup"), RelationKey("desk", None, "cup")}
    assert table.counts[RelationKey("desk", None, "cup")] == 12
    again = fit_table(recs, k=2, min_count=8, seed=3, workers=4)
    assert dumps_params(table) == dumps_params(again)
    with pytest.raises(InsufficientData):
        fit_table([])


def test_fitted_entry_beats_broad_baseline():
    recs = _records(200, np.random.default_rng(2))
    table = fit_table(recs, k=2, min_count=8)
    x = training_groups(recs)[RelationKey("desk", None, "cup")]
    fitted = mol.mean_nll(table.entries[RelationKey("desk", None, "cup")], x)
    broad = MixtureOfLogistics([1.0], x.mean(0, keepdims=True), np.ones((1, 12)))
    assert fitted < mol.mean_nll(broad, x)


def test_params_round_trip_bytes():
    table = ground_truth_table()
    text = dumps_params(table)
    back = loads_params(text)
    assert dumps_params(back) == text
    for key, theta in table.entries.items():
        assert back.entries[key].identical(theta)


def test_params_parse_errors():
    text = dumps_params(ground_truth_table())
    lines = text.splitlines()
    first_entry = next(i for i, ln in enumerate(lines) if ln.startswith("entry"))
    with pytest.raises(ParseError, match="format version"):
        loads_params(text.replace("format_version 1", "format_version 2"))
    with pytest.raises(ParseError, match="trailing"):
        loads_params(text + "entry a b c\n")
    dup = list(lines)
    count = int(lines[3].split()[1])
    dup[3] = f"entries {count + 1}"
    block_end = next(i for i in range(first_entry + 1, len(lines)) if lines[i].startswith("entry"))
    dup = dup + lines[first_entry:block_end]
    with pytest.raises(ParseError, match="duplicate"):
        loads_params("\n".join(dup))


def test_empty_table_round_trip():
    table = PredictorTable(min_count=5)
    assert loads_params(dumps_params(table)).min_count == 5
