import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavemark.data import (CsvSchema, DataError, GROUP_ALIVE, GROUP_DEAD, GroupedData, SampleTable, Status,
                           load_csv, normalize, normalize_rows, prune_missing, select_markers, split_groups,
                           standardize_columns, write_csv)


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _table(values, months=None, status=None, names=None):
    values = np.asarray(values, dtype=float)
    n, d = values.shape
    missing = np.isnan(values)
    return SampleTable(names or [f"m{j}" for j in range(d)], values, missing,
                       np.full(n, 10.0) if months is None else months,
                       status or [Status.ALIVE] * n)


def test_load_simple_file(tmp_path):
    p = _write(tmp_path, "survival_months,status,a,b\n12,dead,1.5,2\n80,alive,3,4\n45,dead_other,5,6\n")
    t = load_csv(p)
    assert t.values.shape == (3, 2)
    assert t.marker_names == ["a", "b"]
    assert t.status == [Status.DEAD_OF_DISEASE, Status.ALIVE, Status.DEAD_OTHER_CAUSE]
    np.testing.assert_array_equal(t.survival_months, [12, 80, 45])
    assert not t.missing.any()


def test_empty_cell_is_flagged(tmp_path):
    p = _write(tmp_path, "survival_months,status,a,b\n12,dead,,2\n80,alive,3,4\n")
    t = load_csv(p)
    assert t.missing[0, 0] and not t.missing[0, 1]
    assert np.isnan(t.values[0, 0])


@pytest.mark.parametrize("body, fragment", [
    ("12,dead,1,2\n-3,alive,1,2\n", ":3:"),           # negative survival time
    ("12,dead,1,2\n80,alive,1\n", ":3:"),             # wrong field count
    ("12,dead,1,2\n80,unknown,1,2\n", "unknown status"),
    ("12,dead,x,2\n", ":2:"),
])
def test_load_errors(tmp_path, body, fragment):
    p = _write(tmp_path, "survival_months,status,a,b\n" + body)
    with pytest.raises(DataError, match=fragment):
        load_csv(p)


def test_schema_roles_and_tokens(tmp_path):
    p = _write(tmp_path, "pid,months,state,note,a\nP1,5,D,x,1\nP2,90,A,y,2\n")
    schema = CsvSchema(time="months", status="state", id="pid", ignore=["note"],
                       status_tokens={"D": Status.DEAD_OF_DISEASE, "A": Status.ALIVE})
    t = load_csv(p, schema)
    assert t.marker_names == ["a"]
    assert t.sample_ids == ["P1", "P2"]
    with pytest.raises(DataError, match="not in header"):
        load_csv(p, CsvSchema(time="months", status="state", id="missing_col"))


def test_csv_round_trip(tmp_path):
    t = _table([[1.25, np.nan], [3.0, 4.0]], months=np.array([1.5, 99.0]),
               status=[Status.DEAD_OF_DISEASE, Status.ALIVE])
    p = tmp_path / "out.csv"
    write_csv(t, p)
    back = load_csv(p, CsvSchema(id="patient_id"))
    np.testing.assert_array_equal(back.missing, t.missing)
    np.testing.assert_array_equal(back.values[~back.missing], t.values[~t.missing])
    np.testing.assert_array_equal(back.survival_months, t.survival_months)
    assert back.status == t.status


def test_table_invariants():
    with pytest.raises(DataError):
        _table([[1.0]], months=np.array([-1.0]))
    with pytest.raises(DataError):
        SampleTable(["a"], np.ones((2, 1)), np.zeros((2, 1), bool), np.ones(3), [Status.ALIVE] * 2)


def test_prune_without_missing_is_identity():
    t = _table(np.arange(12.0).reshape(4, 3))
    p = prune_missing(t, 0.5)
    np.testing.assert_array_equal(p.values, t.values)
    assert p.marker_names == t.marker_names


def test_prune_hand_example():
    nan = np.nan
    # m1 is missing in 3 of 4 rows (75% > 50%) and is dropped; row 0 still misses m0 and is dropped
    t = _table([[nan, nan, 1.0],
                [1.0, nan, 2.0],
                [2.0, nan, 3.0],
                [3.0, 5.0, 4.0]])
    p = prune_missing(t, 0.5)
    assert p.marker_names == ["m0", "m2"]
    np.testing.assert_array_equal(p.values, [[1, 2], [2, 3], [3, 4]])
    assert not p.missing.any()


def test_prune_errors():
    nan = np.nan
    with pytest.raises(DataError):
        prune_missing(_table([[nan, nan], [nan, 1.0], [nan, nan]]), 0.5)
    with pytest.raises(ValueError):
        prune_missing(_table([[1.0]]), 1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_prune_is_idempotent(seed, threshold):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(12, 6))
    v[rng.uniform(size=v.shape) < 0.2] = np.nan
    try:
        once = prune_missing(_table(v), threshold)
    except DataError:
        return
    twice = prune_missing(once, threshold)
    assert twice.marker_names == once.marker_names
    np.testing.assert_array_equal(twice.values, once.values)


def test_standardize_column():
    z = standardize_columns(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(z[:, 0], [-1, 0, 1])


def test_normalize_two_steps():
    rng = np.random.default_rng(1)
    X = rng.normal(3, 2, size=(40, 7))
    Z = standardize_columns(X)
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(Z.var(axis=0, ddof=1) - 1) < 1e-9)
    y = np.array([0, 1] * 20)
    g = normalize(GroupedData(X, y, [f"m{i}" for i in range(7)]))
    assert np.all(np.abs(np.linalg.norm(g.X, axis=1) - 1) < 1e-12)
    np.testing.assert_allclose(g.X, Z / np.linalg.norm(Z, axis=1, keepdims=True))


def test_single_row_is_scaled_to_unit_norm():
    r = normalize_rows(np.array([[3.0, 4.0]]))
    np.testing.assert_allclose(r, [[0.6, 0.8]])


def test_normalize_errors():
    X = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    with pytest.raises(DataError, match="const"):
        normalize(GroupedData(X, [0, 1, 0], ["ok", "const"]))
    with pytest.raises(DataError, match="zero row"):
        normalize_rows(np.array([[0.0, 0.0], [1.0, 2.0]]))


def test_split_groups_windows():
    months = np.array([12.0, 80.0, 50.0, 10.0, 29.9, 70.0])
    status = [Status.DEAD_OF_DISEASE, Status.ALIVE, Status.ALIVE, Status.DEAD_OTHER_CAUSE,
              Status.DEAD_OF_DISEASE, Status.ALIVE]
    t = _table(np.arange(12.0).reshape(6, 2), months=months, status=status)
    t.sample_ids = [f"s{i}" for i in range(6)]
    g = split_groups(t)
    assert g.sample_ids == ["s0", "s1", "s4"]
    np.testing.assert_array_equal(g.y, [GROUP_DEAD, GROUP_ALIVE, GROUP_DEAD])
    g2 = split_groups(t, markers=["m1"])
    assert g2.X.shape == (3, 1)


def test_split_groups_errors():
    t = _table(np.ones((2, 1)), months=np.array([12.0, 50.0]), status=[Status.DEAD_OF_DISEASE, Status.ALIVE])
    with pytest.raises(DataError, match="alive"):
        split_groups(t)
    t2 = _table([[np.nan], [1.0], [2.0]], months=np.array([12.0, 80.0, 5.0]),
                status=[Status.DEAD_OF_DISEASE, Status.ALIVE, Status.DEAD_OF_DISEASE])
    with pytest.raises(DataError, match="missing"):
        split_groups(t2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_split_rows_are_disjoint_subset(seed):
    rng = np.random.default_rng(seed)
    n = 30
    months = rng.uniform(0, 116, size=n)
    status = list(rng.choice(list(Status), size=n))
    t = _table(rng.normal(size=(n, 3)), months=months, status=status)
    t.sample_ids = [f"s{i}" for i in range(n)]
    try:
        g = split_groups(t)
    except DataError:
        return
    assert len(set(g.sample_ids)) == len(g.sample_ids) <= n
    assert set(g.sample_ids) <= set(t.sample_ids)


def test_select_markers_globs():
    names = ["prot_001", "prot_002", "clin_age", "sparse_1"]
    assert select_markers(names, ["prot_*"]) == ["prot_001", "prot_002"]
    assert select_markers(names, None, ["sparse_*", "clin_*"]) == ["prot_001", "prot_002"]
    assert select_markers(names, ["*"], ["prot_00[1]"]) == ["prot_002", "clin_age", "sparse_1"]


def test_grouped_data_requires_two_classes():
    with pytest.raises(DataError):
        GroupedData(np.ones((3, 1)), [0, 0, 0], ["a"])
