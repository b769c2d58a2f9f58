import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfprox.data import (
    BUILTIN, CATEGORICAL, ColumnSchema, DataError, TARGET, initialize_impute, load_builtin,
    load_csv, load_table, make_dataset, read_schema_file, remove_mcar, scale_unit, write_csv,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_csv(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,cls\n1,2,x\n3,4,y\n5,6,x\n"))
    assert ds.n_rows == 3 and ds.n_features == 2
    assert ds.task == "classification"
    assert ds.class_labels == ["x", "y"]
    assert ds.y.tolist() == [0, 1, 0]


def test_missing_tokens(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,cls\n1,2,x\n3,,y\nNA,6,x\n"))
    assert ds.missing[1, 1] and ds.missing[2, 0]
    assert ds.missing.sum() == 2
    assert np.isnan(ds.X[1, 1])


def test_non_numeric_in_numeric_column_is_error(tmp_path):
    p = write(tmp_path, "a,b,cls\n1,2,x\n3,?,y\n")
    schema = [ColumnSchema("a"), ColumnSchema("b"), ColumnSchema("cls", CATEGORICAL, TARGET)]
    with pytest.raises(DataError):
        load_csv(p, schema)


def test_inferred_categorical_feature(tmp_path):
    ds = load_csv(write(tmp_path, "a,col,cls\n1,red,x\n3,blue,y\n4,red,y\n"))
    assert ds.is_categorical.tolist() == [False, True]
    assert ds.levels["col"] == ["red", "blue"]
    assert ds.X[:, 1].tolist() == [0.0, 1.0, 0.0]


@pytest.mark.parametrize("text", ["a,b\n", "a,b,c\n1,2\n", "a,b\n1,\n"])
def test_load_errors(tmp_path, text):
    with pytest.raises(DataError):
        load_csv(write(tmp_path, text))


def test_unreadable_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")


def test_schema_file(tmp_path):
    s = write(tmp_path, "a,numeric,feature\nb,categorical,feature\nz,numeric,ignore\ny,numeric,target\n", "s.txt")
    schema = read_schema_file(s)
    ds = load_csv(write(tmp_path, "a,b,z,y\n1,2,9,0.5\n3,2,9,1.5\n"), schema)
    assert ds.task == "regression"
    assert ds.n_features == 2
    assert ds.is_categorical.tolist() == [False, True]


def test_schema_header_mismatch(tmp_path):
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "a,b\n1,2\n"), [ColumnSchema("a"), ColumnSchema("q", role=TARGET)])


def test_iris_shape(iris):
    assert (iris.n_rows, iris.n_features, iris.n_classes) == (150, 4, 3)


@pytest.mark.parametrize("name", BUILTIN)
def test_builtins_load_complete(name):
    ds = load_builtin(name)
    assert ds.n_rows > 100 and not ds.missing.any()


def test_load_table_dispatch():
    assert load_table("builtin:sonar").n_features == 60
    assert load_table("synthetic:clusters:20:1").n_rows == 20
    with pytest.raises(DataError):
        load_table("synthetic:nope")


def test_write_csv_roundtrip(tmp_path, small_mixed):
    p = tmp_path / "out.csv"
    write_csv(small_mixed, p)
    # numeric-looking class labels would infer a regression target
    back = load_csv(p, list(small_mixed.schema))
    labels = lambda ds: [ds.class_labels[int(k)] for k in ds.y]
    assert labels(back) == labels(small_mixed)
    assert back.is_categorical.tolist() == small_mixed.is_categorical.tolist()
    np.testing.assert_array_equal(back.X[:, :2], small_mixed.X[:, :2])


# -- MCAR ---------------------------------------------------------------------


def test_mcar_count_small():
    ds = make_dataset(np.arange(40.0).reshape(10, 4), [0, 1] * 5)
    masked, rec = remove_mcar(ds, 0.25, seed=3)
    assert masked.missing.sum() == 10 == len(rec.rows)


def test_mcar_iris_count_and_determinism(iris):
    a, ra = remove_mcar(iris, 0.05, 7)
    b, rb = remove_mcar(iris, 0.05, 7)
    assert a.missing.sum() == 30
    np.testing.assert_array_equal(a.missing, b.missing)
    np.testing.assert_array_equal(ra.values, iris.X[ra.rows, ra.cols])
    np.testing.assert_array_equal(a.y, iris.y)


@pytest.mark.parametrize("f", [0.0, 1.0, -0.1, 1.5])
def test_mcar_bad_fraction(iris, f):
    with pytest.raises(DataError):
        remove_mcar(iris, f, 0)


def test_mcar_rejects_already_missing(iris):
    masked, _ = remove_mcar(iris, 0.1, 0)
    with pytest.raises(DataError):
        remove_mcar(masked, 0.1, 1)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 30), d=st.integers(1, 6), f=st.floats(0.01, 0.99), seed=st.integers(0, 10**6))
def test_mcar_property(n, d, f, seed):
    ds = make_dataset(np.arange(n * d, dtype=float).reshape(n, d), np.arange(n) % 2)
    masked, rec = remove_mcar(ds, f, seed)
    assert masked.missing.sum() == round(f * n * d)
    assert len(set(zip(rec.rows.tolist(), rec.cols.tolist()))) == len(rec.rows)
    assert masked.missing[rec.rows, rec.cols].all()


# -- initial fill -------------------------------------------------------------


def test_in_class_median():
    X = np.array([[1.0], [3.0], [np.nan], [100.0]])
    ds = make_dataset(X, ["A", "A", "A", "B"])
    out = initialize_impute(ds)
    assert out.X[2, 0] == 2.0
    assert not out.missing.any() and out.original_missing[2, 0]


def test_regression_global_median():
    X = np.array([[1.0], [2.0], [3.0], [4.0], [np.nan]])
    out = initialize_impute(make_dataset(X, [1.0, 2, 3, 4, 5], "regression"))
    assert out.X[4, 0] == 2.5


def test_class_without_donor_falls_back_to_global():
    X = np.array([[1.0], [5.0], [np.nan]])
    out = initialize_impute(make_dataset(X, ["A", "A", "B"]))
    assert out.X[2, 0] == 3.0


def test_categorical_mode_ties_to_smallest_code():
    X = np.array([[1.0], [0.0], [np.nan], [2.0]])
    ds = make_dataset(X, ["A", "A", "A", "B"], categorical=[0])
    assert initialize_impute(ds).X[2, 0] == 0.0


def test_no_missing_is_identity(iris):
    assert initialize_impute(iris) is iris


def test_entirely_missing_column():
    X = np.array([[1.0, np.nan], [2.0, np.nan]])
    with pytest.raises(DataError):
        initialize_impute(make_dataset(X, ["A", "B"]))


@settings(max_examples=30, deadline=None)
@given(f=st.floats(0.05, 0.6), seed=st.integers(0, 10**6))
def test_initialize_keeps_observed_cells(iris, f, seed):
    masked, _ = remove_mcar(iris, f, seed)
    out = initialize_impute(masked)
    obs = ~masked.missing
    np.testing.assert_array_equal(out.X[obs], masked.X[obs])
    assert not np.isnan(out.X).any()


# -- scaling -------------------------------------------------------------------


def test_scale_examples():
    X = np.array([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]])
    out, sc = scale_unit(make_dataset(X, [0, 1, 0]))
    assert out.X[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert out.X[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_scale_leaves_categorical(small_mixed):
    out, _ = scale_unit(small_mixed)
    np.testing.assert_array_equal(out.X[:, 2], small_mixed.X[:, 2])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=20))
def test_scale_roundtrip(vals):
    X = np.array(vals).reshape(-1, 1)
    ds = make_dataset(X, np.arange(len(vals)) % 2)
    out, sc = scale_unit(ds)
    assert out.X.min() >= 0 and out.X.max() <= 1
    back = sc.inverse(out.X)
    if sc.span[0] > 0:
        np.testing.assert_allclose(back, X, rtol=1e-12, atol=1e-12 * sc.span[0])
