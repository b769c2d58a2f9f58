import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfprox import proximity as prox
from rfprox.data import load_builtin
from rfprox.forest import ForestParams, fit_forest
from rfprox.prediction import (
    PredictionError, equivalence_report, prox_weighted_classification, prox_weighted_regression, weights,
    write_results,
)
from rfprox.proximity import ProximityMatrix
from rfprox.experiments import stratified_split
from rfprox.synthetic import friedman, mixed

from conftest import small_classification, small_regression


def P(values, kind=prox.ORIGINAL, diagonal=None):
    return ProximityMatrix(kind, np.asarray(values, dtype=float), diagonal=diagonal)


def test_one_hot_row():
    assert prox_weighted_regression(P([[0, 0, 1.0]]), [5.0, 6.0, 7.0]).tolist() == [7.0]


def test_uniform_row():
    assert prox_weighted_regression(P([[0.5, 0.5]]), [1.0, 3.0]).tolist() == [2.0]


def test_unnormalised_rows_are_normalised():
    assert prox_weighted_regression(P([[2.0, 2.0]]), [1.0, 3.0]).tolist() == [2.0]


def test_all_zero_row_is_missing():
    out = prox_weighted_regression(P([[0.0, 0.0], [1.0, 0.0]]), [1.0, 3.0])
    assert np.isnan(out[0]) and out[1] == 1.0
    yhat, tied = prox_weighted_classification(P([[0.0, 0.0]]), [0, 1], 2)
    assert yhat.tolist() == [-1] and not tied[0]


def test_classification_mass_on_class_two():
    yhat, tied = prox_weighted_classification(P([[0.1, 0.0, 0.9]]), [0, 1, 2], 3)
    assert yhat.tolist() == [2] and not tied[0]


def test_exact_tie_smallest_code():
    yhat, tied = prox_weighted_classification(P([[0.5, 0.5, 0.0]]), [2, 1, 0], 3)
    assert yhat.tolist() == [1] and tied[0]


def test_diagonal_excluded_for_training_matrices():
    p = P([[1.0, 0.5], [0.5, 1.0]], diagonal=prox.IDENTITY)
    assert prox_weighted_regression(p, [10.0, 20.0]).tolist() == [20.0, 10.0]


def test_bad_inputs():
    with pytest.raises(PredictionError):
        prox_weighted_classification(P([[1.0, 0.0]]), [0, 3], 2)
    with pytest.raises(PredictionError):
        prox_weighted_regression(P([[1.0, 0.0]]), [1.0])
    with pytest.raises(PredictionError):
        weights(P([[0.3, 0.3]], kind=prox.GAP))


def test_gap_weights_used_unchanged(iris, iris_forest):
    p = prox.prox_gap(iris_forest, iris.X)
    W, empty = weights(p)
    np.testing.assert_array_equal(W, p.values)


def test_iris_gap_equivalence(iris):
    f = fit_forest(iris, ForestParams(n_trees=500, seed=2))
    rep = equivalence_report(f, iris, prox.GAP)
    assert rep.mismatch == 0.0 and rep.untied_mismatch == 0.0
    assert rep.error == rep.forest_error


@pytest.mark.parametrize("node", [1, 5, 10, 20, 50])
def test_regression_equivalence_any_node_size(node):
    ds = friedman(200, node)
    f = fit_forest(ds, ForestParams(n_trees=150, seed=node, min_node_size=node))
    rep = equivalence_report(f, ds, prox.GAP)
    assert rep.max_abs_diff < 1e-10 and rep.mismatch == 0


@settings(max_examples=20, deadline=None)
@given(n=st.integers(8, 60), trees=st.integers(1, 40), seed=st.integers(0, 10**6), reg=st.booleans())
def test_equivalence_property(n, trees, seed, reg):
    ds = small_regression(n, seed) if reg else small_classification(n, seed)
    f = fit_forest(ds, ForestParams(n_trees=trees, seed=seed, min_node_size=1))
    rep = equivalence_report(f, ds, prox.GAP)
    if rep.defined.any():
        assert rep.mismatch == 0
    assert (rep.defined == (f.oob_tree_counts > 0)).all()


@pytest.mark.parametrize("ds", [load_builtin("glass"), mixed(200, 1), friedman(150, 2)], ids=lambda d: d.name)
def test_test_rows_match_predict(ds):
    train, test = stratified_split(ds, 0.7, 3)
    f = fit_forest(train, ForestParams(n_trees=100, seed=3))
    rep = equivalence_report(f, train, prox.GAP, test)
    assert rep.split == "test" and rep.mismatch == 0
    if f.classification:
        np.testing.assert_array_equal(rep.predictions, f.predict(test.X))


def test_original_overfits_training_rows():
    ds = load_builtin("sonar")
    f = fit_forest(ds, ForestParams(n_trees=300, seed=1))
    gap = equivalence_report(f, ds, prox.GAP)
    orig = equivalence_report(f, ds, prox.ORIGINAL)
    assert orig.mismatch > 0
    assert orig.error < gap.error


def test_min_node_size_classification_reports_only(iris):
    f = fit_forest(iris, ForestParams(n_trees=100, seed=0, min_node_size=20))
    rep = equivalence_report(f, iris, prox.GAP)
    assert 0 <= rep.mismatch <= 1


def test_report_exports(tmp_path, iris, iris_forest):
    rep = equivalence_report(iris_forest, iris, prox.OOB)
    rep.write_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert len(doc["rows"]) == 150 and doc["kind"] == "oob"
    write_results([rep.summary()], tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert rows[0]["dataset"] == "iris" and rows[0]["split"] == "train"
    assert {"dataset", "kind", "seed", "split", "mismatch", "ties"} <= set(rows[0])
