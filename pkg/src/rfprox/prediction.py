"""Proximity-weighted prediction and the forest-equivalence harness."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import proximity as prox
from .data import Dataset
from .forest import TIE_TOL, Forest, vote
from .proximity import ProximityMatrix

REGRESSION_MISMATCH = 1e-8
ROW_SUM_TOL = 1e-10


class PredictionError(ValueError):
    pass


def weights(p: ProximityMatrix, exclude_diagonal: bool | None = None):
    """Rows usable as prediction weights.

    RF-GAP rows are used as they are (checked to sum to one); other kinds
    are L1-normalised, with the self-proximity removed first for
    training-by-training matrices.  Returns the weight matrix and a mask
    of rows whose weights are all zero.
    """
    V = sparse.csr_matrix(p.values) if p.is_sparse else np.array(p.values, dtype=np.float64)
    if exclude_diagonal is None:
        # a diagonal policy marks a training-by-training matrix
        exclude_diagonal = p.diagonal is not None
    if exclude_diagonal:
        if sparse.issparse(V):
            V = V.tolil()
            V.setdiag(0)
            V = V.tocsr()
            V.eliminate_zeros()
        else:
            np.fill_diagonal(V, 0.0)
    sums = np.asarray(V.sum(axis=1)).ravel()
    empty = sums <= 0
    if p.kind == prox.GAP:
        live = ~empty
        if not np.all(np.abs(sums[live] - 1.0) <= ROW_SUM_TOL):
            raise PredictionError("RF-GAP rows do not sum to one")
        return V, empty
    scale = np.where(empty, 0.0, 1.0 / np.where(empty, 1.0, sums))
    if sparse.issparse(V):
        V = sparse.diags(scale) @ V
    else:
        V = V * scale[:, None]
    return V, empty


def prox_weighted_regression(p: ProximityMatrix, y: np.ndarray) -> np.ndarray:
    """sum_j w(i, j) y_j per row; all-zero rows give NaN."""
    W, empty = weights(p)
    y = np.asarray(y, dtype=np.float64)
    if W.shape[1] != len(y):
        raise PredictionError("proximity columns do not match the label vector")
    out = np.asarray(W @ y, dtype=np.float64).ravel()
    out[empty] = np.nan
    return out


def class_scores(p: ProximityMatrix, y: np.ndarray, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    W, empty = weights(p)
    y = np.asarray(y, dtype=np.int64)
    if W.shape[1] != len(y):
        raise PredictionError("proximity columns do not match the label vector")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise PredictionError("class codes outside [0, K)")
    onehot = np.zeros((len(y), n_classes))
    onehot[np.arange(len(y)), y] = 1.0
    return np.asarray(W @ onehot), empty


def prox_weighted_classification(p: ProximityMatrix, y: np.ndarray, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Weighted-majority vote; ties (within 1e-9) go to the smallest class code.

    Returns class codes (-1 for all-zero rows) and tie flags.
    """
    scores, empty = class_scores(p, y, n_classes)
    yhat, tied = vote(scores, TIE_TOL)
    yhat[empty] = -1
    tied[empty] = False
    return yhat, tied


@dataclass
class PredictionReport:
    dataset: str
    kind: str
    split: str
    task: str
    predictions: np.ndarray
    forest_predictions: np.ndarray
    proximity_ties: np.ndarray
    forest_ties: np.ndarray
    defined: np.ndarray
    y: np.ndarray
    seed: int = 0
    n_trees: int = 0
    min_node_size: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def mismatched(self) -> np.ndarray:
        if self.task == "classification":
            bad = self.predictions != self.forest_predictions
        else:
            with np.errstate(invalid="ignore"):
                bad = ~(np.abs(self.predictions - self.forest_predictions) <= REGRESSION_MISMATCH)
        return bad & self.defined

    @property
    def mismatch(self) -> float:
        n = int(self.defined.sum())
        return float(self.mismatched.sum() / n) if n else float("nan")

    @property
    def tie_count(self) -> int:
        return int(((self.proximity_ties | self.forest_ties) & self.defined).sum())

    @property
    def untied_mismatch(self) -> float:
        ok = self.defined & ~(self.proximity_ties | self.forest_ties)
        n = int(ok.sum())
        return float((self.mismatched & ok).sum() / n) if n else float("nan")

    @property
    def max_abs_diff(self) -> float:
        if self.task != "regression" or not self.defined.any():
            return float("nan")
        d = self.defined
        return float(np.max(np.abs(self.predictions[d] - self.forest_predictions[d])))

    def _error(self, pred: np.ndarray) -> float:
        d = self.defined & ((pred >= 0) if self.task == "classification" else ~np.isnan(pred))
        if not d.any():
            return float("nan")
        if self.task == "classification":
            return float(np.mean(pred[d] != self.y[d]))
        return float(np.mean((pred[d] - self.y[d]) ** 2))

    @property
    def error(self) -> float:
        """Error of the proximity-weighted predictions against the labels."""
        return self._error(self.predictions)

    @property
    def forest_error(self) -> float:
        return self._error(self.forest_predictions)

    def summary(self) -> dict:
        return {
            "dataset": self.dataset,
            "kind": self.kind,
            "seed": self.seed,
            "split": self.split,
            "mismatch": self.mismatch,
            "ties": self.tie_count,
            "task": self.task,
            "n_trees": self.n_trees,
            "min_node_size": self.min_node_size,
            "error": self.error,
            "forest_error": self.forest_error,
            "untied_mismatch": self.untied_mismatch,
            "max_abs_diff": self.max_abs_diff,
            "n_rows": int(self.defined.size),
            "n_defined": int(self.defined.sum()),
        }

    def to_json(self) -> dict:
        rows = [
            {
                "row": i,
                "predicted": _jsonable(self.predictions[i]),
                "forest_predicted": _jsonable(self.forest_predictions[i]),
                "tied": bool(self.proximity_ties[i] or self.forest_ties[i]),
                "defined": bool(self.defined[i]),
            }
            for i in range(len(self.predictions))
        ]
        return {**self.summary(), "meta": self.meta, "rows": rows}

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    v = v.item() if hasattr(v, "item") else v
    if isinstance(v, float) and np.isnan(v):
        return None
    return v


RESULT_COLUMNS = [
    "dataset", "kind", "seed", "split", "mismatch", "ties", "task", "n_trees",
    "min_node_size", "error", "forest_error", "untied_mismatch", "max_abs_diff", "n_rows", "n_defined", "protocol",
]


def write_results(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def equivalence_report(
    forest: Forest,
    train: Dataset,
    kind: str,
    test: Dataset | None = None,
) -> PredictionReport:
    """Compare proximity-weighted predictions with the forest's own.

    Training rows are checked against the forest's OOB predictions; when
    ``test`` is given its rows are checked against ``forest.predict``.
    """
    if test is None:
        p = prox.compute(forest, train.X, kind)
        fpred, fties = forest.oob_predict(train)
        defined = forest.oob_tree_counts > 0
        y, split = train.y, "train"
    else:
        forest.check_dataset(test)
        p = prox.compute(forest, train.X, kind, X_query=test.X)
        fpred, fties = forest.predict_with_ties(test.X)
        defined = np.ones(test.n_rows, dtype=bool)
        y, split = test.y, "test"
    if forest.classification:
        pred, pties = prox_weighted_classification(p, train.y, forest.n_classes)
    else:
        pred = prox_weighted_regression(p, train.y)
        pties = np.zeros(len(pred), dtype=bool)
    return PredictionReport(
        dataset=train.name,
        kind=kind,
        split=split,
        task=forest.params.task,
        predictions=pred,
        forest_predictions=fpred,
        proximity_ties=pties,
        forest_ties=fties,
        defined=defined,
        y=np.asarray(y),
        seed=forest.params.seed,
        n_trees=forest.n_trees,
        min_node_size=forest.params.min_node_size,
    )
