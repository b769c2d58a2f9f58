"""Bootstrap-aggregated CART forests that keep their bootstrap multiplicities.

Every proximity definition reads two things from a trained forest: the
leaf each row lands in, per tree, and how many times each training row was
drawn into each tree's bootstrap sample.  Both are first-class here.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .data import Dataset

FORMAT_NAME = "rfprox-forest"
FORMAT_VERSION = 1
TIE_TOL = 1e-9


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    """Forest hyper-parameters.

    ``mtry`` and ``min_node_size`` default to ``None`` and are resolved
    against the data: floor(sqrt(d)) / 1 for classification and
    max(1, floor(d/3)) / 5 for regression.
    """

    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int | None = None
    task: str | None = None
    seed: int = 0

    def resolve(self, ds: Dataset) -> "ForestParams":
        task = self.task or ds.task
        if task not in ("classification", "regression"):
            raise ForestError(f"unknown task {task!r}")
        if task != ds.task:
            raise ForestError(f"params ask for {task} but the dataset target is {ds.task}")
        d = ds.n_features
        mtry = self.mtry
        if mtry is None:
            mtry = max(1, math.isqrt(d)) if task == "classification" else max(1, d // 3)
        node = self.min_node_size
        if node is None:
            node = 1 if task == "classification" else 5
        out = ForestParams(self.n_trees, mtry, node, task, self.seed)
        out.validate(d)
        return out

    def validate(self, d: int) -> None:
        if self.n_trees < 1:
            raise ForestError("n_trees must be >= 1")
        if self.mtry is not None and not 1 <= self.mtry <= d:
            raise ForestError(f"mtry must lie in [1, {d}]")
        if self.min_node_size is not None and self.min_node_size < 1:
            raise ForestError("min_node_size must be >= 1")


@dataclass(frozen=True)
class BootstrapRecord:
    counts: np.ndarray

    @property
    def in_bag(self) -> np.ndarray:
        return np.flatnonzero(self.counts > 0)

    @property
    def oob(self) -> np.ndarray:
        return np.flatnonzero(self.counts == 0)


def bootstrap_sample(n: int, rng: np.random.Generator) -> BootstrapRecord:
    """``n`` uniform draws with replacement from ``range(n)``, tallied."""
    if n < 1:
        raise ForestError("bootstrap needs n >= 1")
    draws = rng.integers(0, n, size=n)
    return BootstrapRecord(np.bincount(draws, minlength=n).astype(np.int64))


@dataclass(frozen=True)
class Tree:
    """Flat node arrays of one fitted tree.

    ``value`` holds the in-bag class weights per node (classification) or
    the multiplicity-weighted response sum in column 0 (regression);
    ``weight`` is the node's in-bag multiset size.  Leaf ids are node ids.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left_mask: np.ndarray
    present_mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray
    value: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def leaf_prediction(self, classification: bool) -> np.ndarray:
        """Per-node prediction: class code (ties -> smallest) or weighted mean."""
        if classification:
            return np.argmax(self.value, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.value[:, 0] / self.weight

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left_mask": self.left_mask.tolist(),
            "present_mask": self.present_mask.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "weight": self.weight.tolist(),
            "value": self.value.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Tree":
        ints = {"feature", "left_mask", "present_mask", "left", "right", "depth"}
        return cls(**{k: np.asarray(obj[k], dtype=np.int64 if k in ints else np.float64) for k in cls.__dataclass_fields__})


def _check_features(ds: Dataset) -> None:
    if ds.missing.any():
        raise ForestError("dataset has missing feature cells; impute before fitting")
    if (ds.n_levels > _kernels.MAX_LEVELS).any():
        raise ForestError(f"categorical features are limited to {_kernels.MAX_LEVELS} levels")


def fit_tree(ds: Dataset, boot: BootstrapRecord, params: ForestParams, seed: int) -> Tree:
    """Grow one tree on the bootstrap multiset ``boot`` (params must be resolved)."""
    _check_features(ds)
    if len(boot.counts) != ds.n_rows:
        raise ForestError("bootstrap record does not match dataset length")
    classification = params.task == "classification"
    yc = ds.y.astype(np.int64) if classification else np.zeros(ds.n_rows, np.int64)
    yr = np.zeros(ds.n_rows) if classification else ds.y.astype(np.float64)
    arrays = _kernels.build_tree(
        ds.X,
        ds.is_categorical,
        ds.n_levels,
        yc,
        yr,
        np.asarray(boot.counts, dtype=np.int64),
        max(ds.n_classes, 1),
        params.mtry,
        float(params.min_node_size),
        classification,
        seed,
    )
    return Tree(*arrays)


def tree_streams(seed: int, t: int) -> tuple[np.random.Generator, int]:
    """Bootstrap generator and induction seed for tree ``t``; depends only on (seed, t)."""
    rng = np.random.default_rng([seed, t])
    return rng, int(rng.integers(0, 2**31 - 1))


@dataclass
class Forest:
    params: ForestParams
    trees: list[Tree]
    counts: np.ndarray  # (n_trees, n_train) bootstrap multiplicities
    fingerprint: dict
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n_train(self) -> int:
        return self.counts.shape[1]

    @property
    def classification(self) -> bool:
        return self.params.task == "classification"

    @property
    def n_classes(self) -> int:
        return self.fingerprint["n_classes"]

    def bootstrap(self, t: int) -> BootstrapRecord:
        return BootstrapRecord(self.counts[t])

    @property
    def oob_mask(self) -> np.ndarray:
        """(n_train, n_trees) boolean: row i out-of-bag in tree t."""
        return (self.counts == 0).T

    @property
    def oob_tree_counts(self) -> np.ndarray:
        """|S_i| for every training row."""
        return (self.counts == 0).sum(axis=0)

    def check_rows(self, X: np.ndarray) -> None:
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.fingerprint["n_features"]:
            raise ForestError("rows do not match the forest's training schema")
        if np.isnan(X).any():
            raise ForestError("rows contain missing cells")

    def check_dataset(self, ds: Dataset, training: bool = False) -> None:
        fp = ds.fingerprint()
        for key in ("n_features", "kinds", "task"):
            if fp[key] != self.fingerprint[key]:
                raise ForestError(f"dataset {key} does not match the forest")
        if training and ds.n_rows != self.n_train:
            raise ForestError("dataset is not the forest's training set (row count differs)")
        self.check_rows(ds.X)

    def _flat(self):
        if "flat" not in self._cache:
            offsets = np.zeros(self.n_trees + 1, np.int64)
            offsets[1:] = np.cumsum([t.n_nodes for t in self.trees])
            cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees])
            self._cache["flat"] = (
                offsets,
                cat("feature"),
                cat("threshold"),
                cat("left_mask"),
                cat("present_mask"),
                cat("left"),
                cat("right"),
                cat("weight"),
            )
        return self._cache["flat"]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """(n_rows, n_trees) matrix of leaf ids."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        self.check_rows(X)
        is_cat = np.array([k == "categorical" for k in self.fingerprint["kinds"]], dtype=bool)
        return _kernels.apply_nodes(X, is_cat, *self._flat())

    def leaf_of(self, t: int, x: np.ndarray) -> int:
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        self.check_rows(x)
        tree = self.trees[t]
        is_cat = np.array([k == "categorical" for k in self.fingerprint["kinds"]], dtype=bool)
        offsets = np.array([0, tree.n_nodes], np.int64)
        return int(
            _kernels.apply_nodes(
                x, is_cat, offsets, tree.feature, tree.threshold, tree.left_mask,
                tree.present_mask, tree.left, tree.right, tree.weight,
            )[0, 0]
        )

    def leaf_predictions(self, leaves: np.ndarray) -> np.ndarray:
        """Per-(row, tree) single-tree predictions for a leaf matrix."""
        out = np.empty(leaves.shape, dtype=np.int64 if self.classification else np.float64)
        for t, tree in enumerate(self.trees):
            out[:, t] = tree.leaf_prediction(self.classification)[leaves[:, t]]
        return out

    def leaf_ties(self, leaves: np.ndarray) -> np.ndarray:
        """True where a classification leaf's in-bag vote is tied."""
        out = np.zeros(leaves.shape, dtype=bool)
        if self.classification:
            for t, tree in enumerate(self.trees):
                v = tree.value
                out[:, t] = ((v == v.max(axis=1, keepdims=True)).sum(axis=1) > 1)[leaves[:, t]]
        return out

    def _aggregate(self, leaves: np.ndarray, use: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        preds = self.leaf_predictions(leaves)
        n_used = use.sum(axis=1)
        defined = n_used > 0
        if self.classification:
            K = self.n_classes
            votes = np.zeros((len(preds), K))
            for k in range(K):
                votes[:, k] = ((preds == k) & use).sum(axis=1)
            yhat, tied = vote(votes)
            tied |= (self.leaf_ties(leaves) & use).any(axis=1)
            yhat = np.where(defined, yhat, -1)
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                yhat = np.where(use, preds, 0.0).sum(axis=1) / n_used
            yhat = np.where(defined, yhat, np.nan)
            tied = np.zeros(len(preds), dtype=bool)
        return yhat, tied & defined, defined

    def oob_predict(self, ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """OOB predictions and tie flags for the training set.

        Rows that are in-bag in every tree get -1 (classification) or NaN.
        """
        self.check_dataset(ds, training=True)
        yhat, tied, _ = self._aggregate(self.apply(ds.X), self.oob_mask)
        return yhat, tied

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_with_ties(X)[0]

    def predict_with_ties(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        leaves = self.apply(X)
        yhat, tied, _ = self._aggregate(leaves, np.ones(leaves.shape, dtype=bool))
        return yhat, tied

    def oob_error(self, ds: Dataset) -> float:
        """Misclassification rate or MSE over rows with a defined OOB prediction."""
        yhat, _ = self.oob_predict(ds)
        return prediction_error(ds.y, yhat, self.classification)

    # -- serialization ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        """JSON-lines: a header line, then one line per tree with its bootstrap counts."""
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "params": asdict(self.params),
            "fingerprint": self.fingerprint,
            "n_train": self.n_train,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for t, tree in enumerate(self.trees):
                rec = {"tree": t, "counts": self.counts[t].tolist(), **tree.to_json()}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Forest":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise ForestError(f"{path}: empty forest file")
        header = json.loads(lines[0])
        if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
            raise ForestError(f"{path}: not a {FORMAT_NAME} v{FORMAT_VERSION} file")
        trees, counts = [], []
        for line in lines[1:]:
            rec = json.loads(line)
            if "counts" not in rec:
                raise ForestError(f"{path}: tree record lacks bootstrap counts")
            counts.append(rec["counts"])
            trees.append(Tree.from_json(rec))
        params = ForestParams(**header["params"])
        if len(trees) != params.n_trees:
            raise ForestError(f"{path}: expected {params.n_trees} trees, found {len(trees)}")
        return cls(params, trees, np.asarray(counts, dtype=np.int64), header["fingerprint"])


def vote(scores: np.ndarray, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise argmax; classes within ``tol`` of the max tie and the smallest code wins."""
    top = scores.max(axis=1, keepdims=True)
    near = scores >= top - tol
    return np.argmax(near, axis=1), near.sum(axis=1) > 1


def prediction_error(y: np.ndarray, yhat: np.ndarray, classification: bool) -> float:
    if classification:
        ok = yhat >= 0
        return float(np.mean(yhat[ok] != y[ok])) if ok.any() else float("nan")
    ok = ~np.isnan(yhat)
    return float(np.mean((yhat[ok] - y[ok]) ** 2)) if ok.any() else float("nan")


def fit_forest(ds: Dataset, params: ForestParams = ForestParams(), threads: int = 1) -> Forest:
    """Train ``params.n_trees`` trees on independent bootstraps of ``ds``.

    Tree ``t`` draws its bootstrap and split randomness from streams keyed
    by ``(params.seed, t)``, so the result does not depend on ``threads``.
    """
    _check_features(ds)
    params = params.resolve(ds)
    n = ds.n_rows

    def grow(t: int) -> tuple[Tree, np.ndarray]:
        rng, tree_seed = tree_streams(params.seed, t)
        boot = bootstrap_sample(n, rng)
        return fit_tree(ds, boot, params, tree_seed), boot.counts

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            grown = list(pool.map(grow, range(params.n_trees)))
    else:
        grown = [grow(t) for t in range(params.n_trees)]
    trees = [g[0] for g in grown]
    counts = np.stack([g[1] for g in grown])
    return Forest(params, trees, counts, ds.fingerprint())
