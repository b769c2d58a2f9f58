"""Experiment runner: train/test equivalence tables and parameter sweeps."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import proximity as prox
from .data import DataError, Dataset, load_table
from .forest import ForestParams, fit_forest
from .prediction import equivalence_report

log = logging.getLogger(__name__)

NODE_SIZES = (1, 5, 10, 20, 50)
TREE_COUNTS = (5, 10, 50, 100, 250, 500)


def stratified_split(ds: Dataset, train_fraction: float = 0.7, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded train/test split; classification keeps class proportions.

    Each class (or the whole table, for regression) contributes
    round(train_fraction * size) rows to the training side, with at least
    one row on each side whenever the group has two or more rows.
    """
    if not 0 < train_fraction < 1:
        raise DataError("split fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng([seed, 2001])
    groups = [np.arange(ds.n_rows)] if ds.task == "regression" else [np.flatnonzero(ds.y == k) for k in range(ds.n_classes)]
    train = []
    for g in groups:
        if g.size == 0:
            continue
        g = rng.permutation(g)
        k = int(round(train_fraction * g.size))
        if g.size >= 2:
            k = min(max(k, 1), g.size - 1)
        train.append(g[:k])
    tr = np.sort(np.concatenate(train))
    te = np.setdiff1d(np.arange(ds.n_rows), tr)
    if te.size == 0:
        raise DataError("split left no test rows")
    return ds.subset(tr), ds.subset(te)


def read_manifest(path: str | Path) -> list[str]:
    """One dataset reference per line; blank lines and ``#`` comments are skipped.

    Relative paths resolve against the manifest's directory.
    """
    base = Path(path).parent
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line and not Path(line).is_absolute():
            line = str(base / line)
        out.append(line)
    return out


def split_rows(
    ds: Dataset,
    params: ForestParams,
    kinds: Sequence[str] = prox.KINDS,
    train_fraction: float = 0.7,
    protocol: str = "split",
    threads: int = 1,
) -> list[dict]:
    """Fit on a seeded split and report every kind on both sides."""
    train, test = stratified_split(ds, train_fraction, params.seed)
    forest = fit_forest(train, params, threads=threads)
    rows = []
    for kind in kinds:
        for side in (None, test):
            rep = equivalence_report(forest, train, kind, side)
            rows.append({**rep.summary(), "dataset": ds.name, "protocol": protocol})
    return rows


def oob_rows(ds: Dataset, params: ForestParams, kinds: Sequence[str], protocol: str, threads: int = 1) -> list[dict]:
    """Fit on the whole table and report the OOB-side comparison only."""
    forest = fit_forest(ds, params, threads=threads)
    return [
        {**equivalence_report(forest, ds, kind).summary(), "dataset": ds.name, "protocol": protocol}
        for kind in kinds
    ]


def run(
    sources: Iterable[str | Dataset],
    seeds: Sequence[int],
    params: ForestParams = ForestParams(),
    kinds: Sequence[str] = prox.KINDS,
    train_fraction: float = 0.7,
    node_sweep: bool = False,
    tree_sweep: bool = False,
    threads: int = 1,
) -> list[dict]:
    """The full results table.

    Per dataset and seed: a ``split`` block (train and test rows for every
    kind), optionally a ``node_size`` sweep and an ``n_trees`` sweep on the
    full table.  A dataset that fails to load or fit is logged and skipped.
    """
    rows: list[dict] = []
    for src in sources:
        try:
            ds = src if isinstance(src, Dataset) else load_table(src)
            for seed in seeds:
                p = replace(params, seed=seed)
                rows += split_rows(ds, p, kinds, train_fraction, threads=threads)
                if node_sweep:
                    for m in NODE_SIZES:
                        rows += oob_rows(ds, replace(p, min_node_size=m), kinds, "node_size", threads)
                if tree_sweep:
                    for t in TREE_COUNTS:
                        rows += oob_rows(ds, replace(p, n_trees=t), kinds, "n_trees", threads)
        except (DataError, ValueError, OSError) as exc:
            log.error("skipping %s: %s", getattr(src, "name", src), exc)
    return rows


def fidelity_slope(train_error: Sequence[float], test_error: Sequence[float]) -> float:
    """Least-squares slope through the origin of test error on train error.

    A slope near one means training-side errors are honest estimates of
    test error; a large slope means the training side is overfit.
    """
    x = np.asarray(train_error, dtype=np.float64)
    y = np.asarray(test_error, dtype=np.float64)
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    sxx = float(x @ x)
    if sxx == 0:
        return float("inf") if float(y @ y) > 0 else float("nan")
    return float(x @ y) / sxx


def slopes(rows: Sequence[dict]) -> dict[str, float]:
    """Per-kind fidelity slope from ``split`` rows of classification datasets.

    Errors are averaged over seeds per (dataset, kind) first, giving one
    point per dataset.
    """
    acc: dict[tuple[str, str], dict[str, list[float]]] = {}
    for r in rows:
        if r.get("protocol", "split") != "split" or r["task"] != "classification":
            continue
        acc.setdefault((r["kind"], r["dataset"]), {"train": [], "test": []})[r["split"]].append(r["error"])
    points: dict[str, tuple[list[float], list[float]]] = {}
    for (kind, _), v in sorted(acc.items()):
        if v["train"] and v["test"]:
            xs, ys = points.setdefault(kind, ([], []))
            xs.append(float(np.mean(v["train"])))
            ys.append(float(np.mean(v["test"])))
    return {k: fidelity_slope(*v) for k, v in points.items()}
