"""Iterative proximity-weighted imputation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .. import proximity as prox
from ..data import DataError, Dataset, MissingnessRecord, fit_scaler, initialize_impute
from ..forest import ForestParams, fit_forest, vote


@dataclass
class ImputationRunResult:
    kind: str
    dataset: Dataset
    mse: list[float]  # index 0 is the median/mode fill
    iterations: int
    starved: int = 0  # cells whose donors all had zero proximity (left unchanged)


def imputation_mse(X: np.ndarray, record: MissingnessRecord, scaler, categorical: np.ndarray) -> float:
    """Mean squared error over the masked numeric cells, in unit-scaled space."""
    keep = ~categorical[record.cols]
    if not keep.any():
        return 0.0
    rows, cols = record.rows[keep], record.cols[keep]
    span = np.where(scaler.span[cols] > 0, scaler.span[cols], 1.0)
    diff = (X[rows, cols] - record.values[keep]) / span
    return float(np.mean(diff * diff))


def _proximity_for(forest, X: np.ndarray, kind: str, symmetric: bool):
    p = prox.compute(forest, X, kind, diagonal=prox.DUPLICATE_OOB if kind == prox.GAP else None)
    return prox.symmetrize(p) if symmetric else p


def proximity_fill(ds: Dataset, missing: np.ndarray, p: prox.ProximityMatrix) -> tuple[np.ndarray, int]:
    """One weighted-average pass over every originally-missing cell.

    Donors for a column are the rows observed in that column; their
    proximities to the target row are renormalised to sum to one.
    Categorical cells take the proximity-weighted majority level.
    """
    X = np.array(ds.X)
    V = sparse.csr_matrix(p.values) if p.is_sparse else p.values
    cat = ds.is_categorical
    starved = 0
    for k in np.flatnonzero(missing.any(axis=0)):
        rows = np.flatnonzero(missing[:, k])
        donors = np.flatnonzero(~missing[:, k])
        if donors.size == 0:
            raise DataError(f"column {ds.features[k].name!r} has no donors")
        W = V[rows][:, donors]
        W = W.toarray() if sparse.issparse(W) else np.asarray(W)
        total = W.sum(axis=1)
        live = total > 0
        starved += int((~live).sum())
        if not live.any():
            continue
        vals = ds.X[donors, k]
        if cat[k]:
            codes = vals.astype(np.int64)
            onehot = np.zeros((donors.size, int(codes.max()) + 1))
            onehot[np.arange(donors.size), codes] = 1.0
            choice, _ = vote(W[live] @ onehot)
            X[rows[live], k] = choice
        else:
            X[rows[live], k] = (W[live] @ vals) / total[live]
    return X, starved


def impute_kinds(
    ds_missing: Dataset,
    record: MissingnessRecord,
    kinds=prox.KINDS,
    params: ForestParams = ForestParams(),
    iterations: int = 1,
    symmetric: bool = True,
    threads: int = 1,
) -> dict[str, ImputationRunResult]:
    """Run the imputation loop for several proximity kinds.

    All kinds start from the same median/mode fill and therefore share the
    first forest; later iterations diverge and refit per kind.
    """
    if iterations < 1:
        raise DataError("iterations must be >= 1")
    missing = ds_missing.missing
    truth = np.array(ds_missing.X)
    truth[record.rows, record.cols] = record.values
    cat = ds_missing.is_categorical
    scaler = fit_scaler(truth, cat)

    start = initialize_impute(ds_missing)
    mse0 = imputation_mse(start.X, record, scaler, cat)
    if not missing.any():
        return {k: ImputationRunResult(k, start, [mse0] * (iterations + 1), iterations) for k in kinds}

    forests: dict[bytes, object] = {}

    def forest_for(ds: Dataset):
        key = ds.X.tobytes()
        if key not in forests:
            forests.clear()
            forests[key] = fit_forest(ds, params, threads=threads)
        return forests[key]

    out = {}
    state = {k: start for k in kinds}
    traces = {k: [mse0] for k in kinds}
    starved = {k: 0 for k in kinds}
    for _ in range(iterations):
        for k in kinds:
            cur = state[k]
            p = _proximity_for(forest_for(cur), cur.X, k, symmetric)
            X, n_starved = proximity_fill(cur, missing, p)
            starved[k] = n_starved
            state[k] = cur.with_values(X)
            traces[k].append(imputation_mse(X, record, scaler, cat))
    for k in kinds:
        out[k] = ImputationRunResult(k, state[k], traces[k], iterations, starved[k])
    return out


def impute(
    ds_missing: Dataset,
    record: MissingnessRecord,
    kind: str = prox.GAP,
    params: ForestParams = ForestParams(),
    iterations: int = 1,
    symmetric: bool = True,
    threads: int = 1,
) -> ImputationRunResult:
    """Median/mode fill, then ``iterations`` rounds of forest fit + proximity-weighted fill."""
    return impute_kinds(ds_missing, record, (kind,), params, iterations, symmetric, threads)[kind]


def write_trace(results: list[tuple[int, ImputationRunResult]], path) -> None:
    """CSV ``iteration,kind,seed,mse`` from (seed, result) pairs."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,kind,seed,mse\n")
        for seed, res in results:
            for it, m in enumerate(res.mse):
                fh.write(f"{it},{res.kind},{seed},{m!r}\n")
