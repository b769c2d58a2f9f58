"""Original, OOB and RF-GAP proximities.

All three are assembled from two sparse incidence matrices over the
forest's leaves (every tree's nodes stacked into one global leaf axis):
which rows land in which leaf, and how much bootstrap weight each training
row carries there.  Products of these matrices are accumulated tree-major,
so results are reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse

from .forest import Forest

ORIGINAL = "original"
OOB = "oob"
GAP = "gap"
KINDS = (ORIGINAL, OOB, GAP)

ZEROED = "zeroed"
DUPLICATE_OOB = "duplicate-oob"
IDENTITY = "identity"

DENSE_LIMIT = 2000


class ProximityError(ValueError):
    pass


@dataclass(frozen=True)
class ProximityMatrix:
    """Query-by-training proximities.

    ``values`` is a dense array, or a CSR matrix once the query side
    exceeds ``DENSE_LIMIT`` rows.  ``flags`` marks degenerate entries:
    per-row for GAP (row with no OOB trees), per-pair for OOB (pair never
    jointly out-of-bag).
    """

    kind: str
    values: np.ndarray | sparse.csr_matrix
    diagonal: str | None = None
    symmetric: bool = False
    flags: np.ndarray | sparse.spmatrix | None = None
    row_ids: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.values)

    def toarray(self) -> np.ndarray:
        return self.values.toarray() if self.is_sparse else np.asarray(self.values)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.values.sum(axis=1)).ravel()

    def dot(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(self.values @ v)

    def row(self, i: int) -> np.ndarray:
        if self.is_sparse:
            return self.values.getrow(i).toarray().ravel()
        return np.asarray(self.values[i])


def _store(M: sparse.spmatrix) -> np.ndarray | sparse.csr_matrix:
    M = sparse.csr_matrix(M)
    M.sort_indices()
    if M.shape[0] <= DENSE_LIMIT:
        return M.toarray()
    return M


def _leaf_incidence(forest: Forest, leaves: np.ndarray, mask: np.ndarray | None = None, data: np.ndarray | None = None):
    """Sparse (n_rows, total_nodes) matrix with one column per (tree, node).

    Entry (i, node of i in t) is ``data[i, t]`` (default 1) wherever ``mask``
    allows it.  Column order is tree-major.
    """
    n, T = leaves.shape
    offsets = np.zeros(T + 1, np.int64)
    offsets[1:] = np.cumsum([tr.n_nodes for tr in forest.trees])
    cols = leaves + offsets[:-1][None, :]
    rows = np.repeat(np.arange(n), T).reshape(n, T)
    vals = np.ones((n, T)) if data is None else np.asarray(data, dtype=np.float64)
    keep = np.ones((n, T), dtype=bool) if mask is None else mask
    M = sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, offsets[-1]))
    M.sort_indices()
    return M


def _inbag_share(forest: Forest, train_leaves: np.ndarray) -> np.ndarray:
    """(n_train, n_trees): c_j(t) / |M(leaf of j in t)|, zero where j is out-of-bag."""
    C = forest.counts.T.astype(np.float64)
    share = np.zeros_like(C)
    for t, tree in enumerate(forest.trees):
        inbag = C[:, t] > 0
        share[inbag, t] = C[inbag, t] / tree.weight[train_leaves[inbag, t]]
    return share


def _gap_weights(forest: Forest, train_leaves: np.ndarray, share: np.ndarray) -> sparse.csr_matrix:
    """(total_nodes, n_train) in-bag weight of each training row in its leaf."""
    return _leaf_incidence(forest, train_leaves, share > 0, share).T.tocsr()


def _train_leaves(forest: Forest, X_train: np.ndarray) -> np.ndarray:
    if X_train.shape[0] != forest.n_train:
        raise ProximityError("training matrix does not match the forest's training set")
    return forest.apply(X_train)


def prox_original(forest: Forest, X_train: np.ndarray, X_query: np.ndarray | None = None) -> ProximityMatrix:
    """Share of trees in which query row and training row share a leaf."""
    L = _train_leaves(forest, X_train)
    Lq = L if X_query is None else forest.apply(X_query)
    Q = _leaf_incidence(forest, Lq)
    A = _leaf_incidence(forest, L)
    P = (Q @ A.T) / forest.n_trees
    return ProximityMatrix(
        ORIGINAL, _store(P), diagonal=IDENTITY if X_query is None else None, symmetric=X_query is None,
    )


def prox_oob(forest: Forest, X_train: np.ndarray, X_query: np.ndarray | None = None) -> ProximityMatrix:
    """Share of jointly-out-of-bag trees in which the pair shares a leaf.

    Pairs that are never jointly out-of-bag get 0 and a flag.  Query rows
    (``X_query`` given) count as out-of-bag in every tree.
    """
    L = _train_leaves(forest, X_train)
    oob = forest.oob_mask
    A = _leaf_incidence(forest, L, oob)
    O = sparse.csr_matrix(oob.astype(np.float64))
    if X_query is None:
        num = A @ A.T
        den = O @ O.T
    else:
        Lq = forest.apply(X_query)
        num = _leaf_incidence(forest, Lq) @ A.T
        den = sparse.csr_matrix(np.ones((Lq.shape[0], forest.n_trees))) @ O.T
    num = sparse.csr_matrix(num)
    den = sparse.csr_matrix(den)
    # co-leafed jointly-OOB pairs are a subset of jointly-OOB pairs: divide on num's pattern
    coo = num.tocoo()
    ratio = coo.data / np.asarray(den[coo.row, coo.col]).ravel()
    P = sparse.csr_matrix((ratio, (coo.row, coo.col)), shape=num.shape)
    flags = den.toarray() == 0 if den.shape[0] <= DENSE_LIMIT else None
    return ProximityMatrix(
        OOB, _store(P), diagonal=IDENTITY if X_query is None else None, symmetric=X_query is None, flags=flags,
    )


def prox_gap(forest: Forest, X_train: np.ndarray, diagonal: str = ZEROED) -> ProximityMatrix:
    """RF-GAP proximities among training rows.

    ``diagonal`` selects the self-proximity: ``zeroed`` (the prediction
    weights; rows sum to one) or ``duplicate-oob`` (the proximity of an
    identical clone that is out-of-bag in every tree).
    """
    if diagonal not in (ZEROED, DUPLICATE_OOB):
        raise ProximityError(f"unsupported GAP diagonal policy {diagonal!r}")
    L = _train_leaves(forest, X_train)
    oob = forest.oob_mask
    n_oob = oob.sum(axis=1)
    share = _inbag_share(forest, L)
    A = _leaf_incidence(forest, L, oob)
    P = sparse.csr_matrix(A @ _gap_weights(forest, L, share))
    inv = np.where(n_oob > 0, 1.0 / np.maximum(n_oob, 1), 0.0)
    P = sparse.csr_matrix(sparse.diags(inv) @ P)
    if diagonal == DUPLICATE_OOB:
        # the clone is OOB in every tree and shares i's leaf: (1/T) sum_t c_i(t) / |M_i(t)|
        P = P + sparse.diags(share.sum(axis=1) / forest.n_trees)
    P = sparse.csr_matrix(P)
    P.eliminate_zeros()
    return ProximityMatrix(GAP, _store(P), diagonal=diagonal, flags=n_oob == 0)


def prox_gap_test(forest: Forest, X_train: np.ndarray, X_query: np.ndarray) -> ProximityMatrix:
    """RF-GAP rows for new points, which are out-of-bag in every tree."""
    L = _train_leaves(forest, X_train)
    B = _gap_weights(forest, L, _inbag_share(forest, L))
    Q = _leaf_incidence(forest, forest.apply(X_query))
    P = (Q @ B) / forest.n_trees
    return ProximityMatrix(GAP, _store(P))


def compute(forest: Forest, X_train: np.ndarray, kind: str, X_query: np.ndarray | None = None, diagonal: str | None = None) -> ProximityMatrix:
    """Dispatch on ``kind``; ``X_query=None`` means training rows against themselves."""
    if kind == ORIGINAL:
        return prox_original(forest, X_train, X_query)
    if kind == OOB:
        return prox_oob(forest, X_train, X_query)
    if kind == GAP:
        if X_query is None:
            return prox_gap(forest, X_train, diagonal or ZEROED)
        return prox_gap_test(forest, X_train, X_query)
    raise ProximityError(f"unknown proximity kind {kind!r}; choose from {', '.join(KINDS)}")


def symmetrize(p: ProximityMatrix) -> ProximityMatrix:
    """(P + P^T) / 2."""
    if p.shape[0] != p.shape[1]:
        raise ProximityError("symmetrize needs a square matrix")
    V = p.values
    S = (V + V.T) / 2
    if sparse.issparse(S):
        S = sparse.csr_matrix(S)
        S.sort_indices()
    return replace(p, values=S, symmetric=True)


def asymmetry_mse(p: ProximityMatrix) -> float:
    """Mean over all entries of (P - P^T)^2."""
    if p.shape[0] != p.shape[1]:
        raise ProximityError("asymmetry needs a square matrix")
    D = p.values - p.values.T
    n = p.shape[0]
    if sparse.issparse(D):
        return float(D.multiply(D).sum() / (n * n))
    return float(np.mean(D * D))


def export(p: ProximityMatrix, path: str | Path, sparse_format: bool = True, sidecar: dict | None = None) -> None:
    """Write a dense CSV or ``i,j,value`` triplets, plus a JSON sidecar."""
    path = Path(path)
    if sparse_format:
        M = sparse.coo_matrix(p.values)
        M = sparse.csr_matrix(M)
        M.sort_indices()
        M = M.tocoo()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("i,j,value\n")
            for i, j, v in zip(M.row, M.col, M.data):
                if v != 0:
                    fh.write(f"{int(i)},{int(j)},{float(v)!r}\n")
    else:
        D = p.toarray()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(str(j) for j in range(D.shape[1])) + "\n")
            for row in D:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    meta = {
        "kind": p.kind,
        "diagonal": p.diagonal,
        "symmetric": p.symmetric,
        "shape": list(p.shape),
        "format": "triplet" if sparse_format else "dense",
        **(sidecar or {}),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_triplets(path: str | Path, shape: tuple[int, int]) -> sparse.csr_matrix:
    rows, cols, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            i, j, v = line.split(",")
            rows.append(int(i))
            cols.append(int(j))
            vals.append(float(v))
    return sparse.csr_matrix((vals, (rows, cols)), shape=shape)
