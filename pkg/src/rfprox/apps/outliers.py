"""Within-class outlier scores from proximities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..proximity import ProximityMatrix


class OutlierError(ValueError):
    pass


@dataclass
class OutlierResult:
    raw: np.ndarray
    normalized: np.ndarray
    class_median: dict
    class_mad: dict
    flagged: np.ndarray  # rows with no within-class proximity at all

    def write_csv(self, path, y: np.ndarray, labels=None) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("row_id,class,raw,normalized,flag\n")
            for i in range(len(self.raw)):
                cls = labels[int(y[i])] if labels else int(y[i])
                fh.write(f"{i},{cls},{float(self.raw[i])!r},{float(self.normalized[i])!r},{int(self.flagged[i])}\n")


def outlier_scores(p: ProximityMatrix, y: np.ndarray) -> OutlierResult:
    """raw(i) = n / sum_{j in class(i), j != i} p(i, j)^2, then per-class (raw - median) / MAD.

    MAD is the mean absolute deviation from the class median; a class with
    MAD 0 scores 0 throughout.  Rows whose within-class proximities are all
    zero get the largest finite raw score of their class and a flag.
    """
    if p.shape[0] != p.shape[1]:
        raise OutlierError("outlier scores need a square proximity matrix")
    y = np.asarray(y)
    n = len(y)
    if p.shape[0] != n:
        raise OutlierError("labels do not match the proximity matrix")
    V = p.values
    sq = V.multiply(V).tocsr() if sparse.issparse(V) else np.asarray(V) ** 2

    raw = np.empty(n)
    normalized = np.zeros(n)
    flagged = np.zeros(n, dtype=bool)
    medians, mads = {}, {}
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if members.size < 2:
            raise OutlierError(f"class {cls!r} has a single member")
        block = sq[members][:, members]
        block = block.toarray() if sparse.issparse(block) else np.array(block)
        np.fill_diagonal(block, 0.0)
        mass = block.sum(axis=1)
        zero = mass <= 0
        with np.errstate(divide="ignore"):
            r = np.where(zero, np.inf, n / np.where(zero, 1.0, mass))
        if zero.any():
            finite = r[~zero]
            r[zero] = finite.max() if finite.size else 0.0
        flagged[members] = zero
        raw[members] = r
        med = float(np.median(r))
        mad = float(np.mean(np.abs(r - med)))
        medians[cls.item() if hasattr(cls, "item") else cls] = med
        mads[cls.item() if hasattr(cls, "item") else cls] = mad
        if mad > 0:
            normalized[members] = (r - med) / mad
    return OutlierResult(raw, normalized, medians, mads, flagged)
