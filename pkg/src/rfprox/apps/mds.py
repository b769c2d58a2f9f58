"""Classical (Torgerson) MDS on proximity-derived distances."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..proximity import ProximityMatrix


class EmbeddingError(ValueError):
    pass


@dataclass
class Embedding:
    coords: np.ndarray
    eigenvalues: np.ndarray  # retained, descending
    spectrum: np.ndarray  # all eigenvalues of the centred Gram matrix, descending
    stress: float

    def write_csv(self, path) -> None:
        d = self.coords.shape[1]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(["row_id"] + [f"dim{k + 1}" for k in range(d)]) + "\n")
            for i, row in enumerate(self.coords):
                fh.write(",".join([str(i)] + [repr(float(v)) for v in row]) + "\n")

    def write_sidecar(self, path, extra: dict | None = None) -> None:
        meta = {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "stress": self.stress,
            **(extra or {}),
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def classical_mds(D: np.ndarray, dims: int) -> Embedding:
    """Embed a symmetric distance matrix in ``dims`` dimensions.

    Only positive eigenvalues of B = -1/2 J D^2 J are kept.  Each axis is
    signed so that its largest-magnitude coordinate is positive.
    """
    if dims < 1:
        raise EmbeddingError("dims must be >= 1")
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if D.shape != (n, n):
        raise EmbeddingError("distance matrix must be square")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise EmbeddingError("distance matrix must be symmetric")
    D2 = D * D
    # double centring without forming J
    B = -0.5 * (D2 - D2.mean(axis=0)[None, :] - D2.mean(axis=1)[:, None] + D2.mean())
    B = (B + B.T) / 2
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals, kind="stable")[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = 1e-10 * max(abs(evals[0]), 1.0) if n else 0.0
    keep = np.flatnonzero(evals > tol)[:dims]
    if keep.size < dims:
        warnings.warn(f"only {keep.size} positive eigenvalues; embedding has {keep.size} dimensions", stacklevel=2)
    V = evecs[:, keep]
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    coords = V * signs * np.sqrt(evals[keep])
    diff = coords[:, None, :] - coords[None, :, :]
    Dhat = np.sqrt((diff * diff).sum(axis=2))
    denom = float((D2).sum())
    stress = float(np.sqrt(((D - Dhat) ** 2).sum() / denom)) if denom > 0 else 0.0
    return Embedding(coords, evals[keep], evals, stress)


def mds_embed(p: ProximityMatrix, dims: int = 2) -> Embedding:
    """Classical MDS of D = sqrt(1 - p) for a symmetric proximity matrix."""
    if p.shape[0] != p.shape[1]:
        raise EmbeddingError("MDS needs a square proximity matrix")
    P = p.values.toarray() if sparse.issparse(p.values) else np.asarray(p.values, dtype=np.float64)
    if not np.allclose(P, P.T, rtol=0, atol=1e-12):
        raise EmbeddingError("proximity matrix must be symmetric; symmetrize it first")
    D = np.sqrt(np.clip(1.0 - P, 0.0, None))
    np.fill_diagonal(D, 0.0)
    return classical_mds(D, dims)
