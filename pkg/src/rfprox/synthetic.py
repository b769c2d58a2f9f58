"""Seeded synthetic datasets.

Referenced as ``synthetic:NAME[:n[:seed]]`` wherever a dataset path is
accepted.
"""

from __future__ import annotations

import numpy as np

from .data import DataError, Dataset, make_dataset


def shifted_means(n: int = 500, seed: int = 0, d: int = 10) -> Dataset:
    """Two balanced classes of standard-normal features.

    Class 0 is centred at the origin; class 1 has means spaced evenly
    from 0 to 1 across the ``d`` features, so the first feature carries no
    signal and the last carries the most.
    """
    rng = np.random.default_rng([seed, 1001])
    y = np.arange(n) % 2
    X = rng.standard_normal((n, d)) + np.outer(y, np.linspace(0.0, 1.0, d))
    return make_dataset(X, y, "classification", name=f"shifted_means_{n}_{seed}")


def clusters(n: int = 200, seed: int = 0, d: int = 4, gap: float = 6.0) -> Dataset:
    """Two Gaussian clusters ``gap`` standard deviations apart on every axis."""
    rng = np.random.default_rng([seed, 1002])
    y = np.arange(n) % 2
    X = rng.standard_normal((n, d)) + gap * y[:, None]
    return make_dataset(X, y, "classification", name=f"clusters_{n}_{seed}")


def friedman(n: int = 300, seed: int = 0, d: int = 10, noise: float = 1.0) -> Dataset:
    """Friedman #1 regression surface on uniform features (features 6..d are noise)."""
    if d < 5:
        raise DataError("friedman needs at least 5 features")
    rng = np.random.default_rng([seed, 1003])
    X = rng.random((n, d))
    y = (
        10 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20 * (X[:, 2] - 0.5) ** 2
        + 10 * X[:, 3]
        + 5 * X[:, 4]
        + noise * rng.standard_normal(n)
    )
    return make_dataset(X, y, "regression", name=f"friedman_{n}_{seed}")


def mixed(n: int = 300, seed: int = 0) -> Dataset:
    """Three classes driven by two numeric features and one 4-level categorical."""
    rng = np.random.default_rng([seed, 1004])
    cat = rng.integers(0, 4, n)
    X = np.column_stack([rng.standard_normal(n), rng.standard_normal(n), cat.astype(float)])
    score = X[:, 0] + np.where(cat >= 2, 1.5, -1.5) + 0.5 * rng.standard_normal(n)
    y = np.digitize(score, [-1.0, 1.0])
    return make_dataset(
        X, y, "classification", feature_names=["a", "b", "group"], categorical=[2], name=f"mixed_{n}_{seed}"
    )


GENERATORS = {
    "shifted_means": (shifted_means, 500),
    "clusters": (clusters, 200),
    "friedman": (friedman, 300),
    "mixed": (mixed, 300),
}


def from_spec(spec: str) -> Dataset:
    """Build a dataset from ``synthetic:NAME[:n[:seed]]``."""
    parts = spec.split(":")
    if parts[0] != "synthetic" or len(parts) < 2 or len(parts) > 4:
        raise DataError(f"bad synthetic reference {spec!r}; expected synthetic:NAME[:n[:seed]]")
    name = parts[1]
    if name not in GENERATORS:
        raise DataError(f"unknown synthetic dataset {name!r}; choose from {', '.join(GENERATORS)}")
    fn, default_n = GENERATORS[name]
    try:
        n = int(parts[2]) if len(parts) > 2 else default_n
        seed = int(parts[3]) if len(parts) > 3 else 0
    except ValueError as exc:
        raise DataError(f"bad synthetic reference {spec!r}") from exc
    if n < 4:
        raise DataError("synthetic datasets need at least 4 rows")
    return fn(n=n, seed=seed)
