"""Tabular datasets: CSV ingestion, MCAR masking, initial fills and unit scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MISSING_TOKENS = frozenset({"", "NA"})
NUMERIC = "numeric"
CATEGORICAL = "categorical"
FEATURE = "feature"
TARGET = "target"
IGNORE = "ignore"


class DataError(ValueError):
    """Raised for malformed input data."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str = NUMERIC
    role: str = FEATURE

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in (FEATURE, TARGET, IGNORE):
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus target.

    ``X`` holds one column per feature column of ``schema`` (in schema
    order, ignored columns dropped).  Categorical features are stored as
    float-valued dense integer codes; ``levels`` maps every categorical
    column name (target included) to its code -> label table.  Missing
    cells are flagged in ``missing`` and hold NaN in ``X``.
    """

    schema: tuple[ColumnSchema, ...]
    X: np.ndarray
    y: np.ndarray
    missing: np.ndarray
    levels: dict = field(default_factory=dict)
    original_missing: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        targets = [c for c in self.schema if c.role == TARGET]
        if len(targets) != 1:
            raise DataError("schema needs exactly one target column")
        if not self.features:
            raise DataError("schema needs at least one feature column")
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.features):
            raise DataError("feature matrix does not match schema")
        if len(self.y) != X.shape[0] or self.missing.shape != X.shape:
            raise DataError("columns have unequal lengths")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(np.asarray(self.y)))
        object.__setattr__(self, "missing", _frozen(np.asarray(self.missing, dtype=bool)))
        if self.original_missing is not None:
            object.__setattr__(self, "original_missing", _frozen(np.asarray(self.original_missing, dtype=bool)))

    @property
    def features(self) -> list[ColumnSchema]:
        return [c for c in self.schema if c.role == FEATURE]

    @property
    def target(self) -> ColumnSchema:
        return next(c for c in self.schema if c.role == TARGET)

    @property
    def task(self) -> str:
        return "classification" if self.target.kind == CATEGORICAL else "regression"

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def is_categorical(self) -> np.ndarray:
        return np.array([c.kind == CATEGORICAL for c in self.features], dtype=bool)

    @property
    def n_levels(self) -> np.ndarray:
        """Level counts per feature (0 for numeric columns)."""
        return np.array(
            [len(self.levels[c.name]) if c.kind == CATEGORICAL else 0 for c in self.features],
            dtype=np.int64,
        )

    @property
    def n_classes(self) -> int:
        if self.task != "classification":
            return 0
        return len(self.levels[self.target.name])

    @property
    def class_labels(self) -> list[str]:
        return list(self.levels.get(self.target.name, []))

    def with_values(self, X: np.ndarray, missing: np.ndarray | None = None, **kw) -> "Dataset":
        return replace(self, X=X, missing=self.missing if missing is None else missing, **kw)

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        om = None if self.original_missing is None else self.original_missing[rows]
        return replace(self, X=self.X[rows], y=self.y[rows], missing=self.missing[rows], original_missing=om)

    def fingerprint(self) -> dict:
        return {
            "n_features": self.n_features,
            "kinds": [c.kind for c in self.features],
            "n_levels": self.n_levels.tolist(),
            "task": self.task,
            "n_classes": self.n_classes,
        }


@dataclass(frozen=True)
class MissingnessRecord:
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.rows)


# ---------------------------------------------------------------------------
# loading


def read_schema_file(path: str | Path) -> list[ColumnSchema]:
    """Parse a schema override file with one ``name,kind,role`` per line."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip() or row[0].startswith("#"):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected name,kind,role")
            out.append(ColumnSchema(*(c.strip() for c in row)))
    return out


def _parse_float(s: str) -> float | None:
    try:
        return float(s)
    except ValueError:
        return None


def infer_schema(header: Sequence[str], rows: Sequence[Sequence[str]], target: str | None = None) -> list[ColumnSchema]:
    """Numeric iff every non-missing cell parses as a real; last column is the target by default."""
    target = header[-1] if target is None else target
    if target not in header:
        raise DataError(f"target column {target!r} not in header")
    schema = []
    for k, name in enumerate(header):
        cells = [r[k] for r in rows if r[k] not in MISSING_TOKENS]
        numeric = all(_parse_float(c) is not None for c in cells)
        role = TARGET if name == target else FEATURE
        schema.append(ColumnSchema(name, NUMERIC if numeric else CATEGORICAL, role))
    return schema


def from_rows(
    header: Sequence[str],
    rows: Sequence[Sequence[str]],
    schema: Sequence[ColumnSchema] | str = "infer",
    target: str | None = None,
    name: str = "",
) -> Dataset:
    if not rows:
        raise DataError("no data rows")
    for lineno, r in enumerate(rows, 2):
        if len(r) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} cells, found {len(r)}")
    if isinstance(schema, str):
        if schema != "infer":
            raise DataError(f"unknown schema mode {schema!r}")
        schema = infer_schema(header, rows, target)
    else:
        schema = list(schema)
        if [c.name for c in schema] != list(header):
            raise DataError("schema columns do not match CSV header")

    n = len(rows)
    feats = [(k, c) for k, c in enumerate(schema) if c.role == FEATURE]
    tk, tcol = next(((k, c) for k, c in enumerate(schema) if c.role == TARGET), (None, None))
    if tcol is None:
        raise DataError("schema needs exactly one target column")

    levels: dict[str, list[str]] = {}

    def encode(k: int, col: ColumnSchema) -> tuple[np.ndarray, np.ndarray]:
        vals = np.full(n, np.nan)
        miss = np.zeros(n, dtype=bool)
        table: dict[str, int] = {}
        for i, r in enumerate(rows):
            cell = r[k].strip()
            if cell in MISSING_TOKENS:
                miss[i] = True
                continue
            if col.kind == NUMERIC:
                v = _parse_float(cell)
                if v is None:
                    raise DataError(f"column {col.name!r}, line {i + 2}: {cell!r} is not numeric")
                if not math.isfinite(v):
                    raise DataError(f"column {col.name!r}, line {i + 2}: non-finite value")
                vals[i] = v
            else:
                vals[i] = table.setdefault(cell, len(table))
        if col.kind == CATEGORICAL:
            levels[col.name] = list(table)
        return vals, miss

    X = np.empty((n, len(feats)))
    M = np.zeros((n, len(feats)), dtype=bool)
    for f, (k, col) in enumerate(feats):
        X[:, f], M[:, f] = encode(k, col)
    y, ymiss = encode(tk, tcol)
    if ymiss.any():
        raise DataError(f"target column {tcol.name!r} has {int(ymiss.sum())} missing values")
    if tcol.kind == CATEGORICAL:
        y = y.astype(np.int64)
    return Dataset(tuple(schema), X, y, M, levels, name=name)


def load_csv(path: str | Path, schema: Sequence[ColumnSchema] | str = "infer", target: str | None = None) -> Dataset:
    """Read a headed UTF-8 CSV.  Empty cells and ``NA`` are missing."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            table = list(csv.reader(fh))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise DataError(f"{path} is not UTF-8") from e
    if not table:
        raise DataError(f"{path}: missing header row")
    header, rows = table[0], [r for r in table[1:] if r]
    return from_rows(header, rows, schema, target, name=path.stem)


BUILTIN = (
    "iris", "wine", "sonar", "glass", "ecoli", "ionosphere", "pima", "breast_cancer", "auto_mpg",
)


def load_builtin(name: str) -> Dataset:
    """Load one of the bundled UCI-derived tables (see ``BUILTIN``)."""
    if name not in BUILTIN:
        raise DataError(f"unknown builtin dataset {name!r}; choose from {', '.join(BUILTIN)}")
    ref = resources.files("rfprox.datasets").joinpath(f"{name}.csv")
    with resources.as_file(ref) as p:
        return load_csv(p)


def load_table(spec: str, schema: Sequence[ColumnSchema] | str = "infer", target: str | None = None) -> Dataset:
    """``builtin:NAME``, ``synthetic:NAME[:n[:seed]]`` or a CSV path."""
    if spec.startswith("builtin:"):
        return load_builtin(spec.split(":", 1)[1])
    if spec.startswith("synthetic:"):
        from . import synthetic

        return synthetic.from_spec(spec)
    return load_csv(spec, schema, target)


def make_dataset(
    X: np.ndarray,
    y: Iterable,
    task: str = "classification",
    feature_names: Sequence[str] | None = None,
    categorical: Sequence[int] = (),
    name: str = "",
) -> Dataset:
    """Build a Dataset from arrays.

    Classification targets are re-coded densely in first-appearance
    order; categorical feature columns must already hold codes in
    ``[0, K)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("X must be 2-D")
    d = X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"x{k}" for k in range(d)]
    cats = set(categorical)
    schema = [ColumnSchema(nm, CATEGORICAL if k in cats else NUMERIC) for k, nm in enumerate(names)]
    levels: dict[str, list[str]] = {}
    for k in cats:
        col = X[:, k][~np.isnan(X[:, k])]
        levels[names[k]] = [str(v) for v in range(int(col.max()) + 1 if col.size else 0)]
    y = list(y)
    if task == "classification":
        table: dict = {}
        codes = np.array([table.setdefault(v, len(table)) for v in y], dtype=np.int64)
        schema.append(ColumnSchema("target", CATEGORICAL, TARGET))
        levels["target"] = [str(v) for v in table]
        yarr = codes
    elif task == "regression":
        schema.append(ColumnSchema("target", NUMERIC, TARGET))
        yarr = np.asarray(y, dtype=np.float64)
    else:
        raise DataError(f"unknown task {task!r}")
    return Dataset(tuple(schema), X, yarr, np.isnan(X), levels, name=name)


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write ``ds`` back out (categorical codes decoded, missing cells as ``NA``)."""
    feats = ds.features
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c.name for c in feats] + [ds.target.name])
        for i in range(ds.n_rows):
            row = []
            for k, c in enumerate(feats):
                if ds.missing[i, k]:
                    row.append("NA")
                elif c.kind == CATEGORICAL:
                    row.append(ds.levels[c.name][int(ds.X[i, k])])
                else:
                    row.append(repr(float(ds.X[i, k])))
            yv = ds.y[i]
            row.append(ds.class_labels[int(yv)] if ds.task == "classification" else repr(float(yv)))
            w.writerow(row)


# ---------------------------------------------------------------------------
# missingness


def remove_mcar(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, MissingnessRecord]:
    """Mask ``round(fraction * n_rows * n_features)`` feature cells uniformly at random."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"MCAR fraction must lie in (0, 1), got {fraction}")
    if ds.missing.any():
        raise DataError("dataset already contains missing cells")
    n, d = ds.X.shape
    count = int(round(fraction * n * d))
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(n * d, size=count, replace=False))
    rows, cols = np.divmod(flat, d)
    values = ds.X[rows, cols].copy()
    X = ds.X.copy()
    X[rows, cols] = np.nan
    M = np.zeros_like(ds.missing)
    M[rows, cols] = True
    return ds.with_values(X, M), MissingnessRecord(rows, cols, values)


def median(values: np.ndarray) -> float:
    # np.median already averages the two central values for even sizes
    return float(np.median(values))


def mode(codes: np.ndarray) -> float:
    """Most frequent code; ties go to the smallest code."""
    counts = np.bincount(codes.astype(np.int64))
    return float(np.argmax(counts))


def _fill_value(values: np.ndarray, categorical: bool) -> float:
    return mode(values) if categorical else median(values)


def initialize_impute(ds: Dataset) -> Dataset:
    """Median/mode fill.

    Classification fills from the row's own class and falls back to the
    whole column when the class has no observed donor; regression always
    uses the whole column.
    """
    if not ds.missing.any():
        return ds
    X = ds.X.copy()
    cat = ds.is_categorical
    for k in np.flatnonzero(ds.missing.any(axis=0)):
        obs = ~ds.missing[:, k]
        if not obs.any():
            raise DataError(f"column {ds.features[k].name!r} has no observed values")
        overall = _fill_value(ds.X[obs, k], cat[k])
        miss_rows = np.flatnonzero(ds.missing[:, k])
        if ds.task == "classification":
            for cls in np.unique(ds.y[miss_rows]):
                donors = obs & (ds.y == cls)
                fill = _fill_value(ds.X[donors, k], cat[k]) if donors.any() else overall
                X[miss_rows[ds.y[miss_rows] == cls], k] = fill
        else:
            X[miss_rows, k] = overall
    return ds.with_values(X, np.zeros_like(ds.missing), original_missing=ds.missing)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class UnitScaler:
    """Per-column affine map onto [0, 1]; categorical columns pass through."""

    lo: np.ndarray
    span: np.ndarray
    numeric: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64)
        k = self.numeric
        safe = np.where(self.span[k] > 0, self.span[k], 1.0)
        X[:, k] = np.where(self.span[k] > 0, (X[:, k] - self.lo[k]) / safe, 0.0)
        return X

    def inverse(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64)
        k = self.numeric
        X[:, k] = X[:, k] * self.span[k] + self.lo[k]
        return X


def fit_scaler(X: np.ndarray, categorical: np.ndarray) -> UnitScaler:
    numeric = np.flatnonzero(~np.asarray(categorical, dtype=bool))
    lo = np.zeros(X.shape[1])
    span = np.zeros(X.shape[1])
    if numeric.size:
        sub = X[:, numeric]
        if not np.all(np.isfinite(sub[~np.isnan(sub)])):
            raise DataError("non-finite values cannot be scaled")
        lo[numeric] = np.nanmin(sub, axis=0)
        span[numeric] = np.nanmax(sub, axis=0) - lo[numeric]
    return UnitScaler(lo, span, numeric)


def scale_unit(ds: Dataset) -> tuple[Dataset, UnitScaler]:
    """Map each numeric feature affinely onto [0, 1]; constant columns become 0."""
    if np.isinf(ds.X).any():
        raise DataError("non-finite values cannot be scaled")
    scaler = fit_scaler(ds.X, ds.is_categorical)
    return ds.with_values(scaler.transform(ds.X)), scaler
