"""Random-forest proximities: Original, OOB and RF-GAP, with the applications built on them."""

from importlib.metadata import PackageNotFoundError, version as _version

from .data import Dataset, load_csv, load_table, make_dataset, remove_mcar
from .forest import Forest, ForestParams, fit_forest
from .prediction import equivalence_report, prox_weighted_classification, prox_weighted_regression
from .proximity import ProximityMatrix, compute, symmetrize

try:
    __version__ = _version("rfprox")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0+unknown"

__all__ = [
    "Dataset", "Forest", "ForestParams", "ProximityMatrix", "compute", "equivalence_report",
    "fit_forest", "load_csv", "load_table", "make_dataset", "prox_weighted_classification",
    "prox_weighted_regression", "remove_mcar", "symmetrize",
]
