import numpy as np
import pytest

from rfprox.data import load_builtin, make_dataset
from rfprox.forest import ForestParams, fit_forest
from rfprox.synthetic import friedman, mixed


def small_classification(n=30, seed=0, d=3, k=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(int) + (X[:, 1] > 1).astype(int) * (k - 2)
    return make_dataset(X, y, "classification", name=f"small_{seed}")


def small_regression(n=30, seed=0, d=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = X[:, 0] ** 2 + X[:, 1] + 0.1 * rng.normal(size=n)
    return make_dataset(X, y, "regression", name=f"smallreg_{seed}")


@pytest.fixture(scope="session")
def iris():
    return load_builtin("iris")


@pytest.fixture(scope="session")
def iris_forest(iris):
    return fit_forest(iris, ForestParams(n_trees=200, seed=3))


@pytest.fixture(scope="session")
def small_cls():
    return small_classification()


@pytest.fixture(scope="session")
def small_reg():
    return small_regression()


@pytest.fixture(scope="session")
def small_mixed():
    return mixed(n=40, seed=2)


@pytest.fixture(scope="session")
def reg_forest():
    ds = friedman(n=120, seed=4)
    return ds, fit_forest(ds, ForestParams(n_trees=100, seed=4))
