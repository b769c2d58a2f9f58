"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines
appear in the terminal output even when pytest captures stdout.
"""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfprox import cli
from rfprox import experiments as ex
from rfprox import proximity as prox
from rfprox.apps import impute_kinds
from rfprox.apps.mds import classical_mds
from rfprox.data import load_builtin, load_table, remove_mcar
from rfprox.forest import ForestParams, fit_forest
from rfprox.prediction import equivalence_report
from rfprox.synthetic import friedman, mixed, shifted_means

from conftest import small_classification, small_regression
import oracles

pytestmark = pytest.mark.acceptance

CLASSIFICATION_SUITE = [
    "builtin:iris", "builtin:wine", "builtin:sonar", "builtin:glass", "builtin:ecoli",
    "builtin:ionosphere", "builtin:pima", "builtin:breast_cancer", "synthetic:shifted_means",
]


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail

    return emit


def test_c01_classification_equivalence(report):
    start = time.perf_counter()
    worst, rows, datasets = 0.0, 0, 0
    for spec in CLASSIFICATION_SUITE:
        ds = load_table(spec)
        datasets += 1
        for seed in range(5):
            f = fit_forest(ds, ForestParams(n_trees=500, min_node_size=1, seed=seed))
            rep = equivalence_report(f, ds, prox.GAP)
            worst = max(worst, rep.mismatch)
            rows += int(rep.defined.sum())
    elapsed = time.perf_counter() - start
    ok = worst == 0.0 and datasets >= 8 and elapsed < 300
    report(1, ok, f"{datasets} datasets x 5 seeds, {rows} OOB rows, max GAP mismatch {worst}, {elapsed:.0f}s (< 300s)")


def test_c02_regression_equivalence(report):
    worst = 0.0
    sets = [load_builtin("auto_mpg"), friedman(400, 0)]
    for ds in sets:
        for node in ex.NODE_SIZES:
            for seed in range(3):
                f = fit_forest(ds, ForestParams(n_trees=500, min_node_size=node, seed=seed))
                worst = max(worst, equivalence_report(f, ds, prox.GAP).max_abs_diff)
    report(2, worst < 1e-10, f"{len(sets)} regression sets, node sizes {ex.NODE_SIZES}: max |diff| {worst:.2e} (< 1e-10)")


def test_c03_gap_rows_sum_to_one(report):
    rng = np.random.default_rng(2024)
    rows, worst, negative = 0, 0.0, False
    makers = [small_classification, small_regression, lambda n, s: mixed(n, s)]
    for case in range(60):
        n = int(rng.integers(10, 80))
        make = makers[case % 3]
        ds = make(n, case)
        f = fit_forest(ds, ForestParams(n_trees=int(rng.integers(1, 60)), min_node_size=int(rng.integers(1, 8)), seed=case))
        p = prox.prox_gap(f, ds.X)
        live = f.oob_tree_counts > 0
        worst = max(worst, float(np.max(np.abs(p.row_sums()[live] - 1), initial=0.0)))
        negative |= bool(p.toarray().min() < 0)
        rows += int(live.sum())
    ok = rows >= 1000 and worst <= 1e-10 and not negative
    report(3, ok, f"{rows} rows with S_i nonempty: max |row sum - 1| {worst:.1e}, negatives: {negative}")


def test_c04_oracles(report):
    worst = 0.0
    instances = 0
    for seed in range(5):
        for ds in (small_classification(50, seed), small_regression(50, seed), mixed(50, seed)):
            f = fit_forest(ds, ForestParams(n_trees=25, seed=seed))
            ref_oob, _ = oracles.oob(f, ds.X)
            pairs = [
                (prox.prox_original(f, ds.X).values, oracles.original(f, ds.X)),
                (prox.prox_oob(f, ds.X).values, ref_oob),
                (prox.prox_gap(f, ds.X).values, oracles.gap(f, ds.X)),
            ]
            worst = max([worst] + [float(np.max(np.abs(a - b))) for a, b in pairs])
            instances += 1
    report(4, worst <= 1e-12, f"{instances} instances (50 rows x 25 trees), 3 definitions: max |diff| {worst:.1e} (<= 1e-12)")


def test_c05_sonar_oob_error(report):
    ds = load_builtin("sonar")
    errs = [fit_forest(ds, ForestParams(n_trees=500, seed=s)).oob_error(ds) for s in range(5)]
    mean = float(np.mean(errs))
    report(5, abs(mean - 0.149) <= 0.04, f"Sonar mean OOB error {mean:.3f} (target 0.149 +- 0.04)")


def test_c06_fidelity_slopes(report):
    suite = CLASSIFICATION_SUITE + ["synthetic:mixed", "synthetic:clusters"]
    rows = ex.run(suite, seeds=range(5), params=ForestParams(n_trees=500), kinds=[prox.GAP, prox.ORIGINAL])
    s = ex.slopes(rows)
    ok = 0.9 <= s[prox.GAP] <= 1.1 and s[prox.ORIGINAL] > 1.5
    report(6, ok, f"{len(suite)} datasets: GAP slope {s[prox.GAP]:.3f} (0.9-1.1), Original slope {s[prox.ORIGINAL]:.3f} (> 1.5)")


def test_c07_imputation(report):
    start = time.perf_counter()
    wins = cells = 0
    for name in ("iris", "sonar", "ionosphere"):
        ds = load_builtin(name)
        for frac in (0.05, 0.25):
            for seed in range(25):
                masked, rec = remove_mcar(ds, frac, seed)
                res = impute_kinds(masked, rec, params=ForestParams(n_trees=500, seed=seed))
                g = res[prox.GAP].mse[-1]
                wins += g <= res[prox.ORIGINAL].mse[-1] and g <= res[prox.OOB].mse[-1]
                cells += 1
    elapsed = time.perf_counter() - start
    share = wins / cells
    ok = share >= 0.7 and elapsed < 600
    report(7, ok, f"GAP best in {wins}/{cells} cells ({share:.0%}, need >= 70%), {elapsed:.0f}s (< 600s)")


def test_c08_symmetry_trend(report):
    counts = (50, 100, 500, 1000)
    med = []
    for T in counts:
        vals = []
        for seed in range(10):
            ds = shifted_means(500, seed)
            f = fit_forest(ds, ForestParams(n_trees=T, seed=seed))
            vals.append(prox.asymmetry_mse(prox.prox_gap(f, ds.X)))
        med.append(float(np.median(vals)))
    ok = all(a > b for a, b in zip(med, med[1:]))
    detail = ", ".join(f"T={t}: {m:.2e}" for t, m in zip(counts, med))
    report(8, ok, f"median asymmetry MSE strictly decreasing: {detail}")


_procrustes_worst = [0.0]


def _procrustes(A, B):
    A = A - A.mean(0)
    B = B - B.mean(0)
    U, _, Vt = np.linalg.svd(B.T @ A)
    return float(np.linalg.norm(B @ (U @ Vt) - A))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=5, max_size=5))
def _planar_case(pts):
    Z = np.array(pts)
    sv = np.linalg.svd(Z - Z.mean(0), compute_uv=False)
    if sv[1] < 1e-2 * max(sv[0], 1.0):
        return  # collinear configurations have no second axis to recover
    D = np.linalg.norm(Z[:, None] - Z[None], axis=2)
    err = _procrustes(Z, classical_mds(D, 2).coords)
    _procrustes_worst[0] = max(_procrustes_worst[0], err)
    assert err < 1e-8


def test_c09_mds_procrustes(report):
    ok = True
    try:
        _planar_case()
    except AssertionError:
        ok = False
    report(9, ok, f"5-point planar configurations: max Procrustes error {_procrustes_worst[0]:.1e} (< 1e-8)")


def test_c10_cli_determinism(report, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "manifest.txt").write_text("builtin:iris\nsynthetic:friedman:80\n")
    jobs = {
        "train": ["train", "--input", "builtin:iris", "--trees", "100", "--seed", "3"],
        "prox": ["prox", "--input", "builtin:sonar", "--kind", "oob", "--trees", "100", "--threads", "2"],
        "check": ["predict-check", "--input", "builtin:glass", "--trees", "100", "--split", "0.7"],
        "impute": ["impute", "--input", "builtin:iris", "--mcar", "0.1", "--trees", "100", "--iterations", "2"],
        "outliers": ["outliers", "--input", "builtin:wine", "--trees", "100"],
        "embed": ["embed", "--input", "builtin:iris", "--trees", "100", "--dims", "3"],
        "experiment": ["experiment", "--input", "manifest.txt", "--trees", "30", "--seeds", "2", "--node-size-sweep"],
    }
    bad = []
    for name, argv in jobs.items():
        outputs = []
        for rep in ("a", "b"):
            (tmp_path / rep).mkdir(exist_ok=True)
            out = f"{name}.out"
            monkeypatch.chdir(tmp_path / rep)
            (tmp_path / rep / "manifest.txt").write_text((tmp_path / "manifest.txt").read_text())
            assert cli.main(argv + ["--out", out]) == 0, name
            outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / rep).glob(f"{name}.*"))})
        if outputs[0] != outputs[1] or len(outputs[0]) < 2:
            bad.append(name)
    n_files = sum(len(list((tmp_path / "a").glob(f"{n}.*"))) for n in jobs)
    report(10, not bad, f"{len(jobs)} commands re-run, {n_files} output files byte-identical" + (f"; differing: {bad}" if bad else ""))
