"""Command-line interface.

Every command is a pure function of its flags and input files.  Each
output file ``F`` gets a sidecar ``F.json`` holding the command line, the
resolved configuration and the package version; ``rfprox rerun F.json``
replays it.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments
from . import proximity as prox
from .apps import impute_kinds, mds_embed, outlier_scores
from .apps.impute import write_trace
from .apps.mds import EmbeddingError
from .apps.outliers import OutlierError
from .data import DataError, load_table, read_schema_file, remove_mcar
from .forest import Forest, ForestError, ForestParams, fit_forest
from .prediction import PredictionError, equivalence_report, write_results

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4

log = logging.getLogger("rfprox")


class UsageError(Exception):
    pass


# -- argument parsing -------------------------------------------------------


def _positive(name: str):
    def parse(s: str) -> int:
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{name} must be >= 1")
        return v

    return parse


def _fraction(lo: float, hi: float):
    def parse(s: str) -> float:
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {s!r}") from None
        if not lo <= v <= hi:
            raise argparse.ArgumentTypeError(f"must lie in [{lo}, {hi}]")
        return v

    return parse


def _kinds(s: str) -> list[str]:
    kinds = list(prox.KINDS) if s == "all" else s.split(",")
    for k in kinds:
        if k not in prox.KINDS:
            raise argparse.ArgumentTypeError(f"unknown kind {k!r}; choose from {', '.join(prox.KINDS)} or 'all'")
    return kinds


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="CSV path, builtin:NAME or synthetic:NAME[:n[:seed]]")
    p.add_argument("--schema", help="schema file: one 'name,kind,role' line per column")


def _add_forest(p: argparse.ArgumentParser, trees: int = 500) -> None:
    p.add_argument("--trees", type=_positive("--trees"), default=trees)
    p.add_argument("--mtry", type=_positive("--mtry"))
    p.add_argument("--min-node-size", type=_positive("--min-node-size"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive("--threads"), default=1)


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output file; a .json sidecar is written next to it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfprox", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rfprox {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a forest and report its OOB error")
    _add_data(p)
    _add_forest(p)
    _add_out(p)

    p = sub.add_parser("prox", help="export a proximity matrix")
    _add_data(p)
    _add_forest(p)
    p.add_argument("--forest", help="previously trained forest (must match --input)")
    p.add_argument("--kind", choices=prox.KINDS, default=prox.GAP)
    p.add_argument("--diagonal", choices=(prox.ZEROED, prox.DUPLICATE_OOB), help="GAP self-proximity policy")
    p.add_argument("--symmetric", action="store_true", help="symmetrize before export")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--sparse", dest="sparse", action="store_true", default=True, help="i,j,value triplets (default)")
    fmt.add_argument("--dense", dest="sparse", action="store_false", help="dense CSV")
    _add_out(p)

    p = sub.add_parser("predict-check", help="compare proximity-weighted and forest predictions")
    _add_data(p)
    _add_forest(p)
    p.add_argument("--forest", help="previously trained forest (must match --input, or its training side with --split)")
    p.add_argument("--kind", choices=prox.KINDS, default=prox.GAP)
    p.add_argument("--split", type=_fraction(0.01, 0.99), help="train fraction; also checks the held-out rows")
    _add_out(p)

    p = sub.add_parser("impute", help="remove cells at random and impute them")
    _add_data(p)
    _add_forest(p)
    p.add_argument("--kind", type=_kinds, default=list(prox.KINDS), help="kind, comma list or 'all' (default)")
    p.add_argument("--mcar", type=_fraction(0.01, 0.99), default=0.05, help="fraction of feature cells to remove")
    p.add_argument("--iterations", type=_positive("--iterations"), default=1)
    _add_out(p)

    p = sub.add_parser("outliers", help="within-class outlier scores")
    _add_data(p)
    _add_forest(p)
    p.add_argument("--forest")
    p.add_argument("--kind", choices=prox.KINDS, default=prox.GAP)
    _add_out(p)

    p = sub.add_parser("embed", help="classical MDS of sqrt(1 - proximity)")
    _add_data(p)
    _add_forest(p)
    p.add_argument("--forest")
    p.add_argument("--kind", choices=prox.KINDS, default=prox.GAP)
    p.add_argument("--dims", type=_positive("--dims"), default=2)
    _add_out(p)

    p = sub.add_parser("experiment", help="train/test equivalence table over a dataset manifest")
    p.add_argument("--input", required=True, help="manifest: one dataset reference per line")
    _add_forest(p)
    p.add_argument("--seeds", type=_positive("--seeds"), default=5, help="number of seeds starting at --seed")
    p.add_argument("--kind", type=_kinds, default=list(prox.KINDS))
    p.add_argument("--split", type=_fraction(0.01, 0.99), default=0.7)
    p.add_argument("--node-size-sweep", action="store_true", help=f"add min_node_size in {experiments.NODE_SIZES}")
    p.add_argument("--tree-sweep", action="store_true", help=f"add n_trees in {experiments.TREE_COUNTS}")
    _add_out(p)

    p = sub.add_parser("rerun", help="replay the command recorded in a sidecar")
    p.add_argument("sidecar")
    return parser


# -- helpers ----------------------------------------------------------------


def _load(args):
    schema = read_schema_file(args.schema) if getattr(args, "schema", None) else "infer"
    return load_table(args.input, schema)


def _params(args) -> ForestParams:
    return ForestParams(n_trees=args.trees, mtry=args.mtry, min_node_size=args.min_node_size, seed=args.seed)


def _forest(args, ds) -> Forest:
    if getattr(args, "forest", None):
        f = Forest.load(args.forest)
        f.check_dataset(ds, training=True)
        return f
    return fit_forest(ds, _params(args), threads=args.threads)


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("argv",)}


def _sidecar(args, out: str | Path, extra: dict | None = None) -> None:
    meta = {
        "argv": args.argv,
        "command": args.command,
        "config": _config(args),
        "version": f"rfprox {__version__}",
        **(extra or {}),
    }
    Path(str(out) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v).__name__)


def _finite(v):
    return None if isinstance(v, float) and not np.isfinite(v) else v


# -- commands ---------------------------------------------------------------


def cmd_train(args) -> None:
    ds = _load(args)
    f = fit_forest(ds, _params(args), threads=args.threads)
    f.save(args.out)
    key = "oob_error" if f.classification else "oob_mse"
    n_empty = int((f.oob_tree_counts == 0).sum())
    _sidecar(args, args.out, {key: _finite(f.oob_error(ds)), "params": vars(f.params), "seed": args.seed,
                              "rows_without_oob_trees": n_empty})


def _proximity(args, f: Forest, ds, diagonal=None) -> prox.ProximityMatrix:
    return prox.compute(f, ds.X, args.kind, diagonal=diagonal)


def cmd_prox(args) -> None:
    ds = _load(args)
    f = _forest(args, ds)
    p = _proximity(args, f, ds, args.diagonal)
    if args.symmetric:
        p = prox.symmetrize(p)
    prox.export(p, args.out, sparse_format=args.sparse)
    # export wrote the matrix sidecar; merge the run config into it
    side = Path(args.out + ".json")
    matrix_meta = json.loads(side.read_text())
    flagged = p.flags is not None and bool(np.asarray(p.flags).any())
    _sidecar(args, args.out, {"matrix": matrix_meta, "flagged": flagged})


def cmd_predict_check(args) -> None:
    ds = _load(args)
    if args.split is None:
        f = _forest(args, ds)
        reports = [equivalence_report(f, ds, args.kind)]
    else:
        train, test = experiments.stratified_split(ds, args.split, args.seed)
        f = _forest(args, train)
        reports = [equivalence_report(f, train, args.kind), equivalence_report(f, train, args.kind, test)]
    doc = {"reports": [r.to_json() for r in reports]}
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    _sidecar(args, args.out, {"summary": [r.summary() for r in reports]})


def cmd_impute(args) -> None:
    ds = _load(args)
    masked, record = remove_mcar(ds, args.mcar, args.seed)
    results = impute_kinds(masked, record, args.kind, _params(args), args.iterations, threads=args.threads)
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("kind,seed,iterations,mse_initial,mse\n")
        for k in args.kind:
            r = results[k]
            fh.write(f"{k},{args.seed},{r.iterations},{r.mse[0]!r},{r.mse[-1]!r}\n")
    trace = out.with_name(out.stem + ".trace.csv")
    write_trace([(args.seed, results[k]) for k in args.kind], trace)
    _sidecar(args, args.out, {"trace": str(trace), "masked_cells": len(record.rows),
                              "starved_cells": {k: results[k].starved for k in args.kind}})


def _app_proximity(args, f, ds) -> prox.ProximityMatrix:
    diag = prox.DUPLICATE_OOB if args.kind == prox.GAP else None
    return prox.symmetrize(_proximity(args, f, ds, diag))


def cmd_outliers(args) -> None:
    ds = _load(args)
    if ds.task != "classification":
        raise DataError("outlier scores need a class target")
    f = _forest(args, ds)
    res = outlier_scores(_app_proximity(args, f, ds), ds.y)
    res.write_csv(args.out, ds.y, ds.class_labels)
    labels = ds.class_labels
    _sidecar(args, args.out, {
        "class_median": {labels[k]: v for k, v in res.class_median.items()},
        "class_mad": {labels[k]: v for k, v in res.class_mad.items()},
        "flagged": int(res.flagged.sum()),
    })


def cmd_embed(args) -> None:
    ds = _load(args)
    f = _forest(args, ds)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        emb = mds_embed(_app_proximity(args, f, ds), args.dims)
    for w in caught:
        log.warning("%s", w.message)
    emb.write_csv(args.out)
    _sidecar(args, args.out, {"eigenvalues": emb.eigenvalues, "stress": emb.stress, "dims": emb.coords.shape[1]})


def cmd_experiment(args) -> None:
    sources = experiments.read_manifest(args.input)
    if not sources:
        raise DataError(f"{args.input}: empty manifest")
    rows = experiments.run(
        sources,
        seeds=range(args.seed, args.seed + args.seeds),
        params=ForestParams(n_trees=args.trees, mtry=args.mtry, min_node_size=args.min_node_size),
        kinds=args.kind,
        train_fraction=args.split,
        node_sweep=args.node_size_sweep,
        tree_sweep=args.tree_sweep,
        threads=args.threads,
    )
    write_results(rows, args.out)
    _sidecar(args, args.out, {"slopes": {k: _finite(v) for k, v in experiments.slopes(rows).items()},
                              "datasets": sources, "rows": len(rows)})


COMMANDS = {
    "train": cmd_train,
    "prox": cmd_prox,
    "predict-check": cmd_predict_check,
    "impute": cmd_impute,
    "outliers": cmd_outliers,
    "embed": cmd_embed,
    "experiment": cmd_experiment,
}


def argv_from_sidecar(path: str | Path) -> list[str]:
    try:
        meta = json.loads(Path(path).read_text(encoding="utf-8"))
        argv = meta["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"{path}: not an rfprox sidecar ({exc})") from None
    if not isinstance(argv, list) or not argv or argv[0] == "rerun":
        raise UsageError(f"{path}: sidecar holds no replayable command")
    return [str(a) for a in argv]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="rfprox: %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "rerun":
            argv = argv_from_sidecar(args.sidecar)
            try:
                args = parser.parse_args(argv)
            except SystemExit as exc:
                return int(exc.code or 0)
        args.argv = argv
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"rfprox: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PredictionError, AssertionError) as exc:
        print(f"rfprox: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, ForestError, prox.ProximityError, OutlierError, EmbeddingError, OSError, ValueError) as exc:
        print(f"rfprox: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
