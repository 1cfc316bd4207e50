"""Command line entry point: ``icetree <command> ...``.

Exit codes: 0 success (early-stop warnings included), 2 bad input,
3 internal contract failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bases import EnsembleSpec, generate_ensemble, minmax_scale
from .builder import BuildConfig, build_tree
from .errors import ContractError, InputError
from .experiment import (RUN_COLUMNS, ExperimentConfig, format_run_row, run_experiment,
                         summary_table, write_outputs)
from .formats import (DEFAULT_MISSING, DataFileSpec, export_tree, load_dataset,
                      load_ensemble, parse_tree_document, render_document, save_ensemble,
                      tree_from_document)
from .metrics import depth_metrics, evaluate

EXIT_INPUT = 2
EXIT_CONTRACT = 3


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", type=Path, help="delimited data file with a header row")
    p.add_argument("--label-column", help="name of the ground-truth label column")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--missing", action="append", metavar="MARKER",
                   help="cell value treated as missing (repeatable; default: empty, ?, NA)")


def _load(args):
    markers = frozenset(args.missing) if args.missing else DEFAULT_MISSING
    spec = DataFileSpec(args.data, args.label_column, args.delimiter, markers)
    ds, dropped = load_dataset(spec)
    if dropped:
        print(f"dropped {dropped} rows with missing values; {ds.n} remain", file=sys.stderr)
    return ds


def _default_k(ds, given):
    if given is not None:
        return given
    if ds.labels is None:
        raise InputError("no label column given: pass the cluster count explicitly")
    return ds.n_classes()


def cmd_gen_bases(args) -> int:
    ds = _load(args)
    if args.k_range:
        k_range = tuple(args.k_range)
    else:
        k = _default_k(ds, args.k)
        k_range = (k, 3 * k)
    ensemble = generate_ensemble(ds, EnsembleSpec(k_range, c=args.c, seed=args.seed), n_jobs=args.threads)
    save_ensemble(ensemble, args.out)
    sidecar = Path(str(args.out) + ".meta.json")
    sidecar.write_text(json.dumps(ensemble.metadata, indent=2, sort_keys=True) + "\n")
    print(f"wrote {ensemble.c} base partitions for {ensemble.n} samples to {args.out}")
    return 0


def cmd_build(args) -> int:
    ds = _load(args)
    ensemble = load_ensemble(args.bases, ds)
    k = _default_k(ds, args.k_target)
    tree_ds = minmax_scale(ds) if args.scale_features else ds
    tree = build_tree(tree_ds, ensemble, BuildConfig(k), n_jobs=args.threads)
    meta = {"k_target": k, "scale_features": args.scale_features,
            "ensemble": ensemble.metadata, "data": str(args.data)}
    Path(args.out).write_bytes(export_tree(tree, args.format, meta))
    max_d, avg_d = depth_metrics(tree)
    print(f"leaves: {tree.n_leaves}")
    print(f"max_depth: {max_d}")
    print(f"avg_depth: {avg_d:.2f}")
    if tree.early_stopped:
        print(f"warning: {tree.warning}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    if args.label_column is None:
        raise InputError("eval needs --label-column")
    ds = _load(args)
    doc = parse_tree_document(Path(args.tree).read_bytes())
    tree_ds = minmax_scale(ds) if doc.metadata.get("scale_features") else ds
    tree = tree_from_document(doc, tree_ds)
    report = evaluate(tree, ds.labels)
    d = report.as_dict()
    print(json.dumps({k: (round(v, 4) if isinstance(v, float) else v) for k, v in d.items()}))
    for key in ("purity", "f1", "nmi"):
        print(f"{key:>10}  {d[key]:.4f}")
    print(f"{'maxDepth':>10}  {d['max_depth']}")
    print(f"{'avgDepth':>10}  {d['avg_depth']:.2f}")
    print(f"{'leaves':>10}  {d['leaves']}")
    return 0


def cmd_render(args) -> int:
    doc = parse_tree_document(Path(args.tree).read_bytes())
    data = render_document(doc, args.format)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode())
    return 0


def cmd_experiment(args) -> int:
    ds = _load(args)
    config = ExperimentConfig(
        c=args.c, k_range=tuple(args.k_range) if args.k_range else None,
        k_target=args.k_target, repeats=args.repeats, seed=args.seed,
        scale_features=args.scale_features, threads=args.threads,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        fh.flush()

        def flush_row(r):
            w.writerow(format_run_row(r))
            fh.flush()

        result = run_experiment(ds, config, on_run=flush_row)
    write_outputs(result, out_dir)
    sys.stdout.write(summary_table(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icetree", description="Clustering ensembles as decision trees.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bases", help="generate k-means base partitions")
    _data_args(p)
    p.add_argument("--c", type=int, default=30, help="ensemble size")
    p.add_argument("--k", type=int, help="true cluster count k; bases draw from [k, 3k]")
    p.add_argument("--k-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_gen_bases)

    p = sub.add_parser("build", help="build a tree from base partitions")
    _data_args(p)
    p.add_argument("--bases", type=Path, required=True)
    p.add_argument("--k-target", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=("structured", "dot", "text"), default="structured")
    p.add_argument("--scale-features", action="store_true",
                   help="min-max scale features to [0, 1] before building")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", help="evaluate a tree against ground-truth labels")
    _data_args(p)
    p.add_argument("--tree", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a structured tree document")
    p.add_argument("tree", type=Path)
    p.add_argument("--format", choices=("structured", "dot", "text"), default="text")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("experiment", help="repeat generate/build/evaluate runs")
    _data_args(p)
    p.add_argument("--c", type=int, default=30)
    p.add_argument("--k-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--k-target", type=int)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--scale-features", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContractError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
