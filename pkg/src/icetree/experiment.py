"""Repeated generate -> build -> evaluate runs with deterministic seeding."""
from __future__ import annotations

import csv
import hashlib
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .bases import EnsembleSpec, generate_ensemble, minmax_scale
from .builder import BuildConfig, build_tree
from .errors import InputError
from .metrics import evaluate
from .model import Dataset

METRICS = ("purity", "f1", "nmi", "max_depth", "avg_depth")


def derive_seed(master: int, run: int) -> int:
    """63-bit seed for one run, from SHA-256 of (master, run)."""
    digest = hashlib.sha256(f"icetree:{master}:{run}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class ExperimentConfig:
    c: int = 30
    k_range: Optional[tuple[int, int]] = None  # default [k, 3k]
    k_target: Optional[int] = None             # default: number of classes
    repeats: int = 10
    seed: int = 0
    scale_features: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise InputError(f"repeats must be >= 1, got {self.repeats}")


@dataclass(frozen=True)
class RunResult:
    run: int
    seed: int
    purity: float
    f1: float
    nmi: float
    max_depth: int
    avg_depth: float
    leaves: int
    early_stopped: bool


@dataclass
class ExperimentResult:
    runs: list
    k_target: int
    k_range: tuple[int, int]

    def summary(self) -> dict:
        out = {}
        for name in METRICS:
            vals = np.array([getattr(r, name) for r in self.runs], dtype=np.float64)
            out[name] = (float(vals.mean()), float(vals.std()))
        return out


def _resolve(ds: Dataset, config: ExperimentConfig) -> tuple[int, tuple[int, int]]:
    k = config.k_target
    if k is None:
        if ds.labels is None:
            raise InputError("k_target is required when the dataset has no labels")
        k = ds.n_classes()
    k_range = tuple(config.k_range) if config.k_range else (k, 3 * k)
    return k, k_range


def _one_run(ds: Dataset, tree_ds: Dataset, config: ExperimentConfig, k: int, k_range, run: int) -> RunResult:
    seed = derive_seed(config.seed, run)
    ensemble = generate_ensemble(ds, EnsembleSpec(k_range, c=config.c, seed=seed))
    tree = build_tree(tree_ds, ensemble, BuildConfig(k))
    m = evaluate(tree, ds.labels)
    return RunResult(run, seed, m.purity, m.f1, m.nmi, m.max_depth, m.avg_depth,
                     m.leaves, tree.early_stopped)


def run_experiment(ds: Dataset, config: ExperimentConfig, on_run=None) -> ExperimentResult:
    """Run ``config.repeats`` independent repetitions of the full protocol.

    ``on_run`` is called with each RunResult in run order as soon as it is
    available, so callers can persist partial results.
    """
    if ds.labels is None:
        raise InputError("experiments need ground-truth labels for evaluation")
    k, k_range = _resolve(ds, config)
    tree_ds = minmax_scale(ds) if config.scale_features else ds

    def job(run):
        return _one_run(ds, tree_ds, config, k, k_range, run)

    runs = []
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            for res in pool.map(job, range(config.repeats)):
                runs.append(res)
                if on_run:
                    on_run(res)
    else:
        for run in range(config.repeats):
            res = job(run)
            runs.append(res)
            if on_run:
                on_run(res)
    return ExperimentResult(runs, k, k_range)


RUN_COLUMNS = ("run", "seed", "purity", "f1", "nmi", "max_depth", "avg_depth", "leaves", "early_stopped")


def format_run_row(r: RunResult) -> list[str]:
    return [str(r.run), str(r.seed), f"{r.purity:.4f}", f"{r.f1:.4f}", f"{r.nmi:.4f}",
            str(r.max_depth), f"{r.avg_depth:.4f}", str(r.leaves), str(r.early_stopped).lower()]


def summary_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "mean", "std"])
    for name, (mean, std) in result.summary().items():
        w.writerow([name, f"{mean:.4f}", f"{std:.4f}"])
    return buf.getvalue()


def summary_table(result: ExperimentResult) -> str:
    """Per-run rows followed by one mean +- std row, aligned for reading."""
    header = ["run", "purity", "f1", "nmi", "maxDepth", "avgDepth"]
    body = [[str(r.run), f"{r.purity:.4f}", f"{r.f1:.4f}", f"{r.nmi:.4f}",
             str(r.max_depth), f"{r.avg_depth:.2f}"] for r in result.runs]
    s = result.summary()
    body.append(["mean±std"] + [f"{s[m][0]:.4f}±{s[m][1]:.4f}" for m in ("purity", "f1", "nmi")]
                + [f"{s['max_depth'][0]:.2f}±{s['max_depth'][1]:.2f}",
                   f"{s['avg_depth'][0]:.2f}±{s['avg_depth'][1]:.2f}"])
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in [header] + body]
    return "\n".join(lines) + "\n"


def write_outputs(result: ExperimentResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.csv").write_text(summary_csv(result))
    (out_dir / "summary.txt").write_text(summary_table(result))
