"""External clustering quality (purity, pairwise F1, NMI) and tree depth metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError
from .model import Tree, assign_clusters


@dataclass(frozen=True)
class MetricsReport:
    purity: float
    f1: float
    nmi: float
    max_depth: int
    avg_depth: float
    n: int
    leaves: int

    def as_dict(self) -> dict:
        return asdict(self)


def _contingency(pred, true) -> np.ndarray:
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape or pred.ndim != 1:
        raise InputError(f"label vectors differ in shape: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise InputError("label vectors are empty")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(true, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p.reshape(-1), t.reshape(-1)), 1)
    return table


def purity(pred, true) -> float:
    table = _contingency(pred, true)
    return int(table.max(axis=1).sum()) / int(table.sum())


def _pairs(counts) -> int:
    counts = np.asarray(counts, dtype=np.int64)
    return int((counts * (counts - 1) // 2).sum())


def pairwise_f1(pred, true) -> float:
    """F1 over sample pairs; a pair is positive when both samples share a cluster."""
    table = _contingency(pred, true)
    if table.sum() < 2:
        raise InputError("pairwise F1 needs at least two samples")
    tp = _pairs(table)
    pred_pos = _pairs(table.sum(axis=1))
    true_pos = _pairs(table.sum(axis=0))
    if pred_pos == 0 and true_pos == 0:
        return 1.0
    # integer form of 2PR/(P+R)
    return 2 * tp / (pred_pos + true_pos)


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, true) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = _contingency(pred, true)
    n = int(table.sum())
    h_pred = _entropy(table.sum(axis=1), n)
    h_true = _entropy(table.sum(axis=0), n)
    if h_pred == 0 and h_true == 0:
        return 1.0
    if h_pred == 0 or h_true == 0:
        return 0.0
    joint = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / (n * n)
    nz = table > 0
    mi = float((joint[nz] * np.log(joint[nz] / outer[nz])).sum())
    return min(1.0, max(0.0, mi / ((h_pred + h_true) / 2)))


def depth_metrics(tree: Tree) -> tuple[int, float]:
    """Maximum and mean leaf depth, counting edges from the root."""
    depths = [leaf.depth for leaf in tree.leaves()]
    return max(depths), sum(depths) / len(depths)


def evaluate(tree: Tree, true_labels) -> MetricsReport:
    pred = assign_clusters(tree)
    max_d, avg_d = depth_metrics(tree)
    return MetricsReport(
        purity=purity(pred, true_labels),
        f1=pairwise_f1(pred, true_labels),
        nmi=nmi(pred, true_labels),
        max_depth=max_d,
        avg_depth=avg_d,
        n=len(pred),
        leaves=tree.n_leaves,
    )
