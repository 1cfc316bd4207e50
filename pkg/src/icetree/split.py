"""Exhaustive best-split search over all (feature, observed value) predicates.

For each feature the node's samples are sorted once and the per-partition
contingency tables start with every sample on the right. Each group of equal
feature values then moves to the left in ascending order; the running left
counts are a prefix sum over the sorted one-hot label matrix, so every table
update is a single vectorized step instead of a rebuild.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import CandidateSplit, Dataset, Ensemble, NodeSubset
from .stats import chi_sq_log_sf

MIN_SIDE = 5

# Statistics within this relative distance of the maximum count as ties, so the
# (feature, threshold) tie-break is not decided by summation-order noise.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SearchOutcome:
    best: Optional[CandidateSplit]
    evaluated: int


@dataclass(frozen=True)
class _NodeLabels:
    onehot: np.ndarray      # (n, R) one column per (partition, present label)
    col_totals: np.ndarray  # (R,)
    dof: int


def _node_labels(ensemble: Ensemble, idx: np.ndarray) -> _NodeLabels:
    n = idx.shape[0]
    codes = np.empty((n, ensemble.c), dtype=np.int64)
    offset = 0
    for t in range(ensemble.c):
        present, local = np.unique(ensemble.partitions[t, idx], return_inverse=True)
        codes[:, t] = local.reshape(-1) + offset
        offset += len(present)
    onehot = np.zeros((n, offset), dtype=np.int32)
    onehot[np.arange(n)[:, None], codes] = 1
    col_totals = onehot.sum(axis=0, dtype=np.int64)
    return _NodeLabels(onehot, col_totals, offset - ensemble.c)


def _scan_feature(values: np.ndarray, labels: _NodeLabels, min_side: int, descending: bool):
    """Score every admissible threshold of one feature.

    Returns (thresholds, statistics) for the admissible cuts, thresholds ascending.
    """
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    xs = values[order]
    # last sorted position of each distinct value
    ends = np.flatnonzero(np.append(xs[1:] != xs[:-1], True))
    n_left = ends + 1
    ok = (n_left >= min_side) & (n - n_left >= min_side)
    if not ok.any():
        return xs[:0], np.empty(0)
    ends, n_left = ends[ok], n_left[ok]
    sorted_onehot = labels.onehot[order]
    if descending:
        # start with everything on the left, shift groups right from the top
        # admissible cuts keep the right side non-empty, so ends + 1 < n
        right_counts = np.cumsum(sorted_onehot[::-1], axis=0, dtype=np.int64)[::-1]
        right = right_counts[ends + 1]
        left = labels.col_totals - right
    else:
        left = np.cumsum(sorted_onehot, axis=0, dtype=np.int64)[ends]
        right = labels.col_totals - left
    stats = _chi2_rows(left, right, n_left, n - n_left, labels.col_totals, n)
    return xs[ends], stats


def _chi2_rows(left, right, n_left, n_right, col_totals, n):
    """Summed Pearson statistic for many candidate cuts at once (one per row)."""
    col_share = col_totals / n
    e_left = n_left[:, None] * col_share
    e_right = n_right[:, None] * col_share
    cells = (left - e_left) ** 2 / e_left + (right - e_right) ** 2 / e_right
    return cells.sum(axis=1)


def optimal_split(
    ds: Dataset,
    ensemble: Ensemble,
    subset: NodeSubset,
    min_side: int = MIN_SIDE,
    n_jobs: int = 1,
    descending: bool = False,
) -> SearchOutcome:
    """Find the split of ``subset`` with the largest summed chi-squared statistic.

    Cuts leaving fewer than ``min_side`` samples on either side are skipped.
    Ties go to the lowest feature index, then the lowest threshold. The winner
    carries the log p-value of its statistic under chi2(dof), where dof counts
    the labels present in the node minus one, summed over partitions.
    """
    idx = subset.indices
    n = idx.shape[0]
    if n < 2 * min_side:
        return SearchOutcome(None, 0)
    labels = _node_labels(ensemble, idx)
    block = ds.features[idx]

    def scan(j):
        return _scan_feature(block[:, j], labels, min_side, descending)

    if n_jobs > 1 and ds.m > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_feature = list(pool.map(scan, range(ds.m)))
    else:
        per_feature = [scan(j) for j in range(ds.m)]

    evaluated = sum(len(s) for _, s in per_feature)
    if evaluated == 0:
        return SearchOutcome(None, 0)
    top = max(float(s.max()) for _, s in per_feature if len(s))
    floor = top - TIE_RTOL * abs(top)
    for j, (thresholds, stats) in enumerate(per_feature):
        hits = np.flatnonzero(stats >= floor)
        if hits.size:
            k = hits[0]
            statistic = float(stats[k])
            break
    dof = labels.dof
    log_p = chi_sq_log_sf(statistic, dof) if dof > 0 else 0.0
    best = CandidateSplit(j, float(thresholds[k]), statistic, dof, log_p)
    return SearchOutcome(best, evaluated)
