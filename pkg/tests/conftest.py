"""Shared fixtures and independent reference implementations for the tests.

The oracles below deliberately avoid the package's own table and statistic
code: they count with plain dictionaries and evaluate the Pearson sum in
pure Python.
"""
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from icetree import Dataset, Ensemble

DATA = Path(__file__).parent / "data"
TIE_RTOL = 1e-12


def pearson_2xp(left_counts: Counter, right_counts: Counter) -> float:
    labels = set(left_counts) | set(right_counts)
    n_left = sum(left_counts.values())
    n_right = sum(right_counts.values())
    n = n_left + n_right
    if n_left == 0 or n_right == 0:
        return 0.0
    total = 0.0
    for lab in labels:
        col = left_counts[lab] + right_counts[lab]
        for observed, row in ((left_counts[lab], n_left), (right_counts[lab], n_right)):
            expected = row * col / n
            total += (observed - expected) ** 2 / expected
    return total


def brute_force_split(x, partitions, idx, min_side=5):
    """Every (feature, observed value) cut, each scored from scratch.

    Returns (feature, threshold, statistic, dof) or None, applying the
    lowest-feature-then-lowest-threshold rule among near-equal maxima.
    """
    idx = list(idx)
    n = len(idx)
    candidates = []
    for j in range(x.shape[1]):
        for v in sorted(set(x[i, j] for i in idx)):
            left = [i for i in idx if x[i, j] <= v]
            right = [i for i in idx if x[i, j] > v]
            if len(left) < min_side or len(right) < min_side:
                continue
            stat = 0.0
            for part in partitions:
                stat += pearson_2xp(Counter(part[i] for i in left), Counter(part[i] for i in right))
            candidates.append((j, v, stat))
    if not candidates:
        return None
    top = max(s for _, _, s in candidates)
    floor = top - TIE_RTOL * abs(top)
    j, v, stat = min((c for c in candidates if c[2] >= floor), key=lambda c: (c[0], c[1]))
    dof = sum(len(set(part[i] for i in idx)) - 1 for part in partitions)
    return j, v, stat, dof


def random_instance(rng, n_max=200, m_max=6, c_max=5, label_max=5, value_levels=None):
    """Random dataset + ensemble + subset; small value sets force ties and duplicates."""
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    c = int(rng.integers(1, c_max + 1))
    levels = value_levels or int(rng.integers(2, 40))
    x = rng.integers(0, levels, size=(n, m)).astype(float) / 4.0
    parts = np.vstack([rng.integers(0, int(rng.integers(1, label_max + 1)), size=n) for _ in range(c)])
    ds = Dataset(x)
    ens = Ensemble(parts)
    keep = rng.random(n) < rng.uniform(0.3, 1.0)
    idx = np.flatnonzero(keep)
    if idx.size == 0:
        idx = np.arange(n)
    return ds, ens, idx


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture
def blobs_1d():
    """Two 1-D blobs of 30 points separated by a wide gap, with three perfect bases."""
    left = np.linspace(0.0, 2.9, 30)
    right = np.linspace(10.0, 12.9, 30)
    x = np.concatenate([left, right])[:, None]
    truth = np.array([0] * 30 + [1] * 30)
    return Dataset(x, ["x"], truth), Ensemble(np.vstack([truth, truth, 1 - truth]))


def check_tree_contract(tree, ds, ens, min_side=5):
    """Assert the structural and ordering guarantees of a finished tree."""
    from icetree import NodeSubset, apply_split, optimal_split

    nodes = tree.nodes
    root = nodes[tree.root]
    assert root.subset == NodeSubset.full(ds.n)
    leaves = [nd for nd in nodes if nd.is_leaf]
    # leaves partition the root exactly
    covered = np.concatenate([leaf.subset.indices for leaf in leaves])
    assert np.array_equal(np.sort(covered), np.arange(ds.n))
    assert [leaf.leaf_cluster for leaf in leaves] == list(range(len(leaves)))
    assert len(leaves) <= tree.k_target
    if not tree.early_stopped:
        assert len(leaves) == tree.k_target
    assert len(tree.trace) == len(leaves) - 1

    for nd in nodes:
        if nd.is_leaf:
            assert nd.split is None
            continue
        left_id, right_id = nd.children
        left, right = apply_split(ds, nd.subset, nd.split.feature, nd.split.threshold)
        assert nodes[left_id].subset == left and nodes[right_id].subset == right
        assert len(left) >= min_side and len(right) >= min_side
        assert nodes[left_id].depth == nodes[right_id].depth == nd.depth + 1
        # cached outcome is what a fresh search on the stored subset returns
        fresh = optimal_split(ds, ens, nd.subset, min_side)
        assert fresh.best == nd.split == tree.outcomes[nd.id].best

    # replay the frontier: each expansion had the smallest (log_p, id)
    frontier = {tree.root}
    for rec in tree.trace:
        live = {i for i in frontier if tree.outcomes[i].best is not None}
        assert rec.node in live
        key = (tree.outcomes[rec.node].best.log_p, rec.node)
        assert all(key <= (tree.outcomes[i].best.log_p, i) for i in live)
        assert (rec.feature, rec.threshold, rec.statistic, rec.dof, rec.log_p) == (
            nodes[rec.node].split.feature, nodes[rec.node].split.threshold,
            nodes[rec.node].split.statistic, nodes[rec.node].split.dof, nodes[rec.node].split.log_p)
        frontier = (live - {rec.node}) | set(nodes[rec.node].children)
    if tree.early_stopped:
        assert all(tree.outcomes[i].best is None for i in frontier)


ACCEPTANCE_RESULTS = {}


def record(criterion, ok, detail):
    """Remember one criterion outcome; printed again in the terminal summary."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
