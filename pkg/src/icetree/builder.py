"""Grow a clustering tree by repeatedly splitting the most significant leaf."""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InputError
from .model import Dataset, Ensemble, NodeSubset, Tree, TreeNode, apply_split
from .split import MIN_SIDE, SearchOutcome, optimal_split

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuildConfig:
    k_target: int
    min_side: int = MIN_SIDE

    def __post_init__(self):
        if int(self.k_target) != self.k_target or self.k_target < 1:
            raise InputError(f"k_target must be an integer >= 1, got {self.k_target}")
        if int(self.min_side) != self.min_side or self.min_side < 1:
            raise InputError(f"min_side must be an integer >= 1, got {self.min_side}")


class Expansion(NamedTuple):
    node: int
    feature: int
    threshold: float
    statistic: float
    dof: int
    log_p: float


def dataset_fingerprint(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(f"{ds.n}x{ds.m}\n".encode())
    h.update("\x1f".join(ds.feature_names).encode())
    h.update(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
    return h.hexdigest()


def build_tree(ds: Dataset, ensemble: Ensemble, config: BuildConfig, n_jobs: int = 1) -> Tree:
    """Build a tree with at most ``config.k_target`` leaves.

    The frontier holds every leaf that still admits a split. Each round, the
    leaves not yet scored get their best split (computed once and cached),
    and the one with the smallest log p-value is expanded; ties go to the
    older node. If the frontier runs dry first, the tree is returned early
    with ``early_stopped`` set.
    """
    if ds.n == 0:
        raise InputError("cannot build a tree on an empty dataset")
    ensemble.check_aligned(ds)

    root = TreeNode(id=0, subset=NodeSubset.full(ds.n), depth=0)
    nodes = [root]
    frontier = [0]
    outcomes: dict[int, SearchOutcome] = {}
    trace = []
    n_leaves = 1
    early = False

    def score(node_id):
        return optimal_split(ds, ensemble, nodes[node_id].subset, config.min_side)

    pool = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        while n_leaves < config.k_target:
            pending = [i for i in frontier if i not in outcomes]
            results = pool.map(score, pending) if pool else map(score, pending)
            for node_id, outcome in zip(pending, results):
                outcomes[node_id] = outcome
            frontier = [i for i in frontier if outcomes[i].best is not None]
            if not frontier:
                early = True
                break
            chosen = min(frontier, key=lambda i: (outcomes[i].best.log_p, i))
            split = outcomes[chosen].best
            parent = nodes[chosen]
            left, right = apply_split(ds, parent.subset, split.feature, split.threshold)
            ids = (len(nodes), len(nodes) + 1)
            nodes.append(TreeNode(id=ids[0], subset=left, depth=parent.depth + 1))
            nodes.append(TreeNode(id=ids[1], subset=right, depth=parent.depth + 1))
            parent.split = split
            parent.children = ids
            frontier.remove(chosen)
            frontier.extend(ids)
            trace.append(Expansion(chosen, split.feature, split.threshold,
                                   split.statistic, split.dof, split.log_p))
            n_leaves += 1
    finally:
        if pool:
            pool.shutdown()

    tree = Tree(nodes=nodes, k_target=config.k_target, feature_names=ds.feature_names,
                fingerprint=dataset_fingerprint(ds), trace=trace, outcomes=outcomes)
    if early:
        tree.early_stopped = True
        tree.warning = (f"early stop: {n_leaves} of {config.k_target} leaves; no remaining leaf "
                        f"admits a split with both sides >= {config.min_side}")
        log.warning(tree.warning)
    return tree.finalize()


def expansion_trace(tree: Tree) -> list[Expansion]:
    """Expansions in execution order, one per internal node."""
    return list(tree.trace)
