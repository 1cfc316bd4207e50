"""Core data model: datasets, ensembles, node subsets, splits and trees.

Everything here is treated as immutable once constructed. Arrays handed to
the constructors are copied and marked read-only so that finished objects can
be shared between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ContractError, InputError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


class Dataset:
    """An N x M matrix of finite reals with feature names and optional labels."""

    def __init__(self, features, feature_names: Optional[Sequence[str]] = None, labels=None):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2:
            raise InputError(f"features must be a 2-D matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InputError("features contain NaN or infinite values")
        if feature_names is None:
            feature_names = [f"f{j + 1}" for j in range(x.shape[1])]
        names = tuple(str(s) for s in feature_names)
        if len(names) != x.shape[1]:
            raise InputError(f"expected {x.shape[1]} feature names, got {len(names)}")
        if len(set(names)) != len(names):
            raise InputError("feature names must be distinct")
        if labels is not None:
            labels = np.asarray(labels)
            if labels.ndim != 1 or labels.shape[0] != x.shape[0]:
                raise InputError(f"labels must have length {x.shape[0]}")
            labels = _frozen(labels)
        self.features = _frozen(x)
        self.feature_names = names
        self.labels = labels

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def with_features(self, features) -> "Dataset":
        """Same names and labels, different feature values (e.g. after scaling)."""
        return Dataset(features, self.feature_names, self.labels)

    def n_classes(self) -> int:
        if self.labels is None:
            raise InputError("dataset has no ground-truth labels")
        return len(np.unique(self.labels))

    def __repr__(self) -> str:
        has = "labels" if self.labels is not None else "no labels"
        return f"Dataset(n={self.n}, m={self.m}, {has})"


class Ensemble:
    """c base partitions over the same n samples.

    ``partitions`` has shape (c, n); partition t uses labels in
    ``[0, alphabet_sizes[t])`` where the alphabet size is one past the
    largest label that actually occurs.
    """

    def __init__(self, partitions, metadata: Optional[dict] = None):
        p = np.asarray(partitions)
        if p.ndim != 2 or p.shape[0] < 1:
            raise InputError("partitions must be a non-empty (c, n) matrix")
        if not np.issubdtype(p.dtype, np.integer):
            if not np.all(np.equal(np.mod(p, 1), 0)):
                raise InputError("partition labels must be integers")
        p = p.astype(np.int64)
        if p.size and p.min() < 0:
            raise InputError("partition labels must be non-negative")
        self.partitions = _frozen(p)
        self.alphabet_sizes = tuple(int(row.max()) + 1 if row.size else 1 for row in p)
        self.metadata = dict(metadata or {})

    @classmethod
    def from_label_vectors(cls, vectors, metadata: Optional[dict] = None) -> "Ensemble":
        """Build from arbitrary hashable labels, renumbering each partition densely."""
        rows = []
        for v in vectors:
            _, inv = np.unique(np.asarray(v), return_inverse=True)
            rows.append(inv.reshape(-1))
        lengths = {len(r) for r in rows}
        if len(lengths) > 1:
            raise InputError("all partitions must have the same length")
        return cls(np.vstack(rows), metadata)

    @property
    def c(self) -> int:
        return self.partitions.shape[0]

    @property
    def n(self) -> int:
        return self.partitions.shape[1]

    def check_aligned(self, ds: Dataset) -> None:
        if self.n != ds.n:
            raise InputError(f"ensemble has {self.n} samples but dataset has {ds.n}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ensemble):
            return NotImplemented
        return (self.partitions.shape == other.partitions.shape
                and bool(np.array_equal(self.partitions, other.partitions)))

    def __repr__(self) -> str:
        return f"Ensemble(c={self.c}, n={self.n}, alphabet_sizes={list(self.alphabet_sizes)})"


class NodeSubset:
    """Ordered, duplicate-free sample positions belonging to one tree node."""

    __slots__ = ("indices",)

    def __init__(self, indices):
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        self.indices = _frozen(idx)

    @classmethod
    def full(cls, n: int) -> "NodeSubset":
        return cls(np.arange(n, dtype=np.int64))

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, NodeSubset):
            return NotImplemented
        return bool(np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash(self.indices.tobytes())

    def __repr__(self) -> str:
        return f"NodeSubset(size={len(self)})"


@dataclass(frozen=True)
class CandidateSplit:
    """The predicate ``features[:, feature] <= threshold`` with its score."""

    feature: int
    threshold: float
    statistic: float
    dof: int
    log_p: float


@dataclass
class TreeNode:
    id: int
    subset: NodeSubset
    depth: int
    split: Optional[CandidateSplit] = None
    children: Optional[tuple[int, int]] = None
    leaf_cluster: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass
class Tree:
    """Binary clustering tree stored as a node arena indexed by creation order."""

    nodes: list[TreeNode]
    k_target: int
    feature_names: tuple[str, ...] = ()
    fingerprint: str = ""
    root: int = 0
    early_stopped: bool = False
    warning: Optional[str] = None
    trace: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict, repr=False)
    finalized: bool = False

    @property
    def n(self) -> int:
        return len(self.nodes[self.root].subset)

    def leaves(self) -> list[TreeNode]:
        return [node for node in self.nodes if node.is_leaf]

    @property
    def n_leaves(self) -> int:
        return sum(1 for node in self.nodes if node.is_leaf)

    def finalize(self) -> "Tree":
        """Number the leaves in creation order and freeze the structure."""
        cluster = 0
        for node in self.nodes:
            if node.is_leaf:
                node.leaf_cluster = cluster
                cluster += 1
            else:
                node.leaf_cluster = None
        self.nodes = tuple(self.nodes)
        self.trace = tuple(self.trace)
        self.finalized = True
        return self


def distinct_values(ds: Dataset, subset: NodeSubset, j: int) -> np.ndarray:
    """Sorted distinct values of feature ``j`` over ``subset``."""
    if len(subset) == 0:
        raise ContractError("distinct_values needs a non-empty subset")
    if not 0 <= j < ds.m:
        raise ContractError(f"feature index {j} out of range [0, {ds.m})")
    return np.unique(ds.features[subset.indices, j])


def apply_split(ds: Dataset, subset: NodeSubset, j: int, v: float) -> tuple[NodeSubset, NodeSubset]:
    """Split ``subset`` into (f_j <= v, f_j > v), preserving order on both sides."""
    if not 0 <= j < ds.m:
        raise ContractError(f"feature index {j} out of range [0, {ds.m})")
    idx = subset.indices
    goes_left = ds.features[idx, j] <= v
    return NodeSubset(idx[goes_left]), NodeSubset(idx[~goes_left])


def assign_clusters(tree: Tree) -> np.ndarray:
    """Label every sample with the cluster id of the leaf that contains it."""
    if not tree.finalized:
        raise ContractError("tree must be finalized before assigning clusters")
    labels = np.full(tree.n, -1, dtype=np.int64)
    for leaf in tree.leaves():
        if np.any(labels[leaf.subset.indices] != -1):
            raise ContractError(f"leaf {leaf.id} overlaps another leaf")
        labels[leaf.subset.indices] = leaf.leaf_cluster
    if np.any(labels < 0):
        raise ContractError("some samples are not covered by any leaf")
    return labels


def route_samples(tree: Tree, features: np.ndarray) -> np.ndarray:
    """Cluster ids for arbitrary rows by walking the stored split predicates."""
    if not tree.finalized:
        raise ContractError("tree must be finalized before routing samples")
    x = np.asarray(features, dtype=np.float64)
    out = np.empty(x.shape[0], dtype=np.int64)
    stack = [(tree.root, np.arange(x.shape[0]))]
    while stack:
        node_id, rows = stack.pop()
        node = tree.nodes[node_id]
        if node.is_leaf:
            out[rows] = node.leaf_cluster
            continue
        left = x[rows, node.split.feature] <= node.split.threshold
        stack.append((node.children[0], rows[left]))
        stack.append((node.children[1], rows[~left]))
    return out
