"""Reading and writing datasets, ensembles and trees.

Floats are always written with ``repr`` (shortest round-trip decimal), so a
value read back is bit-identical to the value written.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .builder import Expansion, dataset_fingerprint
from .errors import ContractError, InputError
from .model import CandidateSplit, Dataset, Ensemble, NodeSubset, Tree, TreeNode

FORMAT_VERSION = 1
DEFAULT_MISSING = frozenset({"", "?", "NA"})
ENSEMBLE_MAGIC = "#icetree-ensemble "


@dataclass(frozen=True)
class DataFileSpec:
    path: Path
    label_column: Optional[str] = None
    delimiter: str = ","
    missing_markers: frozenset = DEFAULT_MISSING


def load_dataset(spec: DataFileSpec) -> tuple[Dataset, int]:
    """Parse a delimited file with a header row; rows with a missing marker are dropped.

    Returns the dataset and the number of dropped rows.
    """
    path = Path(spec.path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text), delimiter=spec.delimiter))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise InputError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    seen = set()
    for name in header:
        if name in seen:
            raise InputError(f"{path}: duplicate column name {name!r}")
        seen.add(name)
    label_pos = None
    if spec.label_column is not None:
        if spec.label_column not in header:
            raise InputError(f"{path}: label column {spec.label_column!r} not found")
        label_pos = header.index(spec.label_column)
    feature_pos = [i for i in range(len(header)) if i != label_pos]

    values, labels = [], []
    dropped = 0
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}")
        cells = [c.strip() for c in row]
        if any(c in spec.missing_markers for c in cells):
            dropped += 1
            continue
        parsed = []
        for i in feature_pos:
            try:
                v = float(cells[i])
            except ValueError:
                raise InputError(
                    f"{path}: row {line_no}, column {header[i]!r}: non-numeric value {cells[i]!r}"
                ) from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {line_no}, column {header[i]!r}: non-finite value")
            parsed.append(v)
        values.append(parsed)
        if label_pos is not None:
            labels.append(cells[label_pos])
    if not values:
        raise InputError(f"{path}: empty dataset")
    names = [header[i] for i in feature_pos]
    ds = Dataset(np.array(values, dtype=np.float64), names, labels if label_pos is not None else None)
    return ds, dropped


def save_dataset(ds: Dataset, path, label_column: str = "class", delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        header = list(ds.feature_names)
        if ds.labels is not None:
            header.append(label_column)
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            if ds.labels is not None:
                row.append(str(ds.labels[i]))
            w.writerow(row)


def save_ensemble(ensemble: Ensemble, path) -> None:
    meta = {"c": ensemble.c, "n": ensemble.n, "metadata": ensemble.metadata}
    with open(path, "w", newline="") as fh:
        fh.write(ENSEMBLE_MAGIC + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for col in ensemble.partitions.T:
            w.writerow(col.tolist())


def load_ensemble(path, ds: Optional[Dataset] = None) -> Ensemble:
    """Read an ensemble file; with ``ds`` given, also check row alignment."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].startswith(ENSEMBLE_MAGIC):
        raise InputError(f"{path}: missing ensemble header line")
    try:
        meta = json.loads(lines[0][len(ENSEMBLE_MAGIC):])
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: bad header: {exc}") from exc
    c = int(meta["c"])
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != c:
            raise InputError(f"{path}: row {line_no} has {len(cells)} labels, expected {c}")
        try:
            rows.append([int(x) for x in cells])
        except ValueError:
            raise InputError(f"{path}: row {line_no}: non-integer label") from None
    if not rows:
        raise InputError(f"{path}: no label rows")
    if "n" in meta and len(rows) != meta["n"]:
        raise InputError(f"{path}: header says {meta['n']} rows, found {len(rows)}")
    ensemble = Ensemble(np.array(rows, dtype=np.int64).T, metadata=meta.get("metadata"))
    if ds is not None:
        ensemble.check_aligned(ds)
    return ensemble


# --- trees -----------------------------------------------------------------

@dataclass
class TreeDocument:
    """Serializable description of a built tree (no sample indices)."""

    fingerprint: dict
    nodes: list
    trace: list
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_tree(cls, tree: Tree, metadata: Optional[dict] = None) -> "TreeDocument":
        if not tree.finalized:
            raise ContractError("only finalized trees can be exported")
        nodes = []
        for node in tree.nodes:
            entry = {"id": node.id, "kind": "leaf" if node.is_leaf else "split",
                     "depth": node.depth, "samples": len(node.subset)}
            if node.is_leaf:
                entry["cluster"] = node.leaf_cluster
            else:
                s = node.split
                entry.update(feature=s.feature, feature_name=tree.feature_names[s.feature],
                             threshold=s.threshold, statistic=s.statistic, dof=s.dof,
                             log_p=s.log_p, children=list(node.children))
            nodes.append(entry)
        meta = dict(metadata or {})
        meta.setdefault("k_target", tree.k_target)
        meta.setdefault("early_stopped", tree.early_stopped)
        if tree.warning:
            meta.setdefault("warning", tree.warning)
        return cls(
            fingerprint={"n": tree.n, "m": len(tree.feature_names),
                         "feature_names": list(tree.feature_names), "sha256": tree.fingerprint},
            nodes=nodes,
            trace=[list(t) for t in tree.trace],
            metadata=meta,
        )

    def to_dict(self) -> dict:
        return {"format_version": self.format_version, "fingerprint": self.fingerprint,
                "metadata": self.metadata, "nodes": self.nodes, "trace": self.trace}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeDocument":
        if d.get("format_version") != FORMAT_VERSION:
            raise InputError(f"unsupported tree format version {d.get('format_version')!r}")
        doc = cls(fingerprint=d["fingerprint"], nodes=d["nodes"], trace=d["trace"],
                  metadata=d.get("metadata", {}), format_version=d["format_version"])
        doc.check()
        return doc

    def check(self) -> None:
        by_id = {n["id"]: n for n in self.nodes}
        if len(by_id) != len(self.nodes) or 0 not in by_id:
            raise InputError("tree document: node ids must be unique and include root 0")
        seen = set()
        stack = [0]
        while stack:
            node = by_id[stack.pop()]
            if node["id"] in seen:
                raise InputError("tree document: node graph is not a tree")
            seen.add(node["id"])
            if node["kind"] == "split":
                left, right = (by_id.get(c) for c in node["children"])
                if left is None or right is None:
                    raise InputError(f"tree document: node {node['id']} has a missing child")
                if left["samples"] + right["samples"] != node["samples"]:
                    raise InputError(f"tree document: sample counts disagree at node {node['id']}")
                stack.extend(node["children"])
        if seen != set(by_id):
            raise InputError("tree document: unreachable nodes")


def tree_document_bytes(doc: TreeDocument) -> bytes:
    return (json.dumps(doc.to_dict(), indent=2, allow_nan=True) + "\n").encode()


def parse_tree_document(data: bytes) -> TreeDocument:
    try:
        return TreeDocument.from_dict(json.loads(data))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"malformed tree document: {exc}") from exc


def tree_from_document(doc: TreeDocument, ds: Dataset) -> Tree:
    """Rebuild a Tree by routing ``ds`` through the stored predicates.

    ``ds`` must be the dataset the tree was built on (checked by fingerprint).
    """
    fp = doc.fingerprint
    if (fp["n"] != ds.n or fp["m"] != ds.m or list(ds.feature_names) != fp["feature_names"]
            or fp["sha256"] != dataset_fingerprint(ds)):
        raise InputError("dataset fingerprint does not match the tree document")
    by_id = {n["id"]: n for n in doc.nodes}
    nodes = [None] * len(doc.nodes)
    stack = [(0, NodeSubset.full(ds.n))]
    while stack:
        node_id, subset = stack.pop()
        entry = by_id[node_id]
        node = TreeNode(id=node_id, subset=subset, depth=entry["depth"])
        if entry["kind"] == "split":
            node.split = CandidateSplit(entry["feature"], entry["threshold"], entry["statistic"],
                                        entry["dof"], entry["log_p"])
            node.children = tuple(entry["children"])
            goes_left = ds.features[subset.indices, entry["feature"]] <= entry["threshold"]
            stack.append((node.children[0], NodeSubset(subset.indices[goes_left])))
            stack.append((node.children[1], NodeSubset(subset.indices[~goes_left])))
        if len(subset) != entry["samples"]:
            raise InputError(f"node {node_id}: routed {len(subset)} samples, document says {entry['samples']}")
        nodes[node_id] = node
    tree = Tree(nodes=nodes, k_target=doc.metadata.get("k_target", len(nodes)),
                feature_names=ds.feature_names, fingerprint=fp["sha256"],
                early_stopped=doc.metadata.get("early_stopped", False),
                warning=doc.metadata.get("warning"),
                trace=[Expansion(*t) for t in doc.trace])
    return tree.finalize()


def render_text(doc: TreeDocument) -> str:
    """Indented outline, one line per node."""
    by_id = {n["id"]: n for n in doc.nodes}
    lines = []
    stack = [(0, 0)]
    while stack:
        node_id, indent = stack.pop()
        node = by_id[node_id]
        pad = "  " * indent
        if node["kind"] == "leaf":
            lines.append(f"{pad}cluster {node['cluster']}  (n={node['samples']})")
        else:
            lines.append(f"{pad}{node['feature_name']} <= {node['threshold']!r}  "
                         f"(n={node['samples']}, chi2={node['statistic']:.4f}, "
                         f"dof={node['dof']}, log_p={node['log_p']:.4f})")
            left, right = node["children"]
            stack.append((right, indent + 1))
            stack.append((left, indent + 1))
    return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def render_dot(doc: TreeDocument) -> str:
    out = ["digraph icetree {", '  node [fontname="Helvetica"];']
    for node in sorted(doc.nodes, key=lambda n: n["id"]):
        if node["kind"] == "leaf":
            label = f"cluster {node['cluster']}\\nn = {node['samples']}"
            out.append(f'  n{node["id"]} [shape=box, label="{label}"];')
        else:
            label = _dot_escape(f"{node['feature_name']} ≤ {node['threshold']!r}")
            out.append(f'  n{node["id"]} [shape=ellipse, label="{label}"];')
    for node in sorted(doc.nodes, key=lambda n: n["id"]):
        if node["kind"] == "split":
            left, right = node["children"]
            out.append(f'  n{node["id"]} -> n{left} [label="yes"];')
            out.append(f'  n{node["id"]} -> n{right} [label="no"];')
    out.append("}")
    return "\n".join(out) + "\n"


def render_document(doc: TreeDocument, fmt: str) -> bytes:
    if fmt == "structured":
        return tree_document_bytes(doc)
    if fmt == "dot":
        return render_dot(doc).encode()
    if fmt == "text":
        return render_text(doc).encode()
    raise InputError(f"unknown export format {fmt!r} (expected structured, dot or text)")


def export_tree(tree: Tree, fmt: str = "structured", metadata: Optional[dict] = None) -> bytes:
    return render_document(TreeDocument.from_tree(tree, metadata), fmt)
