"""Datasets: plain-text loading, synthetic block-model graphs, splits, exports.

On-disk layout of a dataset directory (UTF-8, LF line endings):

    edges.tsv     src<TAB>dst per line, 0-indexed; '#' lines are comments
    features.csv  one node per line, comma-separated reals; line i is node i-1
    labels.tsv    node<TAB>class per line
    meta.json     optional: {"name": ..., "num_classes": ...}
    splits.json   optional: {"train": [...], "val": [...], "test": [...]}
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .graph import EdgeList, build_graph, read_edge_list, write_edge_list
from .trainer import SplitMask


@dataclass
class DatasetBundle:
    graph: object
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"
    raw_edge_count: int = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.graph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must have {n} rows, got shape {self.features.shape}")
        if self.labels.shape != (n,):
            raise ValueError(f"labels must have shape ({n},), got {self.labels.shape}")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    @property
    def num_nodes(self):
        return self.graph.num_nodes

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def undirected_edges(self):
        """Edge pairs (u < v) of the graph, self-loops excluded."""
        pairs = self.graph.edge_pairs()
        return pairs[pairs[:, 0] < pairs[:, 1]]


@dataclass(frozen=True)
class SbmSpec:
    blocks: int = 4
    nodes_per_block: int = 100
    p_in: float = 0.05
    p_out: float = 0.005
    feature_dim: int = 16
    feature_shift: float = 1.0
    noise_sigma: float = 1.0

    def __post_init__(self):
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}")
        if self.feature_shift <= 0:
            raise ValueError("feature_shift must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ValueError("blocks and nodes_per_block must be positive")
        if self.blocks > self.feature_dim:
            raise ValueError("orthogonal class means need feature_dim >= blocks")


# desk-scale benchmark "sbm-std" and its split sizes
SBM_STD = SbmSpec()
SBM_STD_SPLITS = {"per_class": 20, "val_size": 100, "test_size": 200}


def generate_sbm(spec, seed):
    """Stochastic block model with Gaussian features around orthogonal class means.

    Class ``k`` has mean ``feature_shift * e_k``. Each unordered node pair is
    an edge independently with probability ``p_in`` (same block) or ``p_out``.
    """
    rng = np.random.default_rng(seed)
    n = spec.blocks * spec.nodes_per_block
    labels = np.repeat(np.arange(spec.blocks), spec.nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], spec.p_in, spec.p_out)
    hit = rng.random(iu.size) < prob
    pairs = np.column_stack([iu[hit], ju[hit]])
    graph = build_graph(EdgeList(pairs, n), add_self_loops=True, symmetrize=True)
    means = np.zeros((n, spec.feature_dim))
    means[np.arange(n), labels] = spec.feature_shift
    features = means + spec.noise_sigma * rng.standard_normal((n, spec.feature_dim))
    return DatasetBundle(graph, features, labels, spec.blocks, name="sbm", raw_edge_count=int(hit.sum()))


def make_splits(labels, per_class, val_size, test_size, seed):
    """``per_class`` training nodes per class, then val/test drawn from the rest."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < per_class:
            raise ValueError(f"class {int(c)} has {members.size} nodes, fewer than {per_class}")
        train.append(rng.permutation(members)[:per_class])
    train = np.sort(np.concatenate(train))
    rest = np.setdiff1d(np.arange(labels.size), train)
    if rest.size < val_size + test_size:
        raise ValueError(f"only {rest.size} nodes left for {val_size} val + {test_size} test")
    rest = rng.permutation(rest)
    return SplitMask(train, np.sort(rest[:val_size]), np.sort(rest[val_size:val_size + test_size]))


def _read_features(path):
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                raise DataFormatError(f"{path}:{lineno}: empty feature row")
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DataFormatError(f"{path}:{lineno}: expected {width} values, got {len(parts)}")
            try:
                rows.append(np.array(parts, dtype=np.float64))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric feature value") from None
    if not rows:
        raise DataFormatError(f"{path}: no feature rows")
    return np.vstack(rows)


def _read_labels(path, n, num_classes):
    labels = np.full(n, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            try:
                node, cls = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise DataFormatError(f"{path}:{lineno}: expected 'node<TAB>class', got {line!r}") from None
            if not 0 <= node < n:
                raise DataFormatError(f"{path}:{lineno}: node {node} out of range for {n} nodes")
            if cls < 0 or (num_classes is not None and cls >= num_classes):
                raise DataFormatError(f"{path}:{lineno}: class {cls} out of range "
                                      f"for {num_classes} classes")
            labels[node] = cls
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise DataFormatError(f"{path}: node {int(missing[0])} has no label")
    return labels


def load_dataset(path):
    """Read a dataset directory into a bundle with a symmetrized, self-looped graph."""
    for name in ("edges.tsv", "features.csv", "labels.tsv"):
        if not os.path.isfile(os.path.join(path, name)):
            raise FileNotFoundError(f"{os.path.join(path, name)}: missing dataset file")
    meta = {}
    meta_path = os.path.join(path, "meta.json")
    if os.path.isfile(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    features = _read_features(os.path.join(path, "features.csv"))
    n = features.shape[0]
    edges = read_edge_list(os.path.join(path, "edges.tsv"), num_nodes=n)
    labels = _read_labels(os.path.join(path, "labels.tsv"), n, meta.get("num_classes"))
    num_classes = int(meta.get("num_classes", labels.max() + 1))
    graph = build_graph(edges, add_self_loops=True, symmetrize=True)
    name = meta.get("name") or os.path.basename(os.path.normpath(path))
    return DatasetBundle(graph, features, labels, num_classes, name, raw_edge_count=len(edges.pairs))


def save_dataset(bundle, path, split=None):
    """Write ``bundle`` (and optionally a split) in the directory format above."""
    os.makedirs(path, exist_ok=True)
    pairs = bundle.undirected_edges()
    write_edge_list(EdgeList(pairs, bundle.num_nodes), os.path.join(path, "edges.tsv"))
    with open(os.path.join(path, "features.csv"), "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, bundle.features, fmt="%.17g", delimiter=",")
    with open(os.path.join(path, "labels.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        for i, c in enumerate(bundle.labels):
            fh.write(f"{i}\t{int(c)}\n")
    meta = {"name": bundle.name, "num_classes": int(bundle.num_classes),
            "raw_edge_count": bundle.raw_edge_count, "undirected_edge_count": int(len(pairs))}
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if split is not None:
        write_splits(split, os.path.join(path, "splits.json"))


def write_splits(split, path):
    doc = {"train": split.train_idx.tolist(), "val": split.val_idx.tolist(),
           "test": split.test_idx.tolist()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_splits(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return SplitMask(doc["train"], doc["val"], doc["test"])
    except KeyError as exc:
        raise DataFormatError(f"{path}: missing key {exc}") from None


def export_embeddings(h, path):
    data = h.data if hasattr(h, "data") else np.asarray(h)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_loss_csv(logs, path):
    """One row per epoch; ``agg_param`` joins per-layer values with ';'."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_acc", "agg_param"])
        for log in logs:
            w.writerow([log.epoch, repr(log.train_loss), repr(log.val_loss), repr(log.val_acc),
                        ";".join(_fmt(v) for v in log.param_snapshot)])


def write_metrics_json(metrics, path):
    doc = metrics.to_dict() if hasattr(metrics, "to_dict") else dict(metrics)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
