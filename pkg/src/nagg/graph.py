"""CSR graphs and edge weighting schemes.

Row ``v`` of a graph lists the neighborhood N_v, so an aggregator computes
``out[v]`` from the rows ``h[u]`` for ``u`` in ``col_indices[row_offsets[v]:row_offsets[v+1]]``.
Self-loops, when requested, are part of the structure, so N_v includes v.
"""

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import segments
from .errors import DataFormatError, GraphError, ShapeError


class Scheme(str, enum.Enum):
    BINARY = "binary"
    SYMNORM = "symnorm"
    ROWNORM = "rownorm"
    EXTERNAL = "external"


@dataclass(frozen=True)
class EdgeList:
    pairs: np.ndarray
    num_nodes: int

    @classmethod
    def from_pairs(cls, pairs, num_nodes):
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs,
                         dtype=np.int64).reshape(-1, 2)
        return cls(arr, int(num_nodes))


def _readonly(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_weights: np.ndarray
    scheme: Scheme
    has_self_loops: bool = False
    # learned edge weights (E x 1 Tensor) that gradients should reach
    weight_tensor: object = field(default=None, repr=False)

    def __post_init__(self):
        off = np.array(self.row_offsets, dtype=np.int64)
        col = np.array(self.col_indices, dtype=np.int64)
        w = np.array(self.edge_weights, dtype=np.float64)
        object.__setattr__(self, "row_offsets", off)
        object.__setattr__(self, "col_indices", col)
        object.__setattr__(self, "edge_weights", w)
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if off.shape != (self.num_nodes + 1,) or off[0] != 0 or off[-1] != col.size:
            raise GraphError("row_offsets must have length n+1, start at 0 and end at the edge count")
        if np.any(np.diff(off) < 0):
            raise GraphError("row_offsets must be nondecreasing")
        if col.size and (col.min() < 0 or col.max() >= self.num_nodes):
            raise GraphError("col_indices out of range")
        if w.shape != col.shape:
            raise GraphError(f"edge_weights shape {w.shape} != col_indices shape {col.shape}")
        keys = np.repeat(np.arange(self.num_nodes), np.diff(off)) * self.num_nodes + col
        if np.any(np.diff(keys) <= 0):
            raise GraphError("columns must be strictly increasing within each row")
        if self.scheme is not Scheme.EXTERNAL and np.any(w <= 0):
            raise GraphError("edge weights must be positive")
        for a in (off, col, w):
            _readonly(a)

    @property
    def num_edges(self):
        return int(self.col_indices.size)

    @cached_property
    def counts(self):
        return np.diff(self.row_offsets)

    @cached_property
    def row_indices(self):
        """Destination node of every edge (the CSR row)."""
        return _readonly(np.repeat(np.arange(self.num_nodes), self.counts))

    @property
    def weighted_degree(self):
        return segments.segment_sum(self.edge_weights, self.row_offsets)

    def neighbors(self, v):
        return self.col_indices[self.row_offsets[v]:self.row_offsets[v + 1]]

    def row_weights(self, v):
        return self.edge_weights[self.row_offsets[v]:self.row_offsets[v + 1]]

    def to_dense(self):
        a = np.zeros((self.num_nodes, self.num_nodes))
        a[self.row_indices, self.col_indices] = self.edge_weights
        return a

    def edge_pairs(self):
        return np.column_stack([self.row_indices, self.col_indices])

    def same_weights(self, other, tol=0.0):
        """True when topology matches and weights agree within ``tol``."""
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and bool(np.all(np.abs(self.edge_weights - other.edge_weights) <= tol)))

    def _replace(self, weights, scheme, weight_tensor=None):
        return Graph(self.num_nodes, self.row_offsets, self.col_indices,
                     np.array(weights, dtype=np.float64), scheme,
                     self.has_self_loops, weight_tensor)


def build_graph(edges, add_self_loops=True, symmetrize=True):
    """Binary CSR graph from an edge list; duplicate edges collapse."""
    n = edges.num_nodes
    pairs = np.asarray(edges.pairs, dtype=np.int64).reshape(-1, 2)
    bad = np.flatnonzero((pairs < 0).any(axis=1) | (pairs >= n).any(axis=1))
    if bad.size:
        src, dst = pairs[bad[0]]
        raise GraphError(f"edge ({src}, {dst}) out of range for {n} nodes")
    if symmetrize:
        pairs = np.vstack([pairs, pairs[:, ::-1]])
    if add_self_loops:
        loop = np.arange(n)
        pairs = np.vstack([pairs, np.column_stack([loop, loop])])
    keys = np.unique(pairs[:, 0] * n + pairs[:, 1])
    rows, cols = keys // n, keys % n
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return Graph(n, offsets, cols.astype(np.int64), np.ones(cols.size), Scheme.BINARY,
                 add_self_loops)


def sym_normalize(g):
    """GCN weighting D^-1/2 (A + I) D^-1/2, degrees taken after self-loops."""
    if g.scheme is not Scheme.BINARY:
        raise GraphError(f"sym_normalize expects a binary graph, got {g.scheme.value}")
    deg = g.weighted_degree
    zero = np.flatnonzero(deg <= 0)
    if zero.size:
        raise GraphError(f"node {int(zero[0])} has zero degree")
    inv = 1.0 / np.sqrt(deg)
    return g._replace(inv[g.row_indices] * g.edge_weights * inv[g.col_indices], Scheme.SYMNORM)


def row_normalize(g):
    """Scale each row so its weights sum to 1."""
    empty = np.flatnonzero(g.counts == 0)
    if empty.size:
        raise GraphError(f"node {int(empty[0])} has no neighbors")
    deg = g.weighted_degree
    return g._replace(g.edge_weights / deg[g.row_indices], Scheme.ROWNORM)


def with_external_weights(g, weights):
    """Same topology with externally supplied (e.g. attention) edge weights.

    ``weights`` may be an array or an E x 1 :class:`~nagg.autodiff.Tensor`; a
    tensor is kept so aggregators can propagate gradients into it.
    """
    tensor = None
    if hasattr(weights, "data") and hasattr(weights, "requires_grad"):
        tensor, weights = weights, weights.data
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != g.num_edges:
        raise ShapeError(f"expected {g.num_edges} edge weights, got {w.size}")
    return g._replace(w, Scheme.EXTERNAL, tensor)


def read_edge_list(path, num_nodes=None):
    """Parse ``src<TAB>dst`` lines; ``#`` lines are comments.

    When ``num_nodes`` is None it is inferred as the largest index + 1.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataFormatError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            if num_nodes is not None and not (0 <= src < num_nodes and 0 <= dst < num_nodes):
                raise DataFormatError(f"{path}:{lineno}: edge ({src}, {dst}) out of range "
                                      f"for {num_nodes} nodes")
            pairs.append((src, dst))
    if num_nodes is None:
        num_nodes = 1 + max((max(p) for p in pairs), default=-1)
    return EdgeList.from_pairs(pairs, num_nodes)


def write_edge_list(edges, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for src, dst in np.asarray(edges.pairs).reshape(-1, 2):
            fh.write(f"{int(src)}\t{int(dst)}\n")
