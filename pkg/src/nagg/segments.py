"""Plain numpy reductions over CSR segments.

A segment layout is a nondecreasing offsets array of length ``n + 1``; rows
``offsets[v]:offsets[v + 1]`` of an edge-indexed array belong to node ``v``.
Every reduction runs in fixed edge order, so results do not depend on how the
caller parallelizes across segments.
"""

import numpy as np


def counts(offsets):
    return np.diff(offsets)


def expand(x, offsets):
    """Repeat row ``v`` of ``x`` once per edge of segment ``v``."""
    return np.repeat(x, counts(offsets), axis=0)


def _starts(offsets):
    c = counts(offsets)
    nonempty = c > 0
    return offsets[:-1][nonempty], nonempty


def segment_sum(x, offsets):
    n = len(offsets) - 1
    out = np.zeros((n,) + x.shape[1:], dtype=np.float64)
    starts, nonempty = _starts(offsets)
    if starts.size:
        out[nonempty] = np.add.reduceat(x, starts, axis=0)
    return out


def segment_max(x, offsets, fill=-np.inf):
    n = len(offsets) - 1
    out = np.full((n,) + x.shape[1:], fill, dtype=np.float64)
    starts, nonempty = _starts(offsets)
    if starts.size:
        out[nonempty] = np.maximum.reduceat(x, starts, axis=0)
    return out


def segment_argmax(x, offsets):
    """Edge index of the per-column maximum of each segment.

    Ties resolve to the lowest edge index. Empty segments get ``-1``.
    """
    n_edges = x.shape[0]
    best = segment_max(x, offsets)
    hit = x == expand(best, offsets)
    pos = np.where(hit, np.arange(n_edges)[:, None], n_edges)
    out = np.full((len(offsets) - 1, x.shape[1]), -1, dtype=np.int64)
    starts, nonempty = _starts(offsets)
    if starts.size:
        out[nonempty] = np.minimum.reduceat(pos, starts, axis=0)
    return out


def segment_logsumexp(x, offsets):
    """Max-subtracted log-sum-exp per segment and column.

    Entries may be ``-inf``; a segment whose entries are all ``-inf`` (or that
    is empty) yields ``-inf``.
    """
    m = segment_max(x, offsets)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(under="ignore"):
        s = segment_sum(np.exp(x - expand(safe, offsets)), offsets)
    with np.errstate(divide="ignore"):
        return safe + np.log(s)


def segment_softmax(z, offsets):
    """Per-segment, per-column softmax of ``z`` with max subtraction."""
    m = segment_max(z, offsets)
    with np.errstate(under="ignore"):
        e = np.exp(z - expand(m, offsets))
    return e / expand(segment_sum(e, offsets), offsets)
