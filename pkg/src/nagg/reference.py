"""Slow per-node reference implementations used as test oracles.

Everything here loops over nodes in Python and evaluates powers directly,
without log-space tricks, so it is only usable for small graphs and moderate
exponents (p, alpha up to about 16). Shifted values are floored at the same
``EPS`` the fast kernels use, which fixes the conventions at zero.
"""

import numpy as np

from .aggregators import EPS


def _rows(g):
    for v in range(g.num_nodes):
        yield v, g.neighbors(v), np.asarray(g.row_weights(v), dtype=np.float64)


def ref_sum(g, h):
    h = np.asarray(h, dtype=np.float64)
    out = np.zeros_like(h)
    for v, nb, w in _rows(g):
        for u, wu in zip(nb, w):
            out[v] += wu * h[u]
    return out


def ref_max(g, h):
    h = np.asarray(h, dtype=np.float64)
    return np.array([h[nb].max(axis=0) for _, nb, _ in _rows(g)])


def ref_lp(g, h, p, mu=None):
    h = np.asarray(h, dtype=np.float64)
    mu = h.min() if mu is None else mu
    out = np.zeros_like(h)
    for v, nb, w in _rows(g):
        y = np.maximum(h[nb] - mu, EPS)
        out[v] = (w[:, None] * y ** p).sum(axis=0) ** (1.0 / p) + mu
    return out


def ref_poly(g, h, alpha, mu=None):
    h = np.asarray(h, dtype=np.float64)
    mu = h.min() if mu is None else mu
    out = np.zeros_like(h)
    for v, nb, w in _rows(g):
        y = np.maximum(h[nb] - mu, EPS)
        num = (w[:, None] * y ** (alpha + 1)).sum(axis=0)
        den = (w[:, None] * y ** alpha).sum(axis=0)
        out[v] = num / den + mu
    return out


def ref_softmax(g, h, gamma):
    h = np.asarray(h, dtype=np.float64)
    out = np.zeros_like(h)
    for v, nb, w in _rows(g):
        z = gamma * h[nb]
        e = np.exp(z - z.max(axis=0))
        s = e / e.sum(axis=0)
        out[v] = (w[:, None] * h[nb] * s).sum(axis=0)
    return out


def ref_aggregate(g, h, kind, param=None, mu=None):
    kind = getattr(kind, "value", kind)
    if kind == "sum":
        return ref_sum(g, h)
    if kind == "max":
        return ref_max(g, h)
    if kind == "lp":
        return ref_lp(g, h, param, mu)
    if kind == "poly":
        return ref_poly(g, h, param, mu)
    if kind == "softmax":
        return ref_softmax(g, h, param)
    raise ValueError(f"unknown aggregator {kind!r}")


def ref_attention(g, hw, a_src, a_dst, slope=0.2):
    """Per-edge attention of one head from the transformed features ``hw``.

    Score of edge (v, u) is leaky_relu(a_src . hw[v] + a_dst . hw[u]),
    normalized with a softmax over N_v. Returned in CSR edge order.
    """
    hw = np.asarray(hw, dtype=np.float64)
    out = []
    for v, nb, _ in _rows(g):
        e = np.array([hw[v] @ a_src + hw[u] @ a_dst for u in nb])
        e = np.where(e > 0, e, slope * e)
        e = np.exp(e - e.max())
        out.extend(e / e.sum())
    return np.array(out)
