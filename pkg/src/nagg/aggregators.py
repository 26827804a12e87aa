"""Neighborhood aggregation kernels.

Every kernel maps a graph and a node-feature tensor ``h`` (n x d) to an n x d
tensor, column by column. Weights come from the graph, so the same kernel
serves binary, GCN-normalized, row-stochastic and attention weightings.

The three interpolating aggregators, with ``w`` the edge weight of (v, u),
``mu`` the global minimum of ``h`` and ``y = h_u - mu``:

    lp       (sum_u w y^p)^(1/p) + mu                      p in [1, inf)
    poly     sum_u w y^(a+1) / sum_u w y^a + mu            a in [0, inf)
    softmax  sum_u w h_u softmax_u(g h_u)                  g in [0, inf)

lp and poly are evaluated in log space with shifted values floored at
``EPS``; softmax uses an unweighted, max-subtracted normalizer over N_v.
``mu`` is a constant of the backward pass.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import segments
from .autodiff import Tensor, as_tensor, gather_rows, make_op, segment_max, softplus
from .errors import DomainError, ShapeError

EPS = 1e-12
# softplus^-1(1); gives p0 = 2 and alpha0 = gamma0 = 1
THETA_INIT = math.log(math.e - 1.0)


class AggKind(str, enum.Enum):
    SUM = "sum"
    MAX = "max"
    LP = "lp"
    POLY = "poly"
    SOFTMAX = "softmax"

    @property
    def parametric(self):
        return self in (AggKind.LP, AggKind.POLY, AggKind.SOFTMAX)


@dataclass
class AggConfig:
    """Aggregator choice plus its raw, unconstrained parameter.

    ``value`` pins the effective parameter (p, alpha or gamma) directly; it is
    only honoured when ``learnable`` is false and lets sweeps reach the
    boundary values (p = 1, alpha = 0, gamma = 0) that no finite theta maps to.
    """

    kind: AggKind
    theta: float = THETA_INIT
    learnable: bool = True
    value: float = None

    def __post_init__(self):
        self.kind = AggKind(self.kind)
        if self.value is not None and self.learnable:
            raise ValueError("a fixed aggregator value requires learnable=False")


@dataclass(frozen=True)
class ShiftValue:
    mu_m: float


def _offset(kind):
    return 1.0 if kind is AggKind.LP else 0.0


def reparam(cfg):
    """Effective parameter of ``cfg``: p = 1 + softplus(theta), alpha/gamma = softplus(theta)."""
    if not cfg.kind.parametric:
        raise ValueError(f"aggregator {cfg.kind.value!r} has no parameter")
    if cfg.value is not None:
        return float(cfg.value)
    return _offset(cfg.kind) + float(np.logaddexp(0.0, cfg.theta))


def reparam_tensor(kind, theta):
    """Differentiable version of :func:`reparam` for a 1x1 theta tensor."""
    kind = AggKind(kind)
    if not kind.parametric:
        raise ValueError(f"aggregator {kind.value!r} has no parameter")
    sp = softplus(theta)
    return sp + 1.0 if kind is AggKind.LP else sp


def inverse_reparam(kind, value):
    """Theta mapping to the effective ``value``; -inf at the domain boundary."""
    kind = AggKind(kind)
    z = value - _offset(kind)
    if z < 0:
        raise DomainError(f"{kind.value} parameter {value} is outside its domain")
    if z == 0:
        return -math.inf
    return z + math.log(-math.expm1(-z))


def global_min(h):
    h = as_tensor(h)
    if h.data.size == 0:
        raise ShapeError("global_min of an empty tensor")
    return ShiftValue(float(h.data.min()))


def _check(g, h, name):
    h = as_tensor(h)
    if h.rows != g.num_nodes:
        raise ShapeError(f"{name}: features have {h.rows} rows, graph has {g.num_nodes} nodes")
    return h


def _weights(g):
    w = g.weight_tensor
    if w is not None and w.shape != (g.num_edges, 1):
        raise ShapeError(f"edge weight tensor must be ({g.num_edges}, 1), got {w.shape}")
    return g.edge_weights, w


def _scatter(g, edge_values):
    """Sum edge-indexed rows into their source nodes (transpose of a gather)."""
    out = np.zeros((g.num_nodes, edge_values.shape[1]))
    np.add.at(out, g.col_indices, edge_values)
    return out


def _op(name, data, h, param, w_t, rule):
    inputs = [h]
    if param is not None:
        inputs.append(param)
    if w_t is not None:
        inputs.append(w_t)

    def wrapped(grad):
        dh, dparam, dw = rule(grad)
        out = [dh]
        if param is not None:
            out.append(np.array([[dparam]]))
        if w_t is not None:
            out.append(dw.reshape(-1, 1))
        return tuple(out)

    return make_op(name, data, inputs, wrapped)


def agg_sum(g, h):
    """Weighted sum over the neighborhood: out[v] = sum_u w(v, u) h[u]."""
    h = _check(g, h, "agg_sum")
    w, w_t = _weights(g)
    off, col, row = g.row_offsets, g.col_indices, g.row_indices
    hv = h.data[col]
    out = segments.segment_sum(w[:, None] * hv, off)

    def rule(grad):
        ge = grad[row]
        dh = _scatter(g, w[:, None] * ge)
        dw = np.sum(ge * hv, axis=1) if w_t is not None else None
        return dh, None, dw

    return _op("agg_sum", out, h, None, w_t, rule)


def agg_max(g, h):
    """Column-wise maximum over the neighborhood. Edge weights are ignored."""
    h = _check(g, h, "agg_max")
    return segment_max(gather_rows(h, g.col_indices), g.row_offsets)


def _param(value, name, lower):
    t = as_tensor(value)
    if t.shape != (1, 1):
        raise ShapeError(f"{name} must be a scalar, got shape {t.shape}")
    if not t.item() >= lower:
        raise DomainError(f"{name} = {t.item()} is below its lower bound {lower}")
    return t


def _shifted(g, h, mu):
    x = h.data[g.col_indices] - mu.mu_m
    active = x > EPS
    y = np.where(active, x, EPS)
    return active, y, np.log(y)


def _log_weights(w):
    with np.errstate(divide="ignore"):
        return np.log(w)[:, None]


def agg_lp(g, h, p, mu=None):
    """Shifted weighted p-norm: (sum_u w (h_u - mu)^p)^(1/p) + mu.

    ``p`` is a float or a 1x1 tensor with p >= 1. ``mu`` defaults to the
    minimum of ``h``.
    """
    h = _check(g, h, "agg_lp")
    p = _param(p, "p", 1.0)
    pv = p.item()
    mu = global_min(h) if mu is None else mu
    w, w_t = _weights(g)
    off = g.row_offsets
    active, y, lny = _shifted(g, h, mu)
    t = _log_weights(w) + pv * lny
    lse = segments.segment_logsumexp(t, off)
    norm = np.exp(lse / pv)

    def rule(grad):
        gn = grad * norm
        gne = segments.expand(gn, off)
        lse_e = segments.expand(lse, off)
        with np.errstate(under="ignore"):
            r = np.exp(t - lse_e)
        dh = _scatter(g, np.where(active, gne * r / y, 0.0))
        mean_log = segments.segment_sum(r * lny, off)
        dp = float(np.sum(gn * (mean_log / pv - lse / pv**2)))
        dw = None
        if w_t is not None:
            with np.errstate(under="ignore"):
                dw = np.sum(gne * np.exp(pv * lny - lse_e), axis=1) / pv
        return dh, dp, dw

    return _op("agg_lp", norm + mu.mu_m, h, p, w_t, rule)


def agg_poly(g, h, alpha, mu=None):
    """Shifted power-moment ratio: sum w y^(a+1) / sum w y^a + mu, y = h_u - mu.

    ``alpha`` is a float or 1x1 tensor with alpha >= 0. Shifted values are
    floored at ``EPS`` so the denominator never vanishes and y^0 = 1
    everywhere, which makes alpha = 0 the weighted mean.
    """
    h = _check(g, h, "agg_poly")
    alpha = _param(alpha, "alpha", 0.0)
    a = alpha.item()
    mu = global_min(h) if mu is None else mu
    w, w_t = _weights(g)
    off = g.row_offsets
    active, y, lny = _shifted(g, h, mu)
    lnw = _log_weights(w)
    t_num = lnw + (a + 1.0) * lny
    t_den = lnw + a * lny
    l_num = segments.segment_logsumexp(t_num, off)
    l_den = segments.segment_logsumexp(t_den, off)
    ratio = np.exp(l_num - l_den)

    def rule(grad):
        gr = grad * ratio
        gre = segments.expand(gr, off)
        ln_e = segments.expand(l_num, off)
        ld_e = segments.expand(l_den, off)
        with np.errstate(under="ignore"):
            rn = np.exp(t_num - ln_e)
            rd = np.exp(t_den - ld_e)
        dh = _scatter(g, np.where(active, gre * ((a + 1.0) * rn - a * rd) / y, 0.0))
        da = float(np.sum(gr * segments.segment_sum((rn - rd) * lny, off)))
        dw = None
        if w_t is not None:
            with np.errstate(under="ignore"):
                dw = np.sum(gre * (np.exp((a + 1.0) * lny - ln_e) - np.exp(a * lny - ld_e)), axis=1)
        return dh, da, dw

    return _op("agg_poly", ratio + mu.mu_m, h, alpha, w_t, rule)


def agg_softmax(g, h, gamma):
    """Softmax-reweighted sum: sum_u w h_u * exp(g h_u) / sum_u' exp(g h_u').

    The normalizer runs over N_v without edge weights. ``gamma`` is a float
    or 1x1 tensor with gamma >= 0.
    """
    h = _check(g, h, "agg_softmax")
    gamma = _param(gamma, "gamma", 0.0)
    gv = gamma.item()
    w, w_t = _weights(g)
    off = g.row_offsets
    hv = h.data[g.col_indices]
    we = w[:, None]
    s = segments.segment_softmax(gv * hv, off)
    out = segments.segment_sum(we * hv * s, off)

    def rule(grad):
        ge = segments.expand(grad, off)
        dz = s * (we * hv - segments.expand(out, off))
        dh = _scatter(g, ge * (we * s + gv * dz))
        dgamma = float(np.sum(ge * dz * hv))
        dw = np.sum(ge * hv * s, axis=1) if w_t is not None else None
        return dh, dgamma, dw

    return _op("agg_softmax", out, h, gamma, w_t, rule)


def aggregate(g, h, kind, param=None, mu=None):
    """Dispatch on ``kind``; ``param`` is the effective p, alpha or gamma."""
    kind = AggKind(kind)
    if kind is AggKind.SUM:
        return agg_sum(g, h)
    if kind is AggKind.MAX:
        return agg_max(g, h)
    if param is None:
        raise ValueError(f"aggregator {kind.value!r} needs a parameter")
    if kind is AggKind.LP:
        return agg_lp(g, h, param, mu)
    if kind is AggKind.POLY:
        return agg_poly(g, h, param, mu)
    return agg_softmax(g, h, param)
