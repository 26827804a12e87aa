"""GCN and GAT layers with a pluggable aggregator, and two-layer classifiers."""

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .aggregators import AggConfig, AggKind, agg_max, aggregate, reparam_tensor
from .autodiff import Tensor
from .errors import GraphError, ShapeError
from .graph import Scheme, row_normalize, sym_normalize, with_external_weights


class Weighting(str, enum.Enum):
    SYMNORM = "symnorm"
    ROWNORM = "rownorm"
    BINARY = "binary"
    ATTENTION = "attention"


# scheme the input graph must carry for each weighting; attention layers take
# the binary structure and derive their own weights
_SCHEME_FOR = {
    Weighting.SYMNORM: Scheme.SYMNORM,
    Weighting.ROWNORM: Scheme.ROWNORM,
    Weighting.BINARY: Scheme.BINARY,
    Weighting.ATTENTION: Scheme.BINARY,
}

ACTIVATIONS = ("relu", "none", "row_softmax")


@dataclass
class AttentionSpec:
    heads: int = 8
    leaky_slope: float = 0.2
    concat: bool = True


@dataclass
class LayerSpec:
    in_dim: int
    out_dim: int
    agg: AggConfig
    weighting: Weighting = Weighting.SYMNORM
    activation: str = "relu"
    dropout_rate: float = 0.5
    attention: Optional[AttentionSpec] = None

    def __post_init__(self):
        self.weighting = Weighting(self.weighting)
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout rate {self.dropout_rate} outside [0, 1)")
        if (self.attention is not None) != (self.weighting is Weighting.ATTENTION):
            raise ValueError("attention settings are required exactly when weighting is 'attention'")

    @property
    def heads(self):
        return self.attention.heads if self.attention else 1

    @property
    def output_dim(self):
        if self.attention and self.attention.concat:
            return self.out_dim * self.attention.heads
        return self.out_dim


@dataclass
class LayerParams:
    weights: list
    attention: list = field(default_factory=list)
    theta: Optional[Tensor] = None


@dataclass
class ModelParams:
    layers: list
    seed: int

    def tensors(self):
        """Distinct parameter tensors as ``(tensor, decayed)`` pairs.

        Aggregator thetas are never decayed. Shared thetas appear once.
        """
        out, seen = [], set()
        for lp in self.layers:
            for t in lp.weights + lp.attention:
                out.append((t, True))
            if lp.theta is not None and lp.theta.requires_grad and id(lp.theta) not in seen:
                seen.add(id(lp.theta))
                out.append((lp.theta, False))
        return out

    def trainable(self):
        return [t for t, _ in self.tensors() if t.requires_grad]

    def snapshot(self):
        return [t.data.copy() for t, _ in self.tensors()]

    def restore(self, arrays):
        for (t, _), a in zip(self.tensors(), arrays):
            t.data = a.copy()


def glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(specs, seed, share_theta=False):
    """Glorot-uniform weights and attention vectors; thetas from each AggConfig."""
    rng = np.random.default_rng(seed)
    layers = []
    shared = None
    for spec in specs:
        weights = [Tensor(glorot(rng, spec.in_dim, spec.out_dim), requires_grad=True)
                   for _ in range(spec.heads)]
        attention = []
        if spec.attention:
            attention = [Tensor(glorot(rng, 2 * spec.out_dim, 1), requires_grad=True)
                         for _ in range(spec.heads)]
        theta = None
        cfg = spec.agg
        if cfg.kind.parametric and cfg.value is None:
            if share_theta and shared is not None and shared[0] is cfg.kind:
                theta = shared[1]
            else:
                theta = Tensor([[cfg.theta]], requires_grad=cfg.learnable)
                shared = (cfg.kind, theta)
        layers.append(LayerParams(weights, attention, theta))
    return ModelParams(layers, seed)


def agg_parameter(spec, lp):
    """Effective aggregator parameter: a float when pinned, else a tensor."""
    cfg = spec.agg
    if not cfg.kind.parametric:
        return None
    if cfg.value is not None:
        return float(cfg.value)
    return reparam_tensor(cfg.kind, lp.theta)


def effective_parameters(specs, params):
    out = []
    for spec, lp in zip(specs, params.layers):
        value = agg_parameter(spec, lp)
        out.append(value.item() if isinstance(value, Tensor) else value)
    return out


def prepare_graph(g, weighting):
    """Weight a binary graph the way layers with ``weighting`` expect."""
    weighting = Weighting(weighting)
    if g.scheme is not Scheme.BINARY:
        raise GraphError(f"prepare_graph expects a binary graph, got {g.scheme.value}")
    if weighting is Weighting.SYMNORM:
        return sym_normalize(g)
    if weighting is Weighting.ROWNORM:
        return row_normalize(g)
    return g


def dropout(x, rate, rng):
    """Inverted dropout: zero a fraction ``rate`` of entries, rescale the rest."""
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor._wrap(keep)


def _activate(x, activation):
    if activation == "relu":
        return ad.relu(x)
    if activation == "row_softmax":
        return ad.row_softmax(x)
    return x


def _check_layer(g, h, spec):
    if h.rows != g.num_nodes or h.cols != spec.in_dim:
        raise ShapeError(f"layer expects ({g.num_nodes}, {spec.in_dim}) input, got {h.shape}")
    if g.scheme is not _SCHEME_FOR[spec.weighting]:
        raise GraphError(f"layer with {spec.weighting.value} weighting got a "
                         f"{g.scheme.value} graph")


def _transform(g, x, spec, W, param):
    if spec.agg.kind is AggKind.MAX:
        # max pooling over transformed neighbors: max_u F(h_u), F = dense + activation
        return agg_max(g, _activate(x @ W, spec.activation))
    return _activate(aggregate(g, x, spec.agg.kind, param) @ W, spec.activation)


def gcn_layer_forward(g, h, spec, lp, train_mode=False, rng=None):
    """One propagation step: activation(AGG(g, dropout(h)) @ W).

    Aggregation runs on the layer input and the weight matrix is applied
    afterwards. Attention layers are delegated to :func:`gat_layer_forward`.
    """
    h = ad.as_tensor(h)
    _check_layer(g, h, spec)
    if spec.attention:
        return gat_layer_forward(g, h, spec, lp, train_mode, rng)
    x = dropout(h, spec.dropout_rate, rng) if train_mode else h
    return _transform(g, x, spec, lp.weights[0], agg_parameter(spec, lp))


def gat_attention_weights(g, h, lp, head, leaky_slope=0.2):
    """Per-edge attention softmax_{u in N_v} LeakyReLU(a . [W h_v || W h_u]).

    Returns an E x 1 tensor whose entries sum to 1 within each node's row.
    """
    h = ad.as_tensor(h)
    W, a = lp.weights[head], lp.attention[head]
    if h.cols != W.rows:
        raise ShapeError(f"attention: features {h.shape} do not match W {W.shape}")
    d = W.cols
    hw = h @ W
    score_dst = hw @ ad.slice_rows(a, 0, d)
    score_src = hw @ ad.slice_rows(a, d, 2 * d)
    e = ad.gather_rows(score_dst, g.row_indices) + ad.gather_rows(score_src, g.col_indices)
    return ad.segment_softmax(ad.leaky_relu(e, leaky_slope), g.row_offsets, 1.0)


def gat_layer_forward(g, h, spec, lp, train_mode=False, rng=None):
    h = ad.as_tensor(h)
    _check_layer(g, h, spec)
    x = dropout(h, spec.dropout_rate, rng) if train_mode else h
    param = agg_parameter(spec, lp)
    heads = []
    for i in range(spec.heads):
        alpha = gat_attention_weights(g, x, lp, i, spec.attention.leaky_slope)
        heads.append(_transform(with_external_weights(g, alpha), x, spec, lp.weights[i], param))
    if len(heads) == 1:
        return heads[0]
    if spec.attention.concat:
        return ad.concat_cols(heads)
    total = heads[0]
    for t in heads[1:]:
        total = total + t
    return ad.scalar_mul(total, 1.0 / len(heads))


def model_forward(g, h, specs, params, train_mode=False, rng=None, return_hidden=False):
    """Run all layers; the last layer's output is the logits.

    With ``return_hidden`` the penultimate representation is returned too.
    """
    if train_mode and rng is None and any(s.dropout_rate > 0 for s in specs):
        raise ValueError("train_mode with dropout needs an rng")
    x = ad.as_tensor(h)
    hidden = x
    for spec, lp in zip(specs, params.layers):
        hidden = x
        x = gcn_layer_forward(g, x, spec, lp, train_mode, rng)
    return (x, hidden) if return_hidden else x


def build_specs(model, in_dim, num_classes, aggregator="sum", hidden=None, heads=8,
                dropout_rate=0.5, weighting=None, theta_init=None, learnable=True,
                value=None):
    """Two-layer classifier specs.

    GCN: hidden width 16 by default, ReLU then linear output.
    GAT: ``heads`` concatenated heads of width 8 by default, then one
    output head; LeakyReLU slope 0.2 in the attention scorer.
    """
    def agg():
        kwargs = {"learnable": learnable, "value": value}
        if theta_init is not None:
            kwargs["theta"] = theta_init
        return AggConfig(aggregator, **kwargs)

    if model == "gcn":
        weighting = Weighting(weighting or "symnorm")
        if weighting is Weighting.ATTENTION:
            raise ValueError("attention weighting requires model 'gat'")
        hidden = hidden or 16
        return [
            LayerSpec(in_dim, hidden, agg(), weighting, "relu", dropout_rate),
            LayerSpec(hidden, num_classes, agg(), weighting, "none", dropout_rate),
        ]
    if model == "gat":
        if weighting not in (None, "attention", Weighting.ATTENTION):
            raise ValueError("model 'gat' uses attention weighting")
        hidden = hidden or 8
        return [
            LayerSpec(in_dim, hidden, agg(), "attention", "relu", dropout_rate,
                      AttentionSpec(heads=heads, concat=True)),
            LayerSpec(hidden * heads, num_classes, agg(), "attention", "none", dropout_rate,
                      AttentionSpec(heads=1, concat=False)),
        ]
    raise ValueError(f"unknown model {model!r}")
