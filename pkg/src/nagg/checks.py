"""Randomized property and gradient suites for the aggregators and models.

Each suite returns a list of :class:`CheckResult`, one per property, holding
the worst observed error over all trials. Suites are deterministic given the
master seed. The ``gradcheck`` and ``propcheck`` commands print these
results, and the test suite asserts on them.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .aggregators import (AggKind, ShiftValue, agg_lp, agg_max, agg_poly, agg_softmax,
                          agg_sum, aggregate)
from .autodiff import Tensor, grad_check
from .graph import EdgeList, build_graph, row_normalize, sym_normalize, with_external_weights
from .reference import ref_aggregate


@dataclass
class CheckResult:
    name: str
    worst: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self):
        return bool(self.worst <= self.tolerance)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"{status}  {self.name:<28} worst={self.worst:.3e}  tol={self.tolerance:.1e}"
        return f"{text}  {self.detail}" if self.detail else text


PROPERTY_TOLERANCES = {
    "lp_p1_exact": 1e-10,
    "lp_p128_limit": 0.05,
    "poly_a0_exact": 1e-10,
    "poly_a128_limit": 0.05,
    "softmax_g0_exact": 1e-10,
    "softmax_g128_limit": 0.01,
    "lp_monotone": 1e-10,
    "poly_monotone": 1e-10,
    "softmax_monotone": 1e-10,
    "bounds": 1e-10,
    "translation": 1e-9,
    "permutation": 1e-10,
    "oracle": 1e-8,
}

OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3

P_GRID = (1.0, 2.0, 4.0, 8.0, 32.0)
AG_GRID = (0.0, 1.0, 4.0, 16.0, 64.0)


# -- random inputs -------------------------------------------------------------------


def random_graph(rng, n, p=None):
    """Symmetric random graph with self-loops on ``n`` nodes (binary weights)."""
    p = rng.uniform(0.05, 0.5) if p is None else p
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return build_graph(EdgeList(np.column_stack([iu[keep], ju[keep]]), n))


def random_case(rng, max_nodes=50, max_dim=8, scale=3.0):
    n = int(rng.integers(1, max_nodes + 1))
    d = int(rng.integers(1, max_dim + 1))
    return random_graph(rng, n), rng.uniform(-scale, scale, size=(n, d))


def separated_features(rng, n, d, gap=0.25):
    """Features whose entries within a column are pairwise at least ``gap`` apart."""
    cols = [rng.permutation(n) * gap + rng.uniform(-2.0, 2.0) for _ in range(d)]
    return np.column_stack(cols)


def weighted(g, scheme, rng=None):
    if scheme == "binary":
        return g
    if scheme == "symnorm":
        return sym_normalize(g)
    if scheme == "rownorm":
        return row_normalize(g)
    if scheme == "external":
        return with_external_weights(g, rng.uniform(0.1, 2.0, size=g.num_edges))
    raise ValueError(f"unknown scheme {scheme!r}")


def _nb_extrema(g, h):
    lo = np.array([h[g.neighbors(v)].min(axis=0) for v in range(g.num_nodes)])
    hi = np.array([h[g.neighbors(v)].max(axis=0) for v in range(g.num_nodes)])
    return lo, hi


def _value_range(h):
    return max(float(h.max() - h.min()), 1e-12)


# -- property suite -----------------------------------------------------------------------


def _exact_cases(rng, trials):
    for _ in range(trials):
        g, h = random_case(rng)
        yield g, h


def _limit_cases(rng, trials):
    for _ in range(trials):
        # at least two nodes: a constant feature matrix has no value range to compare against
        n = int(rng.integers(2, 51))
        d = int(rng.integers(1, 9))
        yield random_graph(rng, n), separated_features(rng, n, d)


def check_exact_specializations(rng, trials=50):
    lp_err = poly_err = soft_err = 0.0
    for g0, h in _exact_cases(rng, trials):
        mu = h.min()
        for scheme in ("symnorm", "binary"):
            g = weighted(g0, scheme)
            shifted = agg_sum(g, h - mu).data + mu
            lp_err = max(lp_err, np.abs(agg_lp(g, h, 1.0).data - shifted).max())
            mean = agg_sum(g, h).data / g.weighted_degree[:, None]
            poly_err = max(poly_err, np.abs(agg_poly(g, h, 0.0).data - mean).max())
        mean = agg_sum(row_normalize(g0), h).data
        soft_err = max(soft_err, np.abs(agg_softmax(g0, h, 0.0).data - mean).max())
    return [lp_err, poly_err, soft_err]


def check_limits(rng, trials=50):
    errs = {"lp": 0.0, "poly": 0.0, "softmax": 0.0}
    for g0, h in _limit_cases(rng, trials):
        rng_span = _value_range(h)
        for scheme in ("symnorm", "binary"):
            g = weighted(g0, scheme)
            target = agg_max(g, h).data
            errs["lp"] = max(errs["lp"], np.abs(agg_lp(g, h, 128.0).data - target).max() / rng_span)
            errs["poly"] = max(errs["poly"],
                               np.abs(agg_poly(g, h, 128.0).data - target).max() / rng_span)
        target = agg_max(g0, h).data
        errs["softmax"] = max(errs["softmax"],
                              np.abs(agg_softmax(g0, h, 128.0).data - target).max() / rng_span)
    return errs


def _monotone_violation(outputs):
    worst = 0.0
    for a, b in zip(outputs, outputs[1:]):
        worst = max(worst, float(np.max(a - b)))
    return max(worst, 0.0)


def check_monotonicity(rng, trials=100):
    errs = {"lp": 0.0, "poly": 0.0, "softmax": 0.0}
    for _ in range(trials):
        g0, h = random_case(rng, max_nodes=20)
        g_row = row_normalize(g0)
        errs["lp"] = max(errs["lp"], _monotone_violation([agg_lp(g_row, h, p).data for p in P_GRID]))
        for scheme in ("symnorm", "external"):
            g = weighted(g0, scheme, rng)
            errs["poly"] = max(errs["poly"],
                               _monotone_violation([agg_poly(g, h, a).data for a in AG_GRID]))
        errs["softmax"] = max(errs["softmax"],
                              _monotone_violation([agg_softmax(g0, h, c).data for c in AG_GRID]))
    return errs


def check_bounds(rng, trials=100):
    worst = 0.0
    for _ in range(trials):
        g0, h = random_case(rng, max_nodes=20)
        lo, hi = _nb_extrema(g0, h)
        g_row = row_normalize(g0)
        outs = [agg_lp(g_row, h, float(rng.choice(P_GRID))).data]
        worst = max(worst, float(np.max(outs[0] - hi)))
        a = float(rng.choice(AG_GRID))
        for out in (agg_poly(g_row, h, a).data, agg_softmax(g0, h, a).data):
            worst = max(worst, float(np.max(out - hi)), float(np.max(lo - out)))
    return max(worst, 0.0)


def check_translation(rng, trials=100):
    worst = 0.0
    for _ in range(trials):
        g0, h = random_case(rng, max_nodes=20)
        c = float(rng.uniform(-100.0, 100.0))
        scheme = ("symnorm", "binary", "rownorm", "external")[int(rng.integers(4))]
        g = weighted(g0, scheme, rng)
        p = float(rng.uniform(1.0, 8.0))
        a = float(rng.uniform(0.0, 8.0))
        for fn in (lambda x: agg_lp(g, x, p), lambda x: agg_poly(g, x, a),
                   lambda x: agg_softmax(g0, x, a)):
            worst = max(worst, float(np.abs(fn(h + c).data - (fn(h).data + c)).max()))
    return worst


def check_permutation(rng, trials=100):
    worst = 0.0
    for _ in range(trials):
        g0, h = random_case(rng, max_nodes=20)
        n = g0.num_nodes
        perm = rng.permutation(n)
        pairs = g0.edge_pairs()
        gp0 = build_graph(EdgeList(perm[pairs], n))
        hp = np.empty_like(h)
        hp[perm] = h
        scheme = ("symnorm", "binary", "rownorm")[int(rng.integers(3))]
        g, gp = weighted(g0, scheme), weighted(gp0, scheme)
        for kind, param in (("sum", None), ("max", None), ("lp", 3.0), ("poly", 2.0),
                            ("softmax", 1.5)):
            out = aggregate(g, h, kind, param).data
            outp = aggregate(gp, hp, kind, param).data
            worst = max(worst, float(np.abs(outp[perm] - out).max()))
    return worst


def check_oracle(rng, trials=20):
    worst = 0.0
    for _ in range(trials):
        g0, h = random_case(rng, max_nodes=30)
        for scheme in ("binary", "symnorm", "rownorm", "external"):
            g = weighted(g0, scheme, rng)
            for kind, param in (("sum", None), ("max", None), ("lp", float(rng.uniform(1, 16))),
                                ("poly", float(rng.uniform(0, 16))),
                                ("softmax", float(rng.uniform(0, 16)))):
                fast = aggregate(g, h, kind, param).data
                slow = ref_aggregate(g, h, kind, param)
                # relative to magnitude so large powers stay comparable
                err = np.abs(fast - slow) / np.maximum(1.0, np.abs(slow))
                worst = max(worst, float(err.max()))
    return worst


def property_suite(seed=0, tolerances=None):
    """Run every aggregator property; ``tolerances`` overrides entries by name."""
    tol = dict(PROPERTY_TOLERANCES)
    if tolerances:
        unknown = set(tolerances) - set(tol)
        if unknown:
            raise KeyError(f"unknown properties: {sorted(unknown)}")
        tol.update(tolerances)
    ss = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(7)]

    lp1, poly0, soft0 = check_exact_specializations(rngs[0])
    limits = check_limits(rngs[1])
    mono = check_monotonicity(rngs[2])
    values = {
        "lp_p1_exact": lp1,
        "lp_p128_limit": limits["lp"],
        "poly_a0_exact": poly0,
        "poly_a128_limit": limits["poly"],
        "softmax_g0_exact": soft0,
        "softmax_g128_limit": limits["softmax"],
        "lp_monotone": mono["lp"],
        "poly_monotone": mono["poly"],
        "softmax_monotone": mono["softmax"],
        "bounds": check_bounds(rngs[3]),
        "translation": check_translation(rngs[4]),
        "permutation": check_permutation(rngs[5]),
        "oracle": check_oracle(rngs[6]),
    }
    return [CheckResult(name, float(values[name]), tol[name]) for name in PROPERTY_TOLERANCES]


# -- gradient suite --------------------------------------------------------------------


def _signed(rng, shape):
    # magnitudes in [0.5, 2] keep relu/leaky_relu inputs away from their kinks
    return rng.uniform(0.5, 2.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _op_registry():
    return {
        "add": (lambda x, c: ad.add(x, c), "any"),
        "sub": (lambda x, c: ad.sub(c, x), "any"),
        "mul_elem": (lambda x, c: ad.mul_elem(x, c), "any"),
        "div_elem": (lambda x, c: ad.div_elem(c, x), "any"),
        "scalar_mul": (lambda x, c: ad.scalar_mul(x, -2.5), "any"),
        "matmul": (lambda x, c: ad.matmul(x, c), "any"),
        "relu": (lambda x, c: ad.relu(x), "any"),
        "leaky_relu": (lambda x, c: ad.leaky_relu(x, 0.2), "any"),
        "exp": (lambda x, c: ad.exp(x), "any"),
        "log": (lambda x, c: ad.log(x), "pos"),
        "pow_elem": (lambda x, c: ad.pow_elem(x, 2.7), "pos"),
        "softplus": (lambda x, c: ad.softplus(x), "any"),
        "sum_all": (lambda x, c: ad.mul_elem(ad.sum_all(x), c), "any"),
        "transpose": (lambda x, c: ad.transpose(x), "any"),
        "concat_cols": (lambda x, c: ad.concat_cols([x, c, x]), "any"),
        "slice_rows": (lambda x, c: ad.slice_rows(x, 1, 3), "any"),
        "gather_rows": (lambda x, c: ad.gather_rows(x, [2, 0, 2, 1]), "any"),
        "scale_rows": (lambda x, c: ad.scale_rows(c, ad.transpose(ad.slice_rows(x, 0, 1))), "any"),
        "row_softmax": (lambda x, c: ad.row_softmax(x), "any"),
        "segment_sum": (lambda x, c: ad.segment_sum(x, [0, 2, 2, 3]), "any"),
        "segment_max": (lambda x, c: ad.segment_max(x, [0, 2, 3]), "any"),
        "segment_softmax": (lambda x, c: ad.segment_softmax(x, [0, 2, 3], 1.7), "any"),
    }


OPS = _op_registry()


def _probe_loss(fn, probe):
    return lambda x: ad.sum_all(ad.mul_elem(fn(x), probe))


def check_op(name, rng, step=1e-5, trials=5):
    fn, domain = OPS[name]
    worst = None
    for _ in range(trials):
        x0 = _signed(rng, (3, 3))
        if domain == "pos":
            x0 = np.abs(x0)
        c = Tensor(_signed(rng, (3, 3)))
        probe = Tensor(rng.normal(size=fn(Tensor(x0), c).shape))
        report = grad_check(_probe_loss(lambda x: fn(x, c), probe), x0, step)
        if worst is None or report.max_rel_error > worst.max_rel_error:
            worst = report
    return worst


def _agg_fixture(rng, n=8, d=3):
    g = random_graph(rng, n, p=0.4)
    # separated values keep segment_max away from ties; shifted values >= 0.5
    h = separated_features(rng, n, d, gap=0.3)
    mu = ShiftValue(float(h.min()) - 0.5)
    return g, h, mu


def _agg_fn(kind, g, mu):
    if kind == "sum":
        return lambda x, prm: agg_sum(g, x)
    if kind == "max":
        return lambda x, prm: agg_max(g, x)
    if kind == "lp":
        return lambda x, prm: agg_lp(g, x, prm, mu)
    if kind == "poly":
        return lambda x, prm: agg_poly(g, x, prm, mu)
    return lambda x, prm: agg_softmax(g, x, prm)


AGG_PARAMS = {"lp": 2.3, "poly": 1.4, "softmax": 0.8}


def check_aggregator(kind, scheme, rng, step=1e-5, trials=3):
    """Worst grad-check report of ``kind`` w.r.t. features, parameter and weights."""
    reports = []
    for _ in range(trials):
        g0, h, mu = _agg_fixture(rng)
        g = weighted(g0, scheme, rng)
        fn = _agg_fn(kind, g, mu)
        prm = AGG_PARAMS.get(kind)
        probe = Tensor(rng.normal(size=h.shape))
        reports.append(grad_check(lambda x: ad.sum_all(fn(x, prm) * probe), h, step))
        if prm is not None:
            reports.append(grad_check(lambda t: ad.sum_all(fn(Tensor(h), t) * probe),
                                      np.array([[prm]]), step))
        if kind != "max":
            w0 = g.edge_weights.reshape(-1, 1)
            reports.append(grad_check(
                lambda w: ad.sum_all(_agg_fn(kind, with_external_weights(g0, w), mu)(Tensor(h), prm)
                                     * probe), w0, step))
    return max(reports, key=lambda r: r.max_rel_error)


def model_fixture(model, aggregator, seed=0, n=10, d=4, classes=3):
    """Small graph, features, labels and a dropout-free two-layer model."""
    from .models import build_specs, init_params, prepare_graph

    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p=0.35)
    x = rng.normal(size=(n, d))
    labels = rng.integers(0, classes, size=n)
    hidden = 2 if model == "gat" else 5
    specs = build_specs(model, d, classes, aggregator, hidden=hidden, heads=2, dropout_rate=0.0)
    params = init_params(specs, seed)
    return prepare_graph(g, specs[0].weighting), x, labels, specs, params


def _substitute(params, old, new):
    from .models import LayerParams, ModelParams

    swap = (lambda t: new if t is old else t)
    layers = [LayerParams([swap(t) for t in lp.weights], [swap(t) for t in lp.attention],
                          swap(lp.theta) if lp.theta is not None else None)
              for lp in params.layers]
    return ModelParams(layers, params.seed)


def check_model(model, aggregator, seed=0, step=1e-5):
    """Grad-check the masked cross-entropy of a full model w.r.t. every parameter."""
    from .models import model_forward
    from .trainer import masked_cross_entropy

    g, x, labels, specs, params = model_fixture(model, aggregator, seed)
    mask = np.arange(len(labels))
    worst = None
    for target in params.trainable():
        def loss(t, target=target):
            return masked_cross_entropy(model_forward(g, x, specs, _substitute(params, target, t)),
                                        labels, mask)

        report = grad_check(loss, target.data, step)
        if worst is None or report.max_rel_error > worst.max_rel_error:
            worst = report
    return worst


AGG_SCHEMES = {
    "sum": ("binary", "symnorm", "external"),
    "max": ("binary",),
    "lp": ("binary", "symnorm", "rownorm", "external"),
    "poly": ("binary", "symnorm", "rownorm", "external"),
    "softmax": ("binary", "symnorm", "external"),
}


def gradient_suite(seed=0, step=1e-5, models=True):
    """Grad-check every op, every aggregator and (optionally) both full models."""
    ss = np.random.SeedSequence(seed)
    results = []
    for name in sorted(OPS):
        rng = np.random.default_rng(ss.spawn(1)[0])
        r = check_op(name, rng, step)
        results.append(CheckResult(f"op:{name}", r.max_rel_error, OP_TOLERANCE))
    for kind, schemes in AGG_SCHEMES.items():
        for scheme in schemes:
            rng = np.random.default_rng(ss.spawn(1)[0])
            r = check_aggregator(kind, scheme, rng, step)
            results.append(CheckResult(f"agg:{kind}/{scheme}", r.max_rel_error, OP_TOLERANCE))
    if models:
        for model in ("gcn", "gat"):
            for kind in AggKind:
                r = check_model(model, kind.value, seed, step)
                results.append(CheckResult(f"model:{model}-{kind.value}", r.max_rel_error,
                                           MODEL_TOLERANCE))
    return results
