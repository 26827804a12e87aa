import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nagg import checks
from nagg.aggregators import (THETA_INIT, AggConfig, AggKind, ShiftValue, agg_lp, agg_max,
                              agg_poly, agg_softmax, agg_sum, global_min, inverse_reparam,
                              reparam)
from nagg.autodiff import Tensor, grad_check
from nagg.errors import DomainError, ShapeError
from nagg.graph import EdgeList, build_graph, row_normalize, sym_normalize, with_external_weights
from nagg.reference import ref_aggregate


def pair_graph(weights=(1.0, 1.0)):
    """Node 0 sees nodes 0 and 1 with the given weights; node 1 sees itself."""
    g = build_graph(EdgeList.from_pairs([(0, 1)], 2), symmetrize=False)
    return with_external_weights(g, np.array([weights[0], weights[1], 1.0]))


H23 = np.array([[2.0], [3.0]])
MU1 = ShiftValue(1.0)


# -- parameters -----------------------------------------------------------------------


def test_reparam_examples():
    assert reparam(AggConfig("lp", theta=0.0)) == pytest.approx(1 + math.log(2), abs=1e-12)
    assert reparam(AggConfig("softmax", theta=THETA_INIT)) == pytest.approx(1.0, abs=1e-12)
    assert reparam(AggConfig("lp")) == pytest.approx(2.0, abs=1e-12)
    assert reparam(AggConfig("poly", theta=-50.0)) < 1e-20


def test_reparam_pinned_value_and_inverse():
    cfg = AggConfig("poly", learnable=False, value=0.0)
    assert reparam(cfg) == 0.0
    assert inverse_reparam("poly", 0.0) == -math.inf
    for kind, v in (("lp", 3.5), ("poly", 0.2), ("softmax", 7.0)):
        assert reparam(AggConfig(kind, theta=inverse_reparam(kind, v))) == pytest.approx(v)
    with pytest.raises(ValueError):
        AggConfig("lp", value=2.0)


def test_global_min_examples():
    assert global_min(np.array([[2.0, 3.0], [1.0, 5.0]])).mu_m == 1.0
    assert global_min(np.array([[-2.0, 4.0]])).mu_m == -2.0


# -- kernel examples -----------------------------------------------------------------------


def test_sum_examples():
    g = sym_normalize(build_graph(EdgeList.from_pairs([(0, 1)], 2)))
    np.testing.assert_allclose(agg_sum(g, np.array([[1.0], [3.0]])).data, [[2.0], [2.0]])
    tri = build_graph(EdgeList.from_pairs([(0, 1), (1, 2), (0, 2)], 3))
    np.testing.assert_allclose(agg_sum(tri, np.array([[1.0], [2.0], [3.0]])).data, [[6.0]] * 3)


def test_max_examples():
    h = np.array([[2.0, 5.0], [3.0, 1.0]])
    g = build_graph(EdgeList.from_pairs([(0, 1)], 2), symmetrize=False)
    assert agg_max(g, h).data[0].tolist() == [3.0, 5.0]
    # node 1 only sees itself
    assert agg_max(g, h).data[1].tolist() == [3.0, 1.0]
    star = build_graph(EdgeList.from_pairs([(0, 1), (0, 2), (0, 3), (0, 4)], 5))
    h = np.array([[0.0], [1.0], [7.0], [3.0], [5.0]])
    assert agg_max(star, h).data[0, 0] == 7.0


def test_lp_examples():
    g = pair_graph()
    assert agg_lp(g, H23, 1.0, MU1).data[0, 0] == pytest.approx(4.0, abs=1e-12)
    assert agg_lp(g, H23, 2.0, MU1).data[0, 0] == pytest.approx(math.sqrt(5) + 1, abs=1e-12)
    exact = (1 + 2.0 ** 128) ** (1 / 128) + 1
    out = agg_lp(g, H23, 128.0, MU1).data[0, 0]
    assert out == pytest.approx(exact, abs=1e-12)
    assert abs(out - 3.0) < 0.05


def test_poly_examples():
    g = pair_graph()
    assert agg_poly(g, H23, 0.0, MU1).data[0, 0] == pytest.approx(2.5, abs=1e-12)
    assert agg_poly(g, H23, 0.0, ShiftValue(-7.0)).data[0, 0] == pytest.approx(2.5, abs=1e-12)
    assert agg_poly(g, H23, 1.0, MU1).data[0, 0] == pytest.approx(8 / 3, abs=1e-12)
    assert abs(agg_poly(g, H23, 100.0, MU1).data[0, 0] - 3.0) < 0.01


def test_softmax_examples():
    g = pair_graph()
    assert agg_softmax(g, H23, 0.0).data[0, 0] == pytest.approx(2.5, abs=1e-12)
    s = 1 / (1 + math.e)
    assert agg_softmax(g, H23, 1.0).data[0, 0] == pytest.approx(2 * s + 3 * (1 - s), abs=1e-12)
    assert agg_softmax(g, H23, 1.0).data[0, 0] == pytest.approx(2.731059, abs=1e-6)
    assert abs(agg_softmax(g, H23, 50.0).data[0, 0] - 3.0) < 1e-3


def test_default_shift_is_global_min():
    g = pair_graph()
    np.testing.assert_allclose(agg_lp(g, H23, 2.0).data, agg_lp(g, H23, 2.0, ShiftValue(2.0)).data)


def test_parameter_domain_errors():
    g = pair_graph()
    with pytest.raises(DomainError):
        agg_lp(g, H23, 0.5)
    with pytest.raises(DomainError):
        agg_poly(g, H23, -0.1)
    with pytest.raises(DomainError):
        agg_softmax(g, H23, -1.0)


def test_shape_errors():
    g = pair_graph()
    for fn in (agg_sum, agg_max, lambda g, h: agg_lp(g, h, 2.0),
               lambda g, h: agg_poly(g, h, 1.0), lambda g, h: agg_softmax(g, h, 1.0)):
        with pytest.raises(ShapeError):
            fn(g, np.ones((3, 1)))


def test_large_parameters_stay_finite():
    rng = np.random.default_rng(0)
    g = checks.random_graph(rng, 20, 0.3)
    h = rng.uniform(-300, 300, size=(20, 4))
    for out in (agg_lp(g, h, 128.0), agg_poly(g, h, 128.0), agg_softmax(g, h, 128.0)):
        assert np.all(np.isfinite(out.data))


def test_softmax_symnorm_limit_is_weighted_max():
    # with normalized weights the large-gamma limit is w(v, u*) h_u*, not the max
    g = sym_normalize(build_graph(EdgeList.from_pairs([(0, 1)], 2)))
    out = agg_softmax(g, H23, 200.0).data
    np.testing.assert_allclose(out, [[1.5], [1.5]], atol=1e-9)


# -- oracle and properties -------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind,param", [("sum", None), ("max", None), ("lp", 5.5), ("poly", 3.0),
                                        ("softmax", 2.0), ("lp", 16.0), ("poly", 16.0)])
def test_matches_reference(seed, kind, param):
    rng = np.random.default_rng(seed)
    g0, h = checks.random_case(rng, max_nodes=25)
    for g in (g0, sym_normalize(g0), row_normalize(g0)):
        fast = checks.aggregate(g, h, kind, param).data
        np.testing.assert_allclose(fast, ref_aggregate(g, h, kind, param), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("result", checks.property_suite(seed=0), ids=lambda r: r.name)
def test_property_suite(result):
    assert result.passed, result.line()


def test_property_suite_other_seed_passes():
    assert all(r.passed for r in checks.property_suite(seed=17))


def test_zero_tolerance_breaks_limit_checks():
    res = {r.name: r for r in checks.property_suite(seed=0, tolerances={"lp_p128_limit": 0.0})}
    assert not res["lp_p128_limit"].passed


finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=2, max_size=6), st.floats(1.0, 20.0), st.floats(-100, 100))
def test_lp_single_row_power_mean(values, p, c):
    # one node seeing every other node with equal weights: a power mean of shifted values
    n = len(values)
    g = row_normalize(build_graph(EdgeList.from_pairs([(0, j) for j in range(1, n)], n),
                                  symmetrize=False))
    h = np.array(values)[:, None]
    out = agg_lp(g, h, p).data[0, 0]
    assert min(values) - 1e-9 <= out <= max(values) + 1e-9
    np.testing.assert_allclose(agg_lp(g, h + c, p).data[0, 0], out + c, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.lists(finite, min_size=2, max_size=6), st.floats(0.0, 30.0), st.floats(0.0, 30.0))
def test_poly_and_softmax_monotone_in_parameter(values, a, b):
    lo, hi = sorted((a, b))
    n = len(values)
    g = build_graph(EdgeList.from_pairs([(0, j) for j in range(1, n)], n), symmetrize=False)
    h = np.array(values)[:, None]
    assert agg_poly(g, h, lo).data[0, 0] <= agg_poly(g, h, hi).data[0, 0] + 1e-9
    assert agg_softmax(g, h, lo).data[0, 0] <= agg_softmax(g, h, hi).data[0, 0] + 1e-9


# -- gradients -------------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["sum", "max", "lp", "poly", "softmax"])
def test_aggregator_gradients(kind):
    rng = np.random.default_rng(3)
    for scheme in checks.AGG_SCHEMES[kind]:
        report = checks.check_aggregator(kind, scheme, rng)
        assert report.max_rel_error <= 1e-4, (scheme, report)


def test_parameter_gradient_through_reparameterization():
    rng = np.random.default_rng(4)
    g, h, mu = checks._agg_fixture(rng)
    from nagg.aggregators import reparam_tensor
    from nagg import autodiff as ad

    probe = Tensor(rng.normal(size=h.shape))
    for kind, fn in (("lp", lambda p: agg_lp(g, h, p, mu)), ("poly", lambda a: agg_poly(g, h, a, mu)),
                     ("softmax", lambda c: agg_softmax(g, h, c))):
        report = grad_check(lambda t: ad.sum_all(fn(reparam_tensor(kind, t)) * probe),
                            np.array([[0.3]]))
        assert report.max_rel_error <= 1e-4, (kind, report)


def test_kind_parametric_flags():
    assert [k.value for k in AggKind if k.parametric] == ["lp", "poly", "softmax"]
