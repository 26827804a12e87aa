import numpy as np
import pytest

from nagg.errors import GraphError, ShapeError
from nagg.graph import (EdgeList, Scheme, build_graph, read_edge_list, row_normalize,
                        sym_normalize, with_external_weights, write_edge_list)

from conftest import random_graph


def rows(g):
    return {v: g.neighbors(v).tolist() for v in range(g.num_nodes)}


def test_build_symmetrized_with_self_loops():
    g = build_graph(EdgeList.from_pairs([(0, 1)], 2), add_self_loops=True, symmetrize=True)
    assert rows(g) == {0: [0, 1], 1: [0, 1]}
    assert g.scheme is Scheme.BINARY
    np.testing.assert_array_equal(g.edge_weights, 1.0)


def test_build_single_node_self_loop():
    g = build_graph(EdgeList.from_pairs([], 1), add_self_loops=True)
    assert rows(g) == {0: [0]}
    assert g.edge_weights.tolist() == [1.0]


def test_build_collapses_duplicates():
    g = build_graph(EdgeList.from_pairs([(0, 1), (1, 0), (0, 1)], 2),
                    add_self_loops=False, symmetrize=False)
    assert rows(g) == {0: [1], 1: [0]}


def test_build_rejects_out_of_range_pair():
    with pytest.raises(GraphError, match=r"\(0, 5\)"):
        build_graph(EdgeList.from_pairs([(0, 1), (0, 5)], 3))


def test_csr_invariants(rng):
    g = random_graph(rng, 12)
    off = g.row_offsets
    assert off[0] == 0 and off[-1] == g.num_edges
    assert np.all(np.diff(off) >= 0)
    for v in range(g.num_nodes):
        nb = g.neighbors(v)
        assert np.all(np.diff(nb) > 0)
        assert v in nb


def test_sym_normalize_two_nodes():
    g = sym_normalize(build_graph(EdgeList.from_pairs([(0, 1)], 2)))
    np.testing.assert_allclose(g.edge_weights, 0.5)
    assert g.scheme is Scheme.SYMNORM


def test_sym_normalize_isolated_node():
    g = sym_normalize(build_graph(EdgeList.from_pairs([], 1)))
    assert g.edge_weights.tolist() == [1.0]


def test_sym_normalize_path_graph():
    g = sym_normalize(build_graph(EdgeList.from_pairs([(0, 1), (1, 2)], 3)))
    # dense oracle
    a = np.eye(3) + np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    d = np.diag(1 / np.sqrt(a.sum(1)))
    expected = d @ a @ d
    assert expected[0, 1] == pytest.approx(0.40824829046, abs=1e-10)
    np.testing.assert_allclose(g.to_dense(), expected, atol=1e-12)


def test_sym_normalize_rejects_zero_degree():
    g = build_graph(EdgeList.from_pairs([(0, 1)], 3), add_self_loops=False)
    with pytest.raises(GraphError, match="node 2"):
        sym_normalize(g)


def test_sym_normalize_requires_binary():
    g = row_normalize(build_graph(EdgeList.from_pairs([(0, 1)], 2)))
    with pytest.raises(GraphError):
        sym_normalize(g)


@pytest.mark.parametrize("seed", range(10))
def test_sym_normalize_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    g = random_graph(rng, n, p=0.4)
    a = np.zeros((n, n))
    for u, v in g.edge_pairs():
        a[u, v] = 1.0
    d = np.diag(1 / np.sqrt(a.sum(1)))
    dense = sym_normalize(g).to_dense()
    np.testing.assert_allclose(dense, d @ a @ d, atol=1e-12)
    np.testing.assert_allclose(dense, dense.T, atol=1e-12)


def _weighted_graph(weights):
    # row 0 carries the given weights, every other row only its self-loop
    n = len(weights)
    g = build_graph(EdgeList.from_pairs([(0, j) for j in range(1, n)], n),
                    add_self_loops=True, symmetrize=False)
    full = np.ones(g.num_edges)
    full[:n] = weights
    return g._replace(full, Scheme.EXTERNAL)


def test_row_normalize_examples():
    assert row_normalize(_weighted_graph([1, 1])).row_weights(0).tolist() == [0.5, 0.5]
    g = build_graph(EdgeList.from_pairs([], 1))
    assert row_normalize(g._replace([7.0], Scheme.EXTERNAL)).edge_weights.tolist() == [1.0]
    assert row_normalize(_weighted_graph([1, 2, 1])).row_weights(0).tolist() == [0.25, 0.5, 0.25]


def test_row_normalize_rejects_empty_row():
    g = build_graph(EdgeList.from_pairs([(0, 1)], 3), add_self_loops=False, symmetrize=False)
    with pytest.raises(GraphError):
        row_normalize(g)


def test_row_normalize_sums_and_idempotence(rng):
    g = row_normalize(random_graph(rng, 15))
    np.testing.assert_allclose(g.weighted_degree, 1.0, atol=1e-12)
    assert row_normalize(g).same_weights(g, tol=1e-12)


def test_external_weights(rng):
    g = random_graph(rng, 6)
    same = with_external_weights(g, g.edge_weights)
    assert same.same_weights(g) and same.scheme is Scheme.EXTERNAL
    uniform = with_external_weights(g, 1.0 / g.counts[g.row_indices])
    assert uniform.same_weights(row_normalize(g), tol=1e-15)
    with pytest.raises(ShapeError):
        with_external_weights(g, np.ones(g.num_edges + 1))


@pytest.mark.parametrize("seed", range(5))
def test_permutation_consistency(seed):
    rng = np.random.default_rng(seed)
    n = 8
    g = random_graph(rng, n, p=0.4)
    perm = rng.permutation(n)
    pairs = g.edge_pairs()
    gp = build_graph(EdgeList(perm[pairs], n))
    for build in (sym_normalize, row_normalize):
        a, b = build(g).to_dense(), build(gp).to_dense()
        np.testing.assert_allclose(b[np.ix_(perm, perm)], a, atol=1e-12)


def test_edge_list_roundtrip(tmp_path):
    path = tmp_path / "edges.tsv"
    path.write_text("# comment\n0\t1\n1\t2\n")
    edges = read_edge_list(path)
    assert edges.num_nodes == 3 and edges.pairs.tolist() == [[0, 1], [1, 2]]
    write_edge_list(edges, tmp_path / "out.tsv")
    assert (tmp_path / "out.tsv").read_text() == "0\t1\n1\t2\n"


def test_graph_is_immutable(rng):
    g = random_graph(rng, 4)
    with pytest.raises(ValueError):
        g.edge_weights[0] = 3.0
