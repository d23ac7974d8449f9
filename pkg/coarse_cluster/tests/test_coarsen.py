# Licensed under an MIT open source license - see LICENSE

import pytest
import numpy as np
import numpy.testing as npt
import scipy.sparse as sp

from ..coarsen import (WeightedGraph, MergeMap, edge_weights, match_pairs,
                       coarsen_step, multi_scale_coarsen, lift_adjacency,
                       scale_schedule, target_size)
from ..graphdata import AttributedGraph, load_graph
from ..exceptions import ConfigError, ContractViolation, CoarseClusterWarning
from .testing_utils import path_graph, has_dataset, dataset_path


def _weighted(edges, n):
    W = np.zeros((n, n))
    for u, v, w in edges:
        W[u, v] = W[v, u] = w
    return WeightedGraph(sp.csr_matrix(W))


def test_edge_weights_cosine():

    X = np.array([[1., 0.], [1., 0.], [0., 1.], [-1., 0.], [0., 0.]])
    adj = np.zeros((5, 5))
    for u, v in [(0, 1), (1, 2), (0, 3), (3, 4)]:
        adj[u, v] = adj[v, u] = 1.
    wg = edge_weights(AttributedGraph(X, adj))

    W = wg.weights.toarray()
    assert W[0, 1] == 1.
    # Orthogonal, opposite and zero-norm pairs all give zero weight.
    assert W[1, 2] == 0.
    assert W[0, 3] == 0.
    assert W[3, 4] == 0.
    # Non-edges stay zero.
    assert W[0, 2] == 0.


def test_edge_weights_partial_similarity():

    X = np.array([[1., 0.], [1., 1.]])
    wg = edge_weights(AttributedGraph(X, np.array([[0., 1.], [1., 0.]])))
    npt.assert_allclose(wg.weights[0, 1], 1. / np.sqrt(2.))


def test_match_pairs_heaviest_first():

    wg = _weighted([(0, 1, 0.5), (1, 2, 0.9), (2, 3, 0.5)], 4)
    assert match_pairs(wg) == [(1, 2)]


def test_match_pairs_tie_break():

    wg = _weighted([(0, 1, 1.), (1, 2, 1.), (2, 3, 1.), (0, 3, 1.)], 4)
    assert match_pairs(wg) == [(0, 1), (2, 3)]


def test_match_pairs_edgeless():

    assert match_pairs(WeightedGraph(sp.csr_matrix((4, 4)))) == []


def _path_with_features(X):
    n = len(X)
    adj = np.zeros((n, n))
    for u in range(n - 1):
        adj[u, u + 1] = adj[u + 1, u] = 1.
    return AttributedGraph(np.array(X, dtype=float), adj)


def test_zero_weight_edges_kept():

    wg = edge_weights(_path_with_features([[1., 0.], [0., 1.],
                                           [1., 0.], [0., 1.]]))

    assert wg.weights.nnz == 0
    assert wg.n_edges == 3
    u, v, w = wg.edge_list()
    npt.assert_equal(u, [0, 1, 2])
    npt.assert_equal(v, [1, 2, 3])
    npt.assert_equal(w, 0.)
    assert match_pairs(wg) == [(0, 1), (2, 3)]


def test_zero_weight_edges_matched_last():

    # Weights: (0, 1) = 1, (1, 2) = 0, (2, 3) = 0.
    wg = edge_weights(_path_with_features([[1., 0.], [1., 0.],
                                           [0., 1.], [-1., 0.]]))
    assert match_pairs(wg) == [(0, 1), (2, 3)]


def test_zero_weight_edges_coarsen():

    graph = _path_with_features([[1., 0.], [0., 1.], [1., 0.], [0., 1.]])
    cg, = multi_scale_coarsen(graph, [0.5], n_min=1)

    assert not cg.early_stop
    npt.assert_equal(cg.merge_map.assignment, [0, 0, 1, 1])
    # The 1 - 2 edge survives between the two super-nodes.
    assert cg.graph.n_edges == 1
    assert cg.to_networkx().number_of_edges() == 1


def test_match_pairs_disjoint(small_graph):

    pairs = match_pairs(edge_weights(small_graph))
    flat = np.array(pairs).ravel()

    assert flat.size == np.unique(flat).size
    assert all(u < v for u, v in pairs)


def test_coarsen_step_merges_weights():

    wg = _weighted([(0, 1, 0.4), (0, 2, 0.3), (1, 2, 0.2), (2, 3, 0.7)], 4)
    coarse, mm = coarsen_step(wg, [(0, 1)])

    npt.assert_equal(mm.assignment, [0, 0, 1, 2])
    npt.assert_equal(coarse.node_mass, [2, 1, 1])

    W = coarse.weights.toarray()
    npt.assert_allclose(W[0, 1], 0.5)
    npt.assert_allclose(W[1, 2], 0.7)
    assert W[0, 0] == 0.
    npt.assert_allclose(coarse.total_weight() + 0.4, wg.total_weight())


def test_coarsen_step_rejects_overlap():

    wg = _weighted([(0, 1, 1.), (1, 2, 1.)], 3)
    with pytest.raises(ContractViolation):
        coarsen_step(wg, [(0, 1), (1, 2)])
    with pytest.raises(ContractViolation):
        coarsen_step(wg, [(0, 5)])


def test_merge_map_compose():

    first = MergeMap([0, 0, 1, 2])
    second = MergeMap([0, 1, 1])

    npt.assert_equal(first.compose(second).assignment, [0, 0, 1, 1])
    with pytest.raises(ContractViolation):
        second.compose(first)
    with pytest.raises(ContractViolation):
        MergeMap([0, 2])


def test_target_size():

    assert target_size(2708, 0.2) == 541
    assert target_size(2708, 0.1) == 270
    assert target_size(100, 0.1) == 32
    assert target_size(100, 0.1, n_min=1) == 10


def test_multi_scale_targets_and_conservation(small_graph):

    initial = edge_weights(small_graph).total_weight()
    coarsened = multi_scale_coarsen(small_graph, [0.5, 0.25], n_min=4)

    assert [cg.n_nodes for cg in coarsened] == [20, 10]
    assert not any(cg.early_stop for cg in coarsened)
    for cg in coarsened:
        npt.assert_allclose(cg.graph.total_weight() + cg.dropped_weight,
                            initial, rtol=0, atol=1e-9)
        counts = np.bincount(cg.merge_map.assignment)
        npt.assert_equal(counts, cg.graph.node_mass)
        assert cg.merge_map.n_original == small_graph.n_nodes


def test_multi_scale_is_deterministic(small_graph):

    first = multi_scale_coarsen(small_graph, [0.5, 0.25], n_min=4)
    second = multi_scale_coarsen(small_graph, [0.5, 0.25], n_min=4)

    for a, b in zip(first, second):
        npt.assert_equal(a.merge_map.assignment, b.merge_map.assignment)
        assert (a.graph.weights != b.graph.weights).nnz == 0


def test_multi_scale_unit_scale_is_identity(small_graph):

    cg, = multi_scale_coarsen(small_graph, [1.0])

    assert cg.n_nodes == small_graph.n_nodes
    npt.assert_equal(cg.merge_map.assignment, np.arange(small_graph.n_nodes))
    assert cg.steps == 0


def test_multi_scale_respects_n_min(small_graph):

    coarsened = multi_scale_coarsen(small_graph, [0.1])
    # N_min = 32 exceeds 0.1 * 40.
    assert coarsened[0].n_nodes == 32

    coarsened = multi_scale_coarsen(small_graph, [0.5], n_min=100)
    assert coarsened[0].n_nodes == small_graph.n_nodes


def test_multi_scale_repeated_scale(small_graph):

    coarsened = multi_scale_coarsen(small_graph, [0.5, 0.5], n_min=4)

    assert [cg.n_nodes for cg in coarsened] == [20, 20]
    npt.assert_equal(coarsened[0].merge_map.assignment,
                     coarsened[1].merge_map.assignment)


@pytest.mark.parametrize('scales', [[0.], [1.5], [0.25, 0.5], []])
def test_multi_scale_bad_scales(small_graph, scales):

    with pytest.raises(ConfigError):
        multi_scale_coarsen(small_graph, scales)


def test_multi_scale_early_stop():

    graph = AttributedGraph(np.ones((6, 2)), sp.csr_matrix((6, 6)))

    with pytest.warns(CoarseClusterWarning):
        cg, = multi_scale_coarsen(graph, [0.5], n_min=1)

    assert cg.early_stop
    assert cg.n_nodes == 6


def test_lift_adjacency(small_graph):

    cg = multi_scale_coarsen(small_graph, [0.5], n_min=4)[0]
    lifted = lift_adjacency(cg, small_graph.n_nodes).toarray()
    assignment = cg.merge_map.assignment
    W = cg.graph.weights.toarray()

    npt.assert_allclose(lifted, lifted.T)
    npt.assert_allclose(lifted, W[assignment][:, assignment], atol=1e-14)
    same = assignment[:, None] == assignment[None, :]
    assert (lifted[same] == 0.).all()

    with pytest.raises(ContractViolation):
        lift_adjacency(cg, small_graph.n_nodes + 1)


def test_coarse_to_networkx(small_graph):

    cg = multi_scale_coarsen(small_graph, [0.5], n_min=4)[0]
    G = cg.to_networkx()

    assert G.number_of_nodes() == cg.n_nodes
    assert sum(nx_mass for _, nx_mass in G.nodes(data='mass')) == \
        small_graph.n_nodes


def test_path_graph_coarsens_to_pairs():

    cg, = multi_scale_coarsen(path_graph(4), [0.5], n_min=1)

    # All weights tie at 1, so (0, 1) then (2, 3) are matched.
    npt.assert_equal(cg.merge_map.assignment, [0, 0, 1, 1])


def test_scale_schedule():

    npt.assert_allclose(scale_schedule('dual', 0.2), [0.3, 0.2])
    npt.assert_allclose(scale_schedule('dual_ratio', 0.1, 0.3), [0.3, 0.1])
    npt.assert_allclose(scale_schedule('triple', 0.5), [0.5, 0.25, 0.1])

    with pytest.raises(ConfigError):
        scale_schedule('quad', 0.2)
    with pytest.raises(ConfigError):
        scale_schedule('dual_ratio', 0.2)
    with pytest.raises(ConfigError):
        scale_schedule('dual', 0.95)


@pytest.mark.skipif(not has_dataset('cora'), reason="Cora data not present")
def test_cora_targets():

    graph = load_graph(dataset_path('cora'))
    initial = edge_weights(graph).total_weight()
    coarsened = multi_scale_coarsen(graph, [0.2, 0.1])

    for cg, target in zip(coarsened, [541, 270]):
        if not cg.early_stop:
            assert cg.n_nodes == target
        npt.assert_allclose(cg.graph.total_weight() + cg.dropped_weight,
                            initial, rtol=0, atol=1e-9)
