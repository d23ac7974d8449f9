# Licensed under an MIT open source license - see LICENSE

import pytest
import numpy as np
import numpy.testing as npt
import scipy.sparse as sp

from ..netfwd import (ModelParams, augment, gcn_forward, mlp_project,
                      forward_views, fuse_views, backward, PARAM_NAMES)
from ..coarsen import multi_scale_coarsen, lift_adjacency
from ..graphdata import AttributedGraph, normalize_adjacency
from ..exceptions import ConfigError, ContractViolation, FormatError, IoError
from .testing_utils import planted_graph, numerical_gradient, rel_error


def _tiny_params(n_features=5, dims=(3, 4, 5, 2), seed=0):
    return ModelParams.init(dims, n_features, seed)


def test_augment_extremes():

    X = np.arange(12.).reshape(3, 4) + 1.

    npt.assert_equal(augment(X, 0., 0), X)
    npt.assert_equal(augment(X, 1., 0), np.zeros_like(X))


def test_augment_rate_and_determinism():

    X = np.ones((1000, 1000))
    X_aug = augment(X, 0.4, 11)

    npt.assert_allclose((X_aug == 0).mean(), 0.4, atol=0.005)
    # Survivors are not rescaled.
    npt.assert_equal(np.unique(X_aug), [0., 1.])
    npt.assert_equal(augment(X, 0.4, 11), X_aug)


@pytest.mark.parametrize('p', [-0.1, 1.5])
def test_augment_bad_probability(p):

    with pytest.raises(ConfigError):
        augment(np.ones((2, 2)), p, 0)


def test_augment_leaves_input():

    X = np.ones((4, 4))
    augment(X, 0.5, 1)
    npt.assert_equal(X, 1.)


def test_init_deterministic():

    a = _tiny_params(seed=3)
    b = _tiny_params(seed=3)
    for name in PARAM_NAMES:
        npt.assert_equal(getattr(a, name), getattr(b, name))
    assert a.dims == (3, 4, 5, 2)
    assert a.prelu_a == 0.25
    npt.assert_equal(a.bp1, 0.)


def test_inconsistent_shapes():

    p = _tiny_params()
    with pytest.raises(ContractViolation):
        ModelParams(p.W1, p.W1, p.Wp1, p.bp1, p.Wp2, p.bp2)


def test_zero_weights_give_bias_output(small_graph):

    p = _tiny_params(n_features=small_graph.n_features)
    for name in ('W1', 'W2', 'Wp1', 'Wp2'):
        getattr(p, name)[:] = 0.
    p.bp2[:] = [1.5, -2.]

    a_hat = normalize_adjacency(small_graph.adjacency)
    H = gcn_forward(small_graph.features, a_hat, p)
    Z = mlp_project(H, p)

    npt.assert_equal(H, 0.)
    npt.assert_equal(Z, np.tile([1.5, -2.], (small_graph.n_nodes, 1)))


def test_single_node_encoder():

    p = _tiny_params(n_features=5)
    X = np.array([[1., -1., 2., 0.5, 0.]])
    graph = AttributedGraph(X, sp.csr_matrix((1, 1)))

    H = gcn_forward(X, normalize_adjacency(graph.adjacency), p)
    npt.assert_allclose(H, np.maximum(X @ p.W1, 0.) @ p.W2)


def test_feature_mismatch():

    p = _tiny_params(n_features=5)
    with pytest.raises(ContractViolation):
        gcn_forward(np.ones((2, 4)), sp.identity(2, format='csr'), p)


def test_head_prelu_branches():

    p = ModelParams(W1=np.ones((1, 1)), W2=np.ones((1, 1)),
                    Wp1=[[-2.]], bp1=[0.], Wp2=[[3.]], bp2=[1.])
    npt.assert_allclose(mlp_project(np.array([[1.]]), p), [[-0.5]])
    npt.assert_allclose(mlp_project(np.array([[-1.]]), p), [[7.]])


def test_head_identity_slope_is_affine():

    rng = np.random.default_rng(4)
    p = _tiny_params(n_features=5, dims=(3, 4, 6, 2))
    p.prelu_a[()] = 1.
    p.bp1[:] = rng.normal(size=6)
    H = rng.normal(size=(7, 4))

    expected = (H @ p.Wp1 + p.bp1) @ p.Wp2 + p.bp2
    npt.assert_allclose(mlp_project(H, p), expected)


def test_fuse_views():

    A = np.arange(6.).reshape(2, 3)
    B = np.ones((2, 3))

    npt.assert_allclose(fuse_views([A, B]), 0.5 * (A + B))
    npt.assert_allclose(fuse_views([A, B], [2., 0.]), A)
    npt.assert_allclose(fuse_views([A]), A)

    C = -2. * A + 3.
    npt.assert_allclose(fuse_views([A, 2 * B + C], [1., 0.5]),
                        fuse_views([A, B], [1., 1.]) +
                        0.5 * fuse_views([np.zeros_like(A), C], [1., 1.]))

    with pytest.raises(ContractViolation):
        fuse_views([])
    with pytest.raises(ContractViolation):
        fuse_views([A, B], [1.])
    with pytest.raises(ContractViolation):
        fuse_views([A, B.T])


def test_forward_views_identity_scale(small_graph):

    p = _tiny_params(n_features=small_graph.n_features)
    bundle = forward_views(small_graph, small_graph.features,
                           [small_graph.adjacency], p)

    npt.assert_allclose(bundle.H2, bundle.H1)
    npt.assert_allclose(bundle.Z2, bundle.Z1)
    assert bundle.n_scales == 1
    assert len(bundle.caches) == 2


def test_forward_views_needs_a_scale(small_graph):

    p = _tiny_params(n_features=small_graph.n_features)
    with pytest.raises(ConfigError):
        forward_views(small_graph, small_graph.features, [], p)


def _fd_setup():
    graph = planted_graph(n_nodes=12, n_features=5, n_classes=2, seed=3)
    coarsened = multi_scale_coarsen(graph, [0.5, 0.25], n_min=2)
    view_hats = [normalize_adjacency(lift_adjacency(cg, graph.n_nodes))
                 for cg in coarsened]
    a_hat = normalize_adjacency(graph.adjacency)
    X_aug = augment(graph.features, 0.2, 5)
    return graph, view_hats, a_hat, X_aug


def test_backward_zero_upstream():

    graph, view_hats, a_hat, X_aug = _fd_setup()
    p = _tiny_params()
    bundle = forward_views(graph, X_aug, view_hats, p, normalized=True,
                           a_hat=a_hat)
    grads = backward(bundle, {})

    for name in PARAM_NAMES:
        npt.assert_equal(grads[name], 0.)
        assert grads[name].shape == getattr(p, name).shape


def test_backward_missing_cache():

    graph, view_hats, a_hat, X_aug = _fd_setup()
    bundle = forward_views(graph, X_aug, view_hats, _tiny_params(),
                           normalized=True, a_hat=a_hat, keep_cache=False)
    with pytest.raises(ContractViolation):
        backward(bundle, {'H1': np.ones_like(bundle.H1)})


def test_backward_matches_finite_differences():

    graph, view_hats, a_hat, X_aug = _fd_setup()
    rng = np.random.default_rng(8)
    p = _tiny_params(seed=2)
    p.bp1[:] = rng.normal(scale=0.1, size=p.bp1.shape)
    weights = np.array([1.3, 0.7])

    bundle = forward_views(graph, X_aug, view_hats, p, weights=weights,
                           normalized=True, a_hat=a_hat)
    upstream = {'H1': rng.normal(size=bundle.H1.shape),
                'Z1': rng.normal(size=bundle.Z1.shape),
                'H2': rng.normal(size=bundle.H2.shape),
                'Z2': rng.normal(size=bundle.Z2.shape)}

    def loss():
        b = forward_views(graph, X_aug, view_hats, p, weights=weights,
                          normalized=True, a_hat=a_hat, keep_cache=False)
        return sum(np.sum(upstream[key] * getattr(b, key))
                   for key in upstream)

    grads = backward(bundle, upstream)
    for name, value in p.as_dict().items():
        numeric = numerical_gradient(loss, value, step=1e-6)
        assert rel_error(grads[name], numeric) < 1e-5, name


def test_hdf5_round_trip(tmp_path):

    p = _tiny_params(seed=9)
    centroids = np.arange(6.).reshape(3, 2)
    path = str(tmp_path / 'params.hdf5')
    p.to_hdf5(path, centroids=centroids)

    loaded, cents = ModelParams.from_hdf5(path, return_centroids=True)
    for name in PARAM_NAMES:
        npt.assert_equal(getattr(loaded, name), getattr(p, name))
    npt.assert_equal(cents, centroids)

    with pytest.raises(IoError):
        p.to_hdf5(path)
    p.to_hdf5(path, overwrite=True)


def test_hdf5_errors(tmp_path):

    with pytest.raises(IoError):
        ModelParams.from_hdf5(str(tmp_path / 'nothing.hdf5'))

    import h5py
    path = str(tmp_path / 'partial.hdf5')
    with h5py.File(path, 'w') as f:
        f.create_dataset('W1', data=np.ones((2, 2)))
    with pytest.raises(FormatError):
        ModelParams.from_hdf5(path)
