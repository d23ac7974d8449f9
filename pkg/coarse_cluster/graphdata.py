# Licensed under an MIT open source license - see LICENSE

"""
In-memory attributed graph, dataset ingestion, adjacency normalization and
Laplacian construction.
"""

import json
import os
import warnings

import numpy as np
import scipy.sparse as sp
import networkx as nx

from .exceptions import IoError, FormatError, DomainError
from .utilities import check_symmetric, max_asymmetry

__all__ = ['AttributedGraph', 'LaplacianMatrix', 'load_graph',
           'symmetrize_edges', 'normalize_adjacency', 'laplacian',
           'planted_partition_graph']


class AttributedGraph(object):
    """
    Node features, a symmetric non-negative adjacency and optional labels.

    Parameters
    ----------
    features : `~numpy.ndarray`
        N x d feature matrix. Stored as float64.
    adjacency : `~scipy.sparse.spmatrix` or `~numpy.ndarray`
        N x N symmetric adjacency with a zero diagonal.
    labels : `~numpy.ndarray`, optional
        Ground-truth classes in [0, n_classes).
    n_classes : int, optional
        Number of classes. Defaults to ``labels.max() + 1`` when labels are
        given.
    name : str, optional
        Dataset name, used in reports.
    """
    def __init__(self, features, adjacency, labels=None, n_classes=None,
                 name=None):

        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise FormatError("Features must be a 2D array.")
        if not np.all(np.isfinite(features)):
            raise FormatError("Features contain non-finite values.")

        adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
        n_nodes = features.shape[0]
        if adjacency.shape != (n_nodes, n_nodes):
            raise FormatError("Adjacency shape {0} does not match {1} nodes."
                              .format(adjacency.shape, n_nodes))
        adjacency.eliminate_zeros()
        if not np.all(np.isfinite(adjacency.data)):
            raise FormatError("Adjacency contains non-finite values.")
        if (adjacency.data < 0).any():
            raise FormatError("Adjacency weights must be non-negative.")
        if adjacency.diagonal().any():
            raise FormatError("Adjacency must have a zero diagonal.")
        if max_asymmetry(adjacency) > 0.:
            raise FormatError("Adjacency must be symmetric.")

        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).ravel()
            if labels.shape[0] != n_nodes:
                raise FormatError("Expected {0} labels, found {1}."
                                  .format(n_nodes, labels.shape[0]))
            if n_classes is None:
                n_classes = int(labels.max()) + 1 if n_nodes else 0
            if n_nodes and (labels.min() < 0 or labels.max() >= n_classes):
                raise FormatError("Labels must lie in [0, {}).".format(n_classes))

        self._features = features
        self._adjacency = adjacency
        self._labels = labels
        self._n_classes = n_classes
        self.name = name

    @property
    def features(self):
        '''
        Feature matrix X (N x d).
        '''
        return self._features

    @property
    def adjacency(self):
        '''
        Sparse symmetric adjacency A (N x N).
        '''
        return self._adjacency

    @property
    def labels(self):
        '''
        Ground-truth labels, or None.
        '''
        return self._labels

    @property
    def n_nodes(self):
        return self._features.shape[0]

    @property
    def n_features(self):
        return self._features.shape[1]

    @property
    def n_classes(self):
        return self._n_classes

    @property
    def n_edges(self):
        '''
        Number of undirected edges.
        '''
        return self._adjacency.nnz // 2

    def to_networkx(self):
        '''
        Return the graph as a `~networkx.Graph` with ``weight`` edge
        attributes and ``label`` node attributes (when labels exist).
        '''
        G = nx.from_scipy_sparse_array(self.adjacency)
        if self.labels is not None:
            nx.set_node_attributes(G, dict(enumerate(self.labels.tolist())),
                                   name='label')
        return G


class LaplacianMatrix(object):
    """
    A symmetric Laplacian-type matrix L = D - W.

    Parameters
    ----------
    matrix : `~scipy.sparse.spmatrix` or `~numpy.ndarray`
        The matrix. Symmetry is required; zero row sums are guaranteed when
        built through `laplacian`.
    """
    def __init__(self, matrix):
        check_symmetric(matrix, tol=1e-9, what="Laplacian")
        self._matrix = matrix

    @property
    def matrix(self):
        return self._matrix

    @property
    def n(self):
        return self._matrix.shape[0]

    def dense(self):
        '''
        Dense `~numpy.ndarray` copy of the matrix.
        '''
        if sp.issparse(self._matrix):
            return self._matrix.toarray()
        return np.array(self._matrix, dtype=np.float64)

    def row_sums(self):
        return np.asarray(self._matrix.sum(axis=1)).ravel()


def _read_table(path, dtype, what):
    '''
    Read a numeric file with comma or whitespace separated columns. Empty
    files give an empty 2D array.
    '''
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    if not text.strip():
        return np.empty((0, 0), dtype=dtype)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return np.loadtxt(text.replace(',', ' ').splitlines(),
                              dtype=dtype, ndmin=2)
    except ValueError as exc:
        raise FormatError("Could not parse {0}: {1}".format(what, exc))


def symmetrize_edges(edges, n_nodes, weights=None):
    '''
    Build a symmetric CSR adjacency from an undirected edge list.

    Each edge is stored both ways; duplicates (in either orientation)
    collapse to one edge carrying the largest listed weight.

    Parameters
    ----------
    edges : `~numpy.ndarray`
        E x 2 integer array of 0-indexed endpoints.
    n_nodes : int
        Number of nodes.
    weights : `~numpy.ndarray`, optional
        Non-negative edge weights. Defaults to ones.

    Returns
    -------
    adjacency : `~scipy.sparse.csr_matrix`
    '''
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if weights is None:
        weights = np.ones(edges.shape[0])
    weights = np.asarray(weights, dtype=np.float64)

    if edges.size and (edges.min() < 0 or edges.max() >= n_nodes):
        raise FormatError("Edge endpoints must lie in [0, {}).".format(n_nodes))
    if (edges[:, 0] == edges[:, 1]).any():
        raise FormatError("Self-loops are not allowed in the edge list.")
    if (weights < 0).any() or not np.all(np.isfinite(weights)):
        raise FormatError("Edge weights must be finite and non-negative.")

    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])

    # Sort by key then weight so the last entry of each key is the max.
    keys = lo * max(n_nodes, 1) + hi
    order = np.lexsort((weights, keys))
    keys, lo, hi, weights = keys[order], lo[order], hi[order], weights[order]
    last = np.ones(keys.shape[0], dtype=bool)
    last[:-1] = keys[1:] != keys[:-1]
    lo, hi, weights = lo[last], hi[last], weights[last]

    rows = np.concatenate([lo, hi])
    cols = np.concatenate([hi, lo])
    vals = np.concatenate([weights, weights])
    adjacency = sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))
    adjacency.sort_indices()
    return adjacency


def load_graph(dataset_dir):
    '''
    Load a dataset directory into an `AttributedGraph`.

    The directory holds ``meta.json`` (``n_nodes``, ``n_features``,
    ``n_classes``), ``features.csv`` (N lines of d reals), ``edges.csv``
    (``u v`` or ``u v weight`` per line, 0-indexed) and an optional
    ``labels.csv`` (one integer per line). Columns may be separated by
    commas or whitespace.

    Parameters
    ----------
    dataset_dir : str
        Path to the dataset directory.

    Returns
    -------
    graph : `AttributedGraph`
    '''
    def _path(name, required=True):
        path = os.path.join(dataset_dir, name)
        if required and not os.path.isfile(path):
            raise IoError("Missing dataset file: {}".format(path))
        return path

    with open(_path('meta.json'), 'r', encoding='utf-8') as f:
        try:
            meta = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError("Could not parse meta.json: {}".format(exc))

    try:
        n_nodes = int(meta['n_nodes'])
        n_features = int(meta['n_features'])
    except (KeyError, TypeError, ValueError):
        raise FormatError("meta.json must define integer n_nodes and "
                          "n_features.")
    n_classes = meta.get('n_classes')
    n_classes = int(n_classes) if n_classes is not None else None

    features = _read_table(_path('features.csv'), np.float64, 'features.csv')
    if features.shape != (n_nodes, n_features):
        if not (features.size == 0 and n_nodes * n_features == 0):
            raise FormatError("features.csv has shape {0}; meta.json expects "
                              "({1}, {2}).".format(features.shape, n_nodes,
                                                   n_features))
        features = np.zeros((n_nodes, n_features))
    if not np.all(np.isfinite(features)):
        raise FormatError("features.csv contains non-finite values.")

    raw_edges = _read_table(_path('edges.csv'), np.float64, 'edges.csv')
    if raw_edges.size == 0:
        edges = np.empty((0, 2), dtype=np.int64)
        weights = None
    else:
        if raw_edges.shape[1] not in (2, 3):
            raise FormatError("edges.csv lines must be 'u,v' or 'u,v,weight'.")
        if not np.all(raw_edges[:, :2] == np.round(raw_edges[:, :2])):
            raise FormatError("Edge endpoints must be integers.")
        edges = raw_edges[:, :2].astype(np.int64)
        weights = raw_edges[:, 2] if raw_edges.shape[1] == 3 else None
    adjacency = symmetrize_edges(edges, n_nodes, weights=weights)

    labels = None
    labels_path = _path('labels.csv', required=False)
    if os.path.isfile(labels_path):
        raw_labels = _read_table(labels_path, np.float64, 'labels.csv').ravel()
        if not np.all(raw_labels == np.round(raw_labels)):
            raise FormatError("labels.csv must hold integers.")
        labels = raw_labels.astype(np.int64)
        if n_classes is None and labels.size:
            n_classes = int(labels.max()) + 1

    name = meta.get('name', os.path.basename(os.path.normpath(dataset_dir)))

    return AttributedGraph(features, adjacency, labels=labels,
                           n_classes=n_classes, name=name)


def normalize_adjacency(adjacency):
    '''
    Renormalized GCN propagation matrix D̃^{-1/2} (A + I) D̃^{-1/2}.

    Parameters
    ----------
    adjacency : `~scipy.sparse.spmatrix`
        Symmetric, non-negative adjacency with a zero diagonal.

    Returns
    -------
    a_hat : `~scipy.sparse.csr_matrix`
    '''
    adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
    n = adjacency.shape[0]
    a_tilde = adjacency + sp.identity(n, format='csr')
    degree = np.asarray(a_tilde.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1. / np.sqrt(degree))
    a_hat = (d_inv_sqrt @ a_tilde @ d_inv_sqrt).tocsr()
    a_hat.sort_indices()
    return a_hat


def laplacian(weights):
    '''
    Combinatorial Laplacian L = D - W of a weighted graph.

    Parameters
    ----------
    weights : `~scipy.sparse.spmatrix` or `~numpy.ndarray`
        Symmetric weight matrix with non-negative off-diagonal entries. The
        diagonal is ignored.

    Returns
    -------
    lap : `LaplacianMatrix`
    '''
    W = sp.csr_matrix(weights, dtype=np.float64)
    W = (W - sp.diags(W.diagonal())).tocsr()
    W.eliminate_zeros()
    if (W.data < 0).any():
        raise DomainError("Negative edge weights give an indefinite "
                          "Laplacian.")
    check_symmetric(W, tol=1e-9, what="Weight matrix")
    degree = np.asarray(W.sum(axis=1)).ravel()
    L = (sp.diags(degree) - W).tocsr()
    return LaplacianMatrix(L)


def planted_partition_graph(n_nodes, n_features, n_classes, seed=0,
                            p_in=0.3, p_out=0.02, noise=0.3):
    '''
    Random attributed graph with community structure.

    Nodes are split into ``n_classes`` near-equal groups. Edges fall inside
    a group with probability ``p_in`` and across groups with ``p_out``; a
    ring through all nodes keeps the graph connected. Features are positive:
    a per-class prototype plus uniform noise.

    Parameters
    ----------
    n_nodes, n_features, n_classes : int
    seed : int, optional
    p_in, p_out : float, optional
        Edge probabilities.
    noise : float, optional
        Amplitude of the feature noise.

    Returns
    -------
    graph : `AttributedGraph`
    '''
    rng = np.random.default_rng(seed)
    labels = np.arange(n_nodes) % n_classes
    rng.shuffle(labels)

    same = labels[:, np.newaxis] == labels[np.newaxis, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n_nodes, n_nodes)) < prob, k=1)
    rows, cols = np.nonzero(upper)
    ring = np.arange(n_nodes)
    edges = np.concatenate([np.column_stack([rows, cols]),
                            np.column_stack([ring, (ring + 1) % n_nodes])])
    edges = edges[edges[:, 0] != edges[:, 1]]

    prototypes = rng.random((n_classes, n_features))
    features = prototypes[labels] + noise * rng.random((n_nodes, n_features))

    return AttributedGraph(features, symmetrize_edges(edges, n_nodes),
                           labels=labels, n_classes=n_classes,
                           name='planted')
