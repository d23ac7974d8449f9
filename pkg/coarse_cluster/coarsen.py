# Licensed under an MIT open source license - see LICENSE

"""
Multi-scale pairwise coarsening: cosine edge weights, greedy maximum
similarity matching, weight-accumulating merges and lifting coarse
structure back onto the original nodes.
"""

import warnings

import numpy as np
import scipy.sparse as sp
import networkx as nx
from astropy import log

from .exceptions import ConfigError, ContractViolation, CoarseClusterWarning

__all__ = ['WeightedGraph', 'MergeMap', 'CoarsenedGraph', 'edge_weights',
           'match_pairs', 'coarsen_step', 'multi_scale_coarsen',
           'lift_adjacency', 'scale_schedule', 'target_size', 'N_MIN']

N_MIN = 32


class WeightedGraph(object):
    """
    A weighted graph whose nodes each stand for one or more original nodes.

    Parameters
    ----------
    weights : `~scipy.sparse.spmatrix`
        Symmetric non-negative weights with zero diagonal.
    node_mass : `~numpy.ndarray`, optional
        Number of original nodes behind each node. Defaults to ones.
    edges : `~scipy.sparse.spmatrix`, optional
        Symmetric edge structure. Its non-zero pattern marks the edges, so
        an edge can carry zero weight. Defaults to the non-zero pattern of
        ``weights``.
    """
    def __init__(self, weights, node_mass=None, edges=None):
        self._weights = sp.csr_matrix(weights, dtype=np.float64)
        self._weights.eliminate_zeros()
        self._weights.sort_indices()

        structure = abs(self._weights)
        if edges is not None:
            structure = structure + abs(sp.csr_matrix(edges, dtype=np.float64))
        structure = sp.triu(structure + structure.T, k=1).tocsr()
        structure.eliminate_zeros()
        structure.data[:] = 1.
        self._edges = (structure + structure.T).tocsr()
        self._edges.sort_indices()
        if node_mass is None:
            node_mass = np.ones(self._weights.shape[0], dtype=np.int64)
        self._node_mass = np.asarray(node_mass, dtype=np.int64)

    @property
    def weights(self):
        return self._weights

    @property
    def edges(self):
        return self._edges

    @property
    def node_mass(self):
        return self._node_mass

    @property
    def n_edges(self):
        return self._edges.nnz // 2

    @property
    def n_nodes(self):
        return self._weights.shape[0]

    def total_weight(self):
        '''
        Sum of undirected edge weights (each edge counted once).
        '''
        return float(self._weights.sum()) / 2.

    def edge_list(self):
        '''
        Upper-triangle edges as ``(u, v, w)`` arrays with ``u < v``, sorted
        by ``u`` then ``v``. Zero-weight edges are included.
        '''
        upper = sp.triu(self._edges, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        u = upper.row[order].astype(np.int64)
        v = upper.col[order].astype(np.int64)
        if u.size == 0:
            return u, v, np.zeros(0)
        w = np.asarray(self._weights[u, v], dtype=np.float64).ravel()
        return u, v, w


class MergeMap(object):
    """
    Assignment of every original node to a super-node.

    Parameters
    ----------
    assignment : `~numpy.ndarray`
        Integer super-node id per original node. Ids must cover
        ``[0, n_coarse)`` with no gaps.
    """
    def __init__(self, assignment):
        assignment = np.asarray(assignment, dtype=np.int64)
        n_coarse = int(assignment.max()) + 1 if assignment.size else 0
        if assignment.size and assignment.min() < 0:
            raise ContractViolation("Super-node ids must be non-negative.")
        if np.bincount(assignment, minlength=n_coarse).min(initial=1) == 0:
            raise ContractViolation("Every super-node needs at least one "
                                    "original node.")
        self._assignment = assignment
        self._n_coarse = n_coarse

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n))

    @property
    def assignment(self):
        return self._assignment

    @property
    def n_coarse(self):
        return self._n_coarse

    @property
    def n_original(self):
        return self._assignment.shape[0]

    def compose(self, other):
        '''
        Follow this map, then ``other`` (which maps this map's super-nodes
        onward).
        '''
        if other.n_original != self.n_coarse:
            raise ContractViolation("Cannot compose merge maps of sizes "
                                    "{0} -> {1}".format(self.n_coarse,
                                                        other.n_original))
        return MergeMap(other.assignment[self._assignment])

    def indicator(self):
        '''
        Sparse N x n' 0/1 membership matrix.
        '''
        n = self.n_original
        return sp.csr_matrix((np.ones(n), (np.arange(n), self._assignment)),
                             shape=(n, self.n_coarse))

    def blocks(self):
        '''
        Original node indices of each super-node, in super-node order.
        '''
        order = np.argsort(self._assignment, kind='stable')
        counts = np.bincount(self._assignment, minlength=self.n_coarse)
        return np.split(order, np.cumsum(counts)[:-1])


class CoarsenedGraph(object):
    """
    One scale of the coarsening cascade.

    Parameters
    ----------
    graph : `WeightedGraph`
        Coarse weighted graph.
    merge_map : `MergeMap`
        Original node to super-node map.
    scale : float
        Scale s_k in (0, 1].
    target_nodes : int
        N_k = max(N_min, floor(s_k N)).
    steps : int
        Number of match/merge passes taken from the original graph.
    dropped_weight : float
        Total intra-pair weight folded away since the original graph.
    early_stop : bool
        True when a pass produced no pairs before reaching the target.
    """
    def __init__(self, graph, merge_map, scale, target_nodes, steps=0,
                 dropped_weight=0., early_stop=False):
        self.graph = graph
        self.merge_map = merge_map
        self.scale = scale
        self.target_nodes = target_nodes
        self.steps = steps
        self.dropped_weight = dropped_weight
        self.early_stop = early_stop

    @property
    def n_nodes(self):
        return self.graph.n_nodes

    def to_networkx(self):
        '''
        Coarse graph as a `~networkx.Graph` with ``mass`` node attributes
        and ``weight`` edge attributes, zero-weight edges included.
        '''
        G = nx.Graph()
        G.add_nodes_from(range(self.n_nodes))
        u, v, w = self.graph.edge_list()
        G.add_weighted_edges_from(zip(u.tolist(), v.tolist(), w.tolist()))
        nx.set_node_attributes(G, dict(enumerate(self.graph.node_mass.tolist())),
                               name='mass')
        return G

    def meta(self):
        '''
        Summary dictionary used by the coarsening export.
        '''
        return {'scale': self.scale,
                'target_nodes': int(self.target_nodes),
                'n_nodes': int(self.n_nodes),
                'steps': int(self.steps),
                'dropped_weight': float(self.dropped_weight),
                'early_stop': bool(self.early_stop)}


def edge_weights(graph):
    '''
    Cosine-similarity weights on the edges of an attributed graph.

    Negative similarities are clamped to zero and zero-norm feature vectors
    give zero weight on all their edges. Edges keep their place in the
    graph structure even when their weight is zero.

    Parameters
    ----------
    graph : `~coarse_cluster.graphdata.AttributedGraph`

    Returns
    -------
    wg : `WeightedGraph`
    '''
    X = graph.features
    norms = np.linalg.norm(X, axis=1)
    upper = sp.triu(graph.adjacency, k=1).tocoo()
    u, v = upper.row, upper.col

    dots = np.einsum('ij,ij->i', X[u], X[v])
    denom = norms[u] * norms[v]
    cos = np.zeros_like(dots)
    ok = denom > 0
    cos[ok] = dots[ok] / denom[ok]
    w = np.maximum(cos, 0.)

    n = graph.n_nodes
    W = sp.csr_matrix((np.concatenate([w, w]),
                       (np.concatenate([u, v]), np.concatenate([v, u]))),
                      shape=(n, n))
    return WeightedGraph(W, edges=graph.adjacency)


def match_pairs(wg):
    '''
    Disjoint maximum-similarity matching.

    Edges are visited globally in non-increasing weight order (ties broken
    by the lower endpoint, then the higher endpoint) and an edge is taken
    whenever both endpoints are still free.

    Parameters
    ----------
    wg : `WeightedGraph`

    Returns
    -------
    pairs : list of tuple
        ``(u, v)`` pairs with ``u < v`` in selection order.
    '''
    u, v, w = wg.edge_list()
    if w.size == 0:
        return []

    order = np.lexsort((v, u, -w))
    matched = np.zeros(wg.n_nodes, dtype=bool)
    pairs = []
    for a, b in zip(u[order].tolist(), v[order].tolist()):
        if matched[a] or matched[b]:
            continue
        matched[a] = matched[b] = True
        pairs.append((a, b))
    return pairs


def _check_pairs(pairs, n_nodes):
    flat = np.asarray(pairs, dtype=np.int64).reshape(-1)
    if flat.size == 0:
        return flat.reshape(0, 2)
    if flat.min() < 0 or flat.max() >= n_nodes:
        raise ContractViolation("Pair endpoints must lie in [0, {}).".format(n_nodes))
    if np.unique(flat).size != flat.size:
        raise ContractViolation("Pairs overlap: a node appears more than once.")
    return flat.reshape(-1, 2)


def pair_weight(wg, pairs):
    '''
    Total weight of the edges joining each pair.
    '''
    pairs = _check_pairs(pairs, wg.n_nodes)
    if pairs.size == 0:
        return 0.
    return float(np.asarray(wg.weights[pairs[:, 0], pairs[:, 1]]).sum())


def coarsen_step(wg, pairs):
    '''
    Merge each pair into one node.

    Weights to every other node add up, the intra-pair weight is dropped and
    node masses add. The merged node takes the position of its lower
    endpoint; unmatched nodes keep their relative order.

    Parameters
    ----------
    wg : `WeightedGraph`
    pairs : list of tuple
        Disjoint node pairs.

    Returns
    -------
    coarse : `WeightedGraph`
    merge_map : `MergeMap`
        Map from ``wg`` nodes to ``coarse`` nodes.
    '''
    pairs = _check_pairs(pairs, wg.n_nodes)

    rep = np.arange(wg.n_nodes)
    if pairs.size:
        lo = pairs.min(axis=1)
        rep[pairs[:, 0]] = lo
        rep[pairs[:, 1]] = lo
    _, assignment = np.unique(rep, return_inverse=True)
    merge_map = MergeMap(assignment)

    S = merge_map.indicator()
    W = (S.T @ wg.weights @ S).tocsr()
    W = (W - sp.diags(W.diagonal())).tocsr()
    E = (S.T @ wg.edges @ S).tocsr()
    E = (E - sp.diags(E.diagonal())).tocsr()
    mass = np.bincount(assignment, weights=wg.node_mass,
                       minlength=merge_map.n_coarse).astype(np.int64)

    return WeightedGraph(W, node_mass=mass, edges=E), merge_map


def target_size(n_nodes, scale, n_min=N_MIN):
    '''
    Target node count max(N_min, floor(s N)).
    '''
    return max(int(n_min), int(np.floor(scale * n_nodes + 1e-9)))


def _check_scales(scales, n_min):
    scales = [float(s) for s in scales]
    if len(scales) == 0:
        raise ConfigError("At least one scale is required.")
    for s in scales:
        if not (0. < s <= 1.):
            raise ConfigError("Scales must lie in (0, 1]; got {}".format(s))
    if any(b > a for a, b in zip(scales[:-1], scales[1:])):
        raise ConfigError("Scales must be in non-increasing order.")
    if int(n_min) < 1:
        raise ConfigError("n_min must be at least 1.")
    return scales


def multi_scale_coarsen(graph, scales, n_min=N_MIN, verbose=False):
    '''
    Build the coarsening cascade for a list of non-increasing scales.

    Each scale continues from the previous (finer) one, repeating matching
    and merging on the current weights until the node count reaches the
    target N_k. The final pass only merges as many of its best pairs as
    are needed to land on N_k. If a pass yields no pairs the scale stops
    early and the result is flagged.

    Parameters
    ----------
    graph : `~coarse_cluster.graphdata.AttributedGraph`
    scales : list of float
        Scales in (0, 1], in non-increasing order.
    n_min : int, optional
        Minimum node count N_min.
    verbose : bool, optional
        Log each scale.

    Returns
    -------
    coarsened : list of `CoarsenedGraph`
    '''
    scales = _check_scales(scales, n_min)

    n_orig = graph.n_nodes
    current = edge_weights(graph)
    mapping = MergeMap.identity(n_orig)
    steps = 0
    dropped = 0.
    out = []

    for s in scales:
        target = target_size(n_orig, s, n_min)
        early_stop = False
        while current.n_nodes > target:
            pairs = match_pairs(current)
            if not pairs:
                early_stop = True
                warnings.warn("Coarsening to scale {0} stopped early at {1} "
                              "nodes (target {2}): no matchable edges remain."
                              .format(s, current.n_nodes, target),
                              CoarseClusterWarning)
                break
            pairs = pairs[:current.n_nodes - target]
            dropped += pair_weight(current, pairs)
            current, step_map = coarsen_step(current, pairs)
            mapping = mapping.compose(step_map)
            steps += 1

        if verbose:
            log.info("Scale {0}: {1} nodes (target {2}) after {3} passes"
                     .format(s, current.n_nodes, target, steps))

        out.append(CoarsenedGraph(current, mapping, s, target, steps=steps,
                                  dropped_weight=dropped,
                                  early_stop=early_stop))

    return out


def lift_adjacency(cg, n_original):
    '''
    Re-index a coarse graph's weights onto the original nodes.

    ``lifted[u, v] = W[c(u), c(v)]`` when ``c(u) != c(v)`` and 0 otherwise.

    Parameters
    ----------
    cg : `CoarsenedGraph`
    n_original : int

    Returns
    -------
    lifted : `~scipy.sparse.csr_matrix`
    '''
    if cg.merge_map.n_original != n_original:
        raise ContractViolation("Merge map covers {0} nodes, expected {1}."
                                .format(cg.merge_map.n_original, n_original))
    S = cg.merge_map.indicator()
    lifted = (S @ cg.graph.weights @ S.T).tocsr()
    lifted.eliminate_zeros()
    lifted.sort_indices()
    return lifted


def scale_schedule(kind, s, r=None):
    '''
    Scale lists used in the scale sensitivity study.

    Parameters
    ----------
    kind : {'dual', 'dual_ratio', 'triple'}
        ``'dual'`` gives (s + 0.1, s); ``'dual_ratio'`` gives (s, r);
        ``'triple'`` gives (s, 0.5 s, 0.2 s).
    s : float
        Base scale.
    r : float, optional
        Second scale for ``'dual_ratio'``.

    Returns
    -------
    scales : list of float
        Sorted descending.
    '''
    if kind == 'dual':
        scales = [s + 0.1, s]
    elif kind == 'dual_ratio':
        if r is None:
            raise ConfigError("'dual_ratio' needs a second scale r.")
        scales = [s, r]
    elif kind == 'triple':
        scales = [s, 0.5 * s, 0.2 * s]
    else:
        raise ConfigError("Unknown schedule kind: {}".format(kind))

    scales = sorted((round(x, 10) for x in scales), reverse=True)
    return _check_scales(scales, 1)
