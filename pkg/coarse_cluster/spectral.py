# Licensed under an MIT open source license - see LICENSE

"""
Numerical checks of the coarsening theory: projection matrices, eigenvalue
interlacing, condition-number contraction, spectral approximation error and
the Weyl eigenvalue bound.
"""

import warnings
from dataclasses import dataclass, asdict, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import networkx as nx

from .coarsen import WeightedGraph, edge_weights
from .exceptions import (ContractViolation, DomainError,
                         CoarseClusterWarning)
from .graphdata import LaplacianMatrix, laplacian
from .utilities import check_symmetric

__all__ = ['Partition', 'ProjectionMatrix', 'SpectralReport',
           'projection_matrix', 'eigenvalues', 'eigen_residual',
           'coarsened_laplacian', 'verify_theorems', 'feature_gap',
           'synth_block_graph', 'verify_coarsening']

EIG_TOL = 1e-8


class Partition(object):
    """
    Disjoint node blocks covering ``range(n)``.

    Parameters
    ----------
    blocks : list of array-like
        Node indices of each block.
    n : int, optional
        Number of nodes. Defaults to the number of listed indices.
    """
    def __init__(self, blocks, n=None):
        self._blocks = [np.asarray(sorted(b), dtype=np.int64).reshape(-1)
                        for b in blocks]
        if n is None:
            n = sum(b.size for b in self._blocks)
        self._n = int(n)
        self.validate(self._n)

    @classmethod
    def from_merge_map(cls, merge_map):
        return cls(merge_map.blocks(), n=merge_map.n_original)

    @classmethod
    def singletons(cls, n):
        return cls([[i] for i in range(n)], n=n)

    @property
    def blocks(self):
        return self._blocks

    @property
    def n(self):
        return self._n

    @property
    def n_blocks(self):
        return len(self._blocks)

    def validate(self, n):
        '''
        Check the blocks against ``n`` nodes.
        '''
        for b in self._blocks:
            if b.size == 0:
                raise DomainError("Partition blocks must be non-empty.")
        flat = np.concatenate(self._blocks) if self._blocks else \
            np.empty(0, dtype=np.int64)
        if flat.size != n or not np.array_equal(np.sort(flat), np.arange(n)):
            raise ContractViolation("Partition blocks must be disjoint and "
                                    "cover all {} nodes.".format(n))

    def assignment(self):
        '''
        Block index of every node.
        '''
        out = np.empty(self._n, dtype=np.int64)
        for i, b in enumerate(self._blocks):
            out[b] = i
        return out


class ProjectionMatrix(object):
    """
    Dense N x n' matrix with orthonormal columns, 1/sqrt(|C_i|) on block i.
    """
    def __init__(self, matrix):
        self._matrix = np.asarray(matrix, dtype=np.float64)

    @property
    def matrix(self):
        return self._matrix

    @property
    def shape(self):
        return self._matrix.shape

    def orthonormality_error(self):
        '''
        max |P^T P - I|.
        '''
        P = self._matrix
        return float(np.abs(P.T @ P - np.eye(P.shape[1])).max()) \
            if P.size else 0.


@dataclass
class SpectralReport:
    '''
    Outcome of `verify_theorems` for one partition.
    '''
    eigs_original: np.ndarray
    eigs_coarse: np.ndarray
    kappa_original: float
    kappa_coarse: float
    interlacing_ok: bool
    condition_ok: bool
    weyl_ok: bool
    spectral_error: float
    intra_bound: float
    lambda2_original: float = 0.
    lambda2_coarse: float = 0.
    lambda_max_original: float = 0.
    lambda_max_coarse: float = 0.
    connectivity_ok: bool = True
    connected: bool = True
    eta: float = 0.
    intra_weight: float = 0.
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        '''
        JSON-ready dictionary. Infinite condition numbers become None.
        '''
        out = asdict(self)
        extra = out.pop('extra')
        out['eigs_original'] = [float(x) for x in self.eigs_original]
        out['eigs_coarse'] = [float(x) for x in self.eigs_coarse]
        for key, value in out.items():
            if isinstance(value, (bool, np.bool_)):
                out[key] = bool(value)
            elif isinstance(value, (float, np.floating)):
                out[key] = float(value) if np.isfinite(value) else None
        out.update(extra)
        return out


def projection_matrix(partition, n):
    '''
    Projection matrix of a partition.

    Parameters
    ----------
    partition : `Partition`
    n : int
        Number of nodes.

    Returns
    -------
    P : `ProjectionMatrix`
    '''
    partition.validate(n)
    P = np.zeros((n, partition.n_blocks))
    for i, block in enumerate(partition.blocks):
        P[block, i] = 1. / np.sqrt(block.size)
    return ProjectionMatrix(P)


def _dense(L):
    if isinstance(L, LaplacianMatrix):
        return L.dense()
    if sp.issparse(L):
        return L.toarray()
    return np.asarray(L, dtype=np.float64)


def eigenvalues(L):
    '''
    Full spectrum of a symmetric matrix, sorted ascending.

    Parameters
    ----------
    L : `~coarse_cluster.graphdata.LaplacianMatrix` or array

    Returns
    -------
    eigs : `~numpy.ndarray`
    '''
    M = _dense(L)
    check_symmetric(M, tol=1e-9, what="Laplacian")
    if M.size == 0:
        return np.empty(0)
    return np.sort(la.eigh(M, eigvals_only=True))


def eigen_residual(L):
    '''
    Largest eigenpair residual ||L v - lambda v|| relative to ||L||_2.
    '''
    M = _dense(L)
    check_symmetric(M, tol=1e-9, what="Laplacian")
    if M.size == 0:
        return 0.
    vals, vecs = la.eigh(M)
    resid = np.linalg.norm(M @ vecs - vecs * vals, axis=0).max()
    scale = np.abs(vals).max()
    return float(resid / scale) if scale > 0 else float(resid)


def coarsened_laplacian(L, P):
    '''
    Compressed Laplacian P^T L P.

    Parameters
    ----------
    L : `~coarse_cluster.graphdata.LaplacianMatrix`
    P : `ProjectionMatrix`

    Returns
    -------
    L_coarse : `~coarse_cluster.graphdata.LaplacianMatrix`
        Symmetric PSD. Its row sums are not zero in general, since P does not
        preserve the all-ones vector.
    '''
    M = _dense(L)
    Pm = P.matrix if isinstance(P, ProjectionMatrix) else np.asarray(P)
    if Pm.shape[0] != M.shape[0]:
        raise ContractViolation("Projection has {0} rows but L is {1}x{1}."
                                .format(Pm.shape[0], M.shape[0]))
    Lc = Pm.T @ M @ Pm
    Lc = 0.5 * (Lc + Lc.T)
    return LaplacianMatrix(Lc)


def _lambda2(eigs):
    return float(eigs[1]) if eigs.size > 1 else 0.


def _kappa(eigs):
    '''
    lambda_max / lambda_2, infinite when lambda_2 vanishes.
    '''
    if eigs.size < 2:
        return 1.
    lam2 = eigs[1]
    if lam2 <= EIG_TOL:
        return np.inf
    return float(eigs[-1] / lam2)


def _weights_of(M):
    W = -M.copy()
    np.fill_diagonal(W, 0.)
    return W


def verify_theorems(L, partition, eta=0.):
    '''
    Check interlacing, condition-number contraction and the Weyl bound for a
    Laplacian and a node partition.

    Parameters
    ----------
    L : `~coarse_cluster.graphdata.LaplacianMatrix`
    partition : `Partition`
    eta : float, optional
        Normalized intra-block feature gap (see `feature_gap`).

    Returns
    -------
    report : `SpectralReport`
    '''
    M = _dense(L)
    n = M.shape[0]
    P = projection_matrix(partition, n)
    Lc = coarsened_laplacian(M, P)

    W = _weights_of(M)
    connected = n <= 1 or nx.is_connected(nx.from_numpy_array(W > EIG_TOL))
    if not connected:
        warnings.warn("Graph is disconnected; lambda_2 is zero and the "
                      "condition number is infinite.", CoarseClusterWarning)

    eig_o = eigenvalues(M)
    eig_c = eigenvalues(Lc)
    n_c = eig_c.size

    interlacing_ok = bool(np.all(eig_o[:n_c] <= eig_c + EIG_TOL) and
                          np.all(eig_c <= eig_o[n - n_c:] + EIG_TOL))

    kappa_o = _kappa(eig_o)
    kappa_c = _kappa(eig_c)
    condition_ok = bool(kappa_c <= kappa_o * (1. + EIG_TOL) + EIG_TOL)

    lifted = P.matrix @ Lc.dense() @ P.matrix.T
    diff = M - lifted
    diff = 0.5 * (diff + diff.T)
    spectral_error = float(np.abs(eigenvalues(diff)).max()) if n else 0.
    eig_l = eigenvalues(lifted)
    weyl_ok = bool(np.all(np.abs(eig_o - eig_l) <= spectral_error + EIG_TOL))

    same = partition.assignment()
    iu, ju = np.triu_indices(n, k=1)
    intra = same[iu] == same[ju]
    intra_weight = float(W[iu[intra], ju[intra]].sum())

    lam2_o, lam2_c = _lambda2(eig_o), _lambda2(eig_c)

    return SpectralReport(eigs_original=eig_o, eigs_coarse=eig_c,
                          kappa_original=kappa_o, kappa_coarse=kappa_c,
                          interlacing_ok=interlacing_ok,
                          condition_ok=condition_ok,
                          weyl_ok=weyl_ok,
                          spectral_error=spectral_error,
                          intra_bound=float(eta) ** 2 * intra_weight,
                          lambda2_original=lam2_o,
                          lambda2_coarse=lam2_c,
                          lambda_max_original=float(eig_o[-1]) if n else 0.,
                          lambda_max_coarse=float(eig_c[-1]) if n_c else 0.,
                          connectivity_ok=bool(lam2_c >= lam2_o - EIG_TOL),
                          connected=bool(connected),
                          eta=float(eta),
                          intra_weight=intra_weight)


def feature_gap(features, partition):
    '''
    Largest normalized feature difference between two nodes of one block.

    For each intra-block pair the gap is ``max_k |x_u,k - x_v,k|`` divided by
    ``max(||x_u||, ||x_v||)``; pairs of zero vectors contribute 0.

    Parameters
    ----------
    features : `~numpy.ndarray`
    partition : `Partition`

    Returns
    -------
    eta : float
    '''
    X = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    eta = 0.
    for block in partition.blocks:
        if block.size < 2:
            continue
        Xb = X[block]
        nb = norms[block]
        for i in range(block.size - 1):
            gap = np.abs(Xb[i + 1:] - Xb[i]).max(axis=1)
            scale = np.maximum(nb[i + 1:], nb[i])
            ok = scale > 0
            if ok.any():
                eta = max(eta, float((gap[ok] / scale[ok]).max()))
    return eta


def synth_block_graph(block_sizes, inter_weights, intra_weight):
    '''
    Graph with constant weights inside blocks and between each block pair.

    Every pair of nodes in one block is joined with ``intra_weight``; every
    pair across blocks i and j is joined with ``inter_weights[i][j]``.
    Zero weights leave the pair unconnected.

    Parameters
    ----------
    block_sizes : list of int
    inter_weights : array-like or float
        Symmetric K x K matrix (diagonal ignored), or one weight for all
        block pairs.
    intra_weight : float

    Returns
    -------
    graph : `~coarse_cluster.coarsen.WeightedGraph`
    partition : `Partition`
    '''
    sizes = [int(s) for s in block_sizes]
    if any(s < 1 for s in sizes):
        raise ContractViolation("Block sizes must be at least 1.")
    n_blocks = len(sizes)

    k = np.asarray(inter_weights, dtype=np.float64)
    if k.ndim == 0:
        k = np.full((n_blocks, n_blocks), float(k))
    if k.shape != (n_blocks, n_blocks):
        raise ContractViolation("inter_weights must be {0}x{0}."
                                .format(n_blocks))
    if (k < 0).any() or intra_weight < 0:
        raise DomainError("Block weights must be non-negative.")
    if not np.allclose(k, k.T, rtol=0., atol=0.):
        raise DomainError("inter_weights must be symmetric.")

    assignment = np.repeat(np.arange(n_blocks), sizes)
    W = k[assignment][:, assignment]
    same = assignment[:, np.newaxis] == assignment[np.newaxis, :]
    W[same] = float(intra_weight)
    np.fill_diagonal(W, 0.)

    offsets = np.concatenate([[0], np.cumsum(sizes)])
    blocks = [np.arange(offsets[i], offsets[i + 1]) for i in range(n_blocks)]
    return WeightedGraph(sp.csr_matrix(W)), Partition(blocks, n=len(assignment))


def verify_coarsening(graph, coarsened):
    '''
    Spectral reports for each scale of a coarsening cascade.

    The Laplacian is built on the cosine edge weights the coarsener matched
    on. Outcomes are diagnostic: real merges need not satisfy the constant
    block-weight assumption behind the theorems.

    Parameters
    ----------
    graph : `~coarse_cluster.graphdata.AttributedGraph`
    coarsened : list of `~coarse_cluster.coarsen.CoarsenedGraph`

    Returns
    -------
    reports : list of `SpectralReport`
    '''
    L = laplacian(edge_weights(graph).weights)
    reports = []
    for cg in coarsened:
        partition = Partition.from_merge_map(cg.merge_map)
        eta = feature_gap(graph.features, partition)
        report = verify_theorems(L, partition, eta=eta)
        report.extra = {'scale': cg.scale, 'n_coarse': int(cg.n_nodes)}
        reports.append(report)
    return reports
