# Licensed under an MIT open source license - see LICENSE

"""
Objective terms and their exact gradients: contrastive loss with cluster
centroid positives, Laplacian regularization over the similarity graph,
Student-t soft assignments, the target distribution, the KL clustering
losses and adjacency reconstruction.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit
from sklearn.cluster import kmeans_plusplus

from .exceptions import (ConfigError, ContractViolation, DomainError,
                         NumericsError, CoarseClusterWarning)
from .utilities import make_rng, row_normalize, row_normalize_backward

__all__ = ['SimilarityTensor', 'ClusterState', 'similarity_matrices',
           'kmeans_cluster', 'one_to_many_contrastive', 'laplacian_reg',
           'soft_assign', 'target_distribution', 'clustering_loss',
           'clustering_gradients', 'reconstruction_loss', 'total_loss',
           'centroid_gradient', 'EPS', 'KL_FLOOR', 'DEFAULT_TAU',
           'DEFAULT_DOF']

EPS = 1e-8
KL_FLOOR = 1e-12
DEFAULT_TAU = 0.5
DEFAULT_DOF = 1.0


class SimilarityTensor(object):
    """
    Exponentiated cosine similarities within and across two views.

    Parameters
    ----------
    n1, n2 : `~numpy.ndarray`
        Row-normalized embeddings of each view.
    norms1, norms2 : `~numpy.ndarray`
        Row norms before normalization.
    tau : float
        Temperature.
    """
    def __init__(self, n1, n2, norms1, norms2, tau):
        self.n1 = n1
        self.n2 = n2
        self.norms1 = norms1
        self.norms2 = norms2
        self.tau = tau
        self.S11 = np.exp(n1 @ n1.T / tau)
        self.S22 = np.exp(n2 @ n2.T / tau)
        self.S12 = np.exp(n1 @ n2.T / tau)

    @property
    def S21(self):
        return self.S12.T

    @property
    def n_nodes(self):
        return self.n1.shape[0]


@dataclass
class ClusterState:
    '''
    Clustering quantities for one epoch.

    ``centroids`` are the optimized cluster centres in encoder space.
    ``contrast_centroids1`` / ``labels1`` come from k-means on the
    normalized view-1 projections and ``contrast_centroids2`` / ``labels2``
    from view 2; both are constants within an epoch.
    '''
    centroids: np.ndarray
    Q1: Optional[np.ndarray] = None
    Q2: Optional[np.ndarray] = None
    Pt: Optional[np.ndarray] = None
    H1: Optional[np.ndarray] = None
    H2: Optional[np.ndarray] = None
    labels1: Optional[np.ndarray] = None
    labels2: Optional[np.ndarray] = None
    contrast_centroids1: Optional[np.ndarray] = None
    contrast_centroids2: Optional[np.ndarray] = None
    dof: float = DEFAULT_DOF

    @property
    def n_clusters(self):
        return self.centroids.shape[0]

    def validate(self, tol=1e-9):
        for name in ('Q1', 'Q2', 'Pt'):
            mat = getattr(self, name)
            if mat is None:
                continue
            if (mat < 0).any():
                raise ContractViolation("{} has negative entries.".format(name))
            if np.abs(mat.sum(axis=1) - 1.).max(initial=0.) > tol:
                raise ContractViolation("{} rows do not sum to 1.".format(name))


def similarity_matrices(Z1, Z2, tau=DEFAULT_TAU):
    '''
    Row-normalize both views and build the exponentiated Gram matrices.

    Parameters
    ----------
    Z1, Z2 : `~numpy.ndarray`
        N x hz projections.
    tau : float
        Temperature, > 0.

    Returns
    -------
    sim : `SimilarityTensor`
    '''
    if not tau > 0:
        raise ConfigError("Temperature must be positive; got {}".format(tau))
    if Z1.shape != Z2.shape:
        raise ContractViolation("Views have shapes {0} and {1}."
                                .format(Z1.shape, Z2.shape))
    n1, norms1 = row_normalize(Z1)
    n2, norms2 = row_normalize(Z2)
    return SimilarityTensor(n1, n2, norms1, norms2, tau)


def _sq_dists(A, B):
    d = (np.sum(A ** 2, axis=1)[:, np.newaxis] - 2. * A @ B.T +
         np.sum(B ** 2, axis=1)[np.newaxis, :])
    return np.maximum(d, 0.)


def _lloyd(Z, centroids, max_iters):
    m = centroids.shape[0]
    labels = None
    for _ in range(max_iters):
        d = _sq_dists(Z, centroids)
        new = np.argmin(d, axis=1)

        # Refill empty clusters with the point farthest from its centroid.
        counts = np.bincount(new, minlength=m)
        for j in np.flatnonzero(counts == 0):
            own = d[np.arange(Z.shape[0]), new]
            own[counts[new] <= 1] = -1.
            far = int(np.argmax(own))
            counts[new[far]] -= 1
            new[far] = j
            counts[j] = 1
            centroids[j] = Z[far]

        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, Z)
        counts = np.bincount(labels, minlength=m)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, np.newaxis]

    d = _sq_dists(Z, centroids)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(Z.shape[0]), labels].sum())
    return centroids, labels, inertia


def kmeans_cluster(Z, m, seed=0, restarts=1, max_iters=100, init=None):
    '''
    Lloyd k-means with k-means++ seeding and best-of-restarts selection.

    Parameters
    ----------
    Z : `~numpy.ndarray`
        N x h data.
    m : int
        Number of clusters, 1 <= m <= N.
    seed : int or `~numpy.random.Generator`
    restarts : int, optional
        Independent runs; the lowest inertia wins.
    max_iters : int, optional
        Lloyd iteration cap per run.
    init : `~numpy.ndarray`, optional
        m x h starting centroids for the first run (warm start).

    Returns
    -------
    centroids : `~numpy.ndarray`
    labels : `~numpy.ndarray`
    inertia : float
    '''
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if m < 1:
        raise DomainError("At least one cluster is required.")
    if m > n:
        raise DomainError("Cannot form {0} clusters from {1} points."
                          .format(m, n))
    if restarts < 1:
        raise ConfigError("restarts must be at least 1.")
    if init is not None and np.shape(init) != (m, Z.shape[1]):
        raise ContractViolation("Initial centroids must be {0}x{1}."
                                .format(m, Z.shape[1]))

    rng = make_rng(seed)
    best = None
    for run in range(restarts):
        if run == 0 and init is not None:
            start = np.array(init, dtype=np.float64)
        else:
            start, _ = kmeans_plusplus(Z, m,
                                       random_state=int(rng.integers(2 ** 31 - 1)))
            start = np.array(start, dtype=np.float64)
        result = _lloyd(Z, start, max_iters)
        if best is None or result[2] < best[2]:
            best = result
    return best


def laplacian_reg(sim, n1=None, n2=None, return_grad=False):
    '''
    Laplacian smoothness of each view over its own similarity graph.

    For view a with similarity S and degrees D, the term is
    Tr(N^T (I - D^-1/2 S D^-1/2) N). The value returned is the sum of both
    view terms divided by 2N.

    Parameters
    ----------
    sim : `SimilarityTensor`
    n1, n2 : `~numpy.ndarray`, optional
        Normalized embeddings; default to those held by ``sim``.
    return_grad : bool, optional
        Also return the gradients with respect to ``n1`` and ``n2``.

    Returns
    -------
    value : float
    grad1, grad2 : `~numpy.ndarray`
        Only when ``return_grad`` is set.
    '''
    n1 = sim.n1 if n1 is None else n1
    n2 = sim.n2 if n2 is None else n2
    N = n1.shape[0]
    if N == 0:
        return (0., np.zeros_like(n1), np.zeros_like(n2)) if return_grad else 0.

    total = 0.
    grads = []
    for n, S in ((n1, sim.S11), (n2, sim.S22)):
        D = S.sum(axis=1)
        if not (D > 0).all():
            raise NumericsError("Similarity graph has a zero degree.")
        d_inv_sqrt = 1. / np.sqrt(D)
        B = S * d_inv_sqrt[:, np.newaxis] * d_inv_sqrt[np.newaxis, :]
        gram = n @ n.T
        K = gram * d_inv_sqrt[:, np.newaxis] * d_inv_sqrt[np.newaxis, :]
        total += float(np.sum(n ** 2) - np.sum(S * K))

        if return_grad:
            r = np.sum(S * K, axis=1)
            GS = (K - (r / D)[:, np.newaxis]) * S
            grads.append(2. * n - 2. * B @ n - (GS + GS.T) @ n / sim.tau)

    value = total / (2. * N)
    if return_grad:
        return value, grads[0] / (2. * N), grads[1] / (2. * N)
    return value


def _contrast_direction(S_same, S_cross, pos_extra, N, eps):
    '''
    One direction of the contrastive loss and its gradients with respect to
    the similarity entries and the centroid positive.
    '''
    diag_cross = np.diag(S_cross)
    pos = diag_cross + pos_extra
    neg = S_same.sum(axis=1) + S_cross.sum(axis=1) - np.diag(S_same) + eps
    loss = float(np.mean(np.log(neg) - np.log(pos)))

    g_neg = (1. / N) / neg
    G_same = np.repeat(g_neg[:, np.newaxis], N, axis=1)
    np.fill_diagonal(G_same, 0.)
    G_cross = np.repeat(g_neg[:, np.newaxis], N, axis=1)
    g_pos = -(1. / N) / pos
    G_cross[np.diag_indices(N)] += g_pos
    return loss, G_same, G_cross, g_pos


def one_to_many_contrastive(sim, state, lambda_reg=0., eps=EPS,
                            one_to_many=True, dual_view=True,
                            return_parts=False):
    '''
    Contrastive loss whose positives are the other view of the node and the
    centroid of its cluster, plus Laplacian regularization.

    For view 1 the positive of node i is S12_ii + exp(n1_i . c / tau), where
    c is the view-2 k-means centroid of node i; negatives are every other
    intra-view and cross-view similarity of i. View 2 mirrors this with the
    view-1 k-means. The result is (L1 + L2) + lambda_reg * L_lap.

    Parameters
    ----------
    sim : `SimilarityTensor`
    state : `ClusterState`
        Supplies ``labels1``, ``labels2`` and the contrast centroids.
        Ignored when ``one_to_many`` is False.
    lambda_reg : float, optional
        Weight of the Laplacian regularizer.
    eps : float, optional
        Smoothing added to every denominator, > 0.
    one_to_many : bool, optional
        Include centroid positives.
    dual_view : bool, optional
        Include the mirrored view-2 direction.
    return_parts : bool, optional
        Also return the loss breakdown.

    Returns
    -------
    loss : float
    grads : dict
        ``'Z1'``, ``'Z2'`` (with respect to the raw projections) and
        ``'contrast_centroids1'``, ``'contrast_centroids2'``.
    parts : dict
        Only when ``return_parts`` is set.
    '''
    if not eps > 0:
        raise ConfigError("eps must be positive; got {}".format(eps))
    tau = sim.tau
    n1, n2 = sim.n1, sim.n2
    N = sim.n_nodes

    dn1 = np.zeros_like(n1)
    dn2 = np.zeros_like(n2)
    grads = {'contrast_centroids1': None, 'contrast_centroids2': None}

    if one_to_many:
        if state is None or state.labels2 is None or state.labels1 is None:
            raise ContractViolation("Centroid positives need k-means labels "
                                    "for both views.")
        m1, m2 = state.contrast_centroids1, state.contrast_centroids2
        c1 = np.exp(np.einsum('ij,ij->i', n1, m2[state.labels2]) / tau)
        c2 = np.exp(np.einsum('ij,ij->i', n2, m1[state.labels1]) / tau)
        dm1 = np.zeros_like(m1)
        dm2 = np.zeros_like(m2)
    else:
        c1 = c2 = np.zeros(N)

    loss1, G11, G12, g_c1 = _contrast_direction(sim.S11, sim.S12, c1, N, eps)
    loss2 = 0.
    G22 = np.zeros_like(sim.S22)
    if dual_view:
        loss2, G22, G21, g_c2 = _contrast_direction(sim.S22, sim.S21, c2, N,
                                                    eps)
        G12 = G12 + G21.T

    M11 = G11 * sim.S11 / tau
    M12 = G12 * sim.S12 / tau
    M22 = G22 * sim.S22 / tau
    dn1 += (M11 + M11.T) @ n1 + M12 @ n2
    dn2 += (M22 + M22.T) @ n2 + M12.T @ n1

    if one_to_many:
        w1 = (g_c1 * c1 / tau)[:, np.newaxis]
        dn1 += w1 * m2[state.labels2]
        np.add.at(dm2, state.labels2, w1 * n1)
        if dual_view:
            w2 = (g_c2 * c2 / tau)[:, np.newaxis]
            dn2 += w2 * m1[state.labels1]
            np.add.at(dm1, state.labels1, w2 * n2)
        grads['contrast_centroids1'] = dm1
        grads['contrast_centroids2'] = dm2

    contrast = loss1 + loss2
    lap = 0.
    if lambda_reg != 0.:
        lap, dl1, dl2 = laplacian_reg(sim, return_grad=True)
        dn1 += lambda_reg * dl1
        dn2 += lambda_reg * dl2

    loss = contrast + lambda_reg * lap
    grads['Z1'] = row_normalize_backward(dn1, n1, sim.norms1)
    grads['Z2'] = row_normalize_backward(dn2, n2, sim.norms2)

    if return_parts:
        parts = {'contrast_view1': loss1, 'contrast_view2': loss2,
                 'contrast': contrast, 'laplacian': lap}
        return loss, grads, parts
    return loss, grads


def _kernel(H, centroids, v):
    d = _sq_dists(H, centroids)
    return d, (1. + d / v) ** (-(v + 1.) / 2.)


def soft_assign(H, centroids, v=DEFAULT_DOF):
    '''
    Student-t soft assignment of each row of H to each centroid.

    Parameters
    ----------
    H : `~numpy.ndarray`
        N x h embeddings.
    centroids : `~numpy.ndarray`
        K x h centroids.
    v : float, optional
        Degrees of freedom, > 0.

    Returns
    -------
    Q : `~numpy.ndarray`
        N x K, rows sum to 1.
    '''
    if not v > 0:
        raise ConfigError("Degrees of freedom must be positive; got {}"
                          .format(v))
    centroids = np.atleast_2d(centroids)
    if centroids.shape[0] == 0:
        raise DomainError("At least one centroid is required.")
    _, k = _kernel(H, centroids, v)
    return k / k.sum(axis=1, keepdims=True)


def _soft_assign_backward(H, centroids, Q, G, v):
    '''
    Gradients with respect to H and the centroids given dL/dQ.
    '''
    d, _ = _kernel(H, centroids, v)
    E = Q * (G - np.sum(G * Q, axis=1, keepdims=True))
    F = E * ((v + 1.) / v) / (1. + d / v)
    d_mu = F.T @ H - F.sum(axis=0)[:, np.newaxis] * centroids
    d_h = -(F.sum(axis=1)[:, np.newaxis] * H - F @ centroids)
    return d_h, d_mu


def target_distribution(Q):
    '''
    Sharpened, frequency-normalized target p_ij ∝ q_ij^2 / f_j.

    Clusters with f_j = 0 are dropped from the normalization and flagged.

    Parameters
    ----------
    Q : `~numpy.ndarray`
        Row-stochastic soft assignments.

    Returns
    -------
    Pt : `~numpy.ndarray`
    '''
    f = Q.sum(axis=0)
    empty = f <= 0
    if empty.any():
        warnings.warn("{} clusters hold no assignment mass and are excluded "
                      "from the target distribution.".format(empty.sum()),
                      CoarseClusterWarning)
    weight = np.zeros_like(Q)
    weight[:, ~empty] = Q[:, ~empty] ** 2 / f[~empty]
    return weight / weight.sum(axis=1, keepdims=True)


def _kl(P, Q):
    P_safe = np.maximum(P, KL_FLOOR)
    Q_safe = np.maximum(Q, KL_FLOOR)
    return float(np.sum(P * (np.log(P_safe) - np.log(Q_safe))))


def clustering_loss(Q1, Q2, Pt):
    '''
    KL(Pt||Q1) + KL(Pt||Q2) + KL(Q1||Q2), each summed over all entries.

    Parameters
    ----------
    Q1, Q2, Pt : `~numpy.ndarray`
        Row-stochastic N x K matrices.

    Returns
    -------
    loss : float
    parts : dict
    '''
    if not (Q1.shape == Q2.shape == Pt.shape):
        raise ContractViolation("Q1, Q2 and Pt must share one shape.")
    parts = {'kl_target_q1': _kl(Pt, Q1),
             'kl_target_q2': _kl(Pt, Q2),
             'kl_q1_q2': _kl(Q1, Q2)}
    return sum(parts.values()), parts


def _clustering_dq(Q1, Q2, Pt):
    Q1s = np.maximum(Q1, KL_FLOOR)
    Q2s = np.maximum(Q2, KL_FLOOR)
    G1 = -Pt / Q1s + np.log(Q1s) - np.log(Q2s) + 1.
    G2 = -Pt / Q2s - Q1 / Q2s
    return G1, G2


def clustering_gradients(state, Pt=None):
    '''
    Gradients of the clustering loss with respect to H1, H2 and the
    centroids, with Pt held constant.

    The soft-assignment Jacobian includes the row normalization term.

    Parameters
    ----------
    state : `ClusterState`
        Needs ``H1``, ``H2``, ``Q1``, ``Q2`` and ``centroids``.
    Pt : `~numpy.ndarray`, optional
        Target distribution; defaults to ``state.Pt``.

    Returns
    -------
    dH1, dH2, d_centroids : `~numpy.ndarray`
    '''
    Pt = state.Pt if Pt is None else Pt
    if state.H1 is None or state.H2 is None:
        raise ContractViolation("ClusterState lacks the embeddings the "
                                "soft assignments were built from.")
    G1, G2 = _clustering_dq(state.Q1, state.Q2, Pt)
    dH1, dmu1 = _soft_assign_backward(state.H1, state.centroids, state.Q1,
                                      G1, state.dof)
    dH2, dmu2 = _soft_assign_backward(state.H2, state.centroids, state.Q2,
                                      G2, state.dof)
    return dH1, dH2, dmu1 + dmu2


def centroid_gradient(state, Pt=None):
    '''
    Closed-form gradient of the clustering loss with respect to every
    centroid.

    Parameters
    ----------
    state : `ClusterState`
    Pt : `~numpy.ndarray`, optional

    Returns
    -------
    grad : `~numpy.ndarray`
        K x h.
    '''
    return clustering_gradients(state, Pt)[2]


def reconstruction_loss(H, A, return_grad=False):
    '''
    Squared Frobenius error between A and sigmoid(H H^T).

    Parameters
    ----------
    H : `~numpy.ndarray`
    A : `~scipy.sparse.spmatrix` or `~numpy.ndarray`
    return_grad : bool, optional
        Also return dL/dH.

    Returns
    -------
    loss : float
    A_hat : `~numpy.ndarray`
    grad : `~numpy.ndarray`
        Only when ``return_grad`` is set.
    '''
    A_dense = A.toarray() if hasattr(A, 'toarray') else np.asarray(A)
    if A_dense.shape != (H.shape[0], H.shape[0]):
        raise ContractViolation("Adjacency is {0}, embeddings have {1} rows."
                                .format(A_dense.shape, H.shape[0]))
    A_hat = expit(H @ H.T)
    resid = A_dense - A_hat
    loss = float(np.sum(resid ** 2))
    if not return_grad:
        return loss, A_hat
    dS = -2. * resid * A_hat * (1. - A_hat)
    return loss, A_hat, 2. * dS @ H


def total_loss(contrast, clu, recon, alpha=1., beta=1., gamma=1.):
    '''
    alpha * contrast + beta * clu + gamma * recon.
    '''
    if min(alpha, beta, gamma) < 0:
        raise ConfigError("Loss weights must be non-negative.")
    return alpha * contrast + beta * clu + gamma * recon
