# Licensed under an MIT open source license - see LICENSE

"""
Feature-dropout augmentation, the two-layer graph-convolution encoder, the
projection head, multi-scale view fusion and hand-derived reverse-mode
gradients for every network parameter.
"""

import numpy as np
import h5py

from .exceptions import ConfigError, ContractViolation, FormatError, IoError
from .graphdata import normalize_adjacency
from .utilities import make_rng, check_finite

__all__ = ['ModelParams', 'ViewBundle', 'augment', 'gcn_forward',
           'mlp_project', 'forward_views', 'fuse_views', 'backward',
           'encoder_backward', 'head_backward', 'DEFAULT_DIMS', 'PARAM_NAMES']

DEFAULT_DIMS = (256, 512, 1024, 256)
PARAM_NAMES = ('W1', 'W2', 'Wp1', 'bp1', 'Wp2', 'bp2', 'prelu_a')
# Parameters that receive decoupled weight decay.
WEIGHT_MATRICES = ('W1', 'W2', 'Wp1', 'Wp2')
PRELU_INIT = 0.25


class ModelParams(object):
    """
    Encoder and projection-head parameters.

    Parameters
    ----------
    W1, W2 : `~numpy.ndarray`
        Encoder weights, d x h1 and h1 x h2.
    Wp1, bp1 : `~numpy.ndarray`
        First head layer, h2 x hp and hp.
    Wp2, bp2 : `~numpy.ndarray`
        Second head layer, hp x hz and hz.
    prelu_a : float
        Shared PReLU slope of the head.
    """
    def __init__(self, W1, W2, Wp1, bp1, Wp2, bp2, prelu_a=PRELU_INIT):
        self.W1 = np.asarray(W1, dtype=np.float64)
        self.W2 = np.asarray(W2, dtype=np.float64)
        self.Wp1 = np.asarray(Wp1, dtype=np.float64)
        self.bp1 = np.asarray(bp1, dtype=np.float64)
        self.Wp2 = np.asarray(Wp2, dtype=np.float64)
        self.bp2 = np.asarray(bp2, dtype=np.float64)
        self.prelu_a = np.asarray(prelu_a, dtype=np.float64).reshape(())
        self._check_dims()

    def _check_dims(self):
        d, h1 = self.W1.shape
        if self.W2.shape[0] != h1 or self.Wp1.shape[0] != self.W2.shape[1] \
                or self.bp1.shape != (self.Wp1.shape[1],) \
                or self.Wp2.shape[0] != self.Wp1.shape[1] \
                or self.bp2.shape != (self.Wp2.shape[1],):
            raise ContractViolation("Inconsistent parameter shapes: {}"
                                    .format(self.shapes()))

    @classmethod
    def init(cls, dims, n_features, seed):
        '''
        Glorot-uniform weights, zero biases and the default PReLU slope.

        Parameters
        ----------
        dims : tuple of int
            (h1, h2, hp, hz).
        n_features : int
            Input feature dimension d.
        seed : int or `~numpy.random.Generator`
        '''
        h1, h2, hp, hz = (int(x) for x in dims)
        rng = make_rng(seed)

        def glorot(fan_in, fan_out):
            limit = np.sqrt(6. / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(W1=glorot(n_features, h1), W2=glorot(h1, h2),
                   Wp1=glorot(h2, hp), bp1=np.zeros(hp),
                   Wp2=glorot(hp, hz), bp2=np.zeros(hz),
                   prelu_a=PRELU_INIT)

    @property
    def dims(self):
        return (self.W1.shape[1], self.W2.shape[1], self.Wp1.shape[1],
                self.Wp2.shape[1])

    @property
    def n_features(self):
        return self.W1.shape[0]

    def shapes(self):
        return {name: getattr(self, name).shape for name in PARAM_NAMES}

    def as_dict(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return ModelParams(**{name: value.copy()
                              for name, value in self.as_dict().items()})

    def zeros_like(self):
        '''
        Gradient accumulator with one zero array per parameter.
        '''
        return {name: np.zeros_like(value)
                for name, value in self.as_dict().items()}

    def check_finite(self, epoch=None):
        for name, value in self.as_dict().items():
            check_finite(value, "parameter {}".format(name), epoch=epoch)

    def to_hdf5(self, path, centroids=None, overwrite=False):
        '''
        Store every parameter (and optionally the centroids) as one HDF5
        dataset each.
        '''
        mode = 'w' if overwrite else 'w-'
        try:
            with h5py.File(path, mode) as f:
                for name, value in self.as_dict().items():
                    f.create_dataset(name, data=value)
                if centroids is not None:
                    f.create_dataset('centroids', data=centroids)
                f.attrs['dims'] = np.array(self.dims)
        except (OSError, FileExistsError) as exc:
            raise IoError("Could not write {0}: {1}".format(path, exc))

    @classmethod
    def from_hdf5(cls, path, return_centroids=False):
        '''
        Load parameters written by `to_hdf5`.
        '''
        try:
            with h5py.File(path, 'r') as f:
                missing = [name for name in PARAM_NAMES if name not in f]
                if missing:
                    raise FormatError("{0} lacks datasets: {1}"
                                      .format(path, ", ".join(missing)))
                params = cls(**{name: f[name][()] for name in PARAM_NAMES})
                centroids = f['centroids'][()] if 'centroids' in f else None
        except OSError as exc:
            raise IoError("Could not read {0}: {1}".format(path, exc))
        if return_centroids:
            return params, centroids
        return params


class ViewBundle(object):
    """
    Outputs of all views for one forward pass, with the caches backward
    needs.

    Parameters
    ----------
    H1, Z1 : `~numpy.ndarray`
        Original-view encoder and head outputs.
    H2s, Z2s : list of `~numpy.ndarray`
        Augmented-view outputs, one per scale.
    weights : `~numpy.ndarray`
        Fusion weights w_s.
    params : `ModelParams`
        Parameters the pass was run with.
    caches : list of dict, optional
        Per-view intermediates; the original view first.
    """
    def __init__(self, H1, Z1, H2s, Z2s, weights, params, caches=None):
        self.H1 = H1
        self.Z1 = Z1
        self.H2s = H2s
        self.Z2s = Z2s
        self.weights = np.asarray(weights, dtype=np.float64)
        self.params = params
        self.caches = caches
        self.H2 = fuse_views(H2s, self.weights)
        self.Z2 = fuse_views(Z2s, self.weights)

    @property
    def n_nodes(self):
        return self.H1.shape[0]

    @property
    def n_scales(self):
        return len(self.H2s)


def augment(X, p, rng_seed):
    '''
    Zero each entry of X independently with probability p.

    Surviving entries are left as they are (no 1/(1-p) rescaling).

    Parameters
    ----------
    X : `~numpy.ndarray`
    p : float
        Drop probability in [0, 1].
    rng_seed : int or `~numpy.random.Generator`

    Returns
    -------
    X_aug : `~numpy.ndarray`
    '''
    if not (0. <= p <= 1.):
        raise ConfigError("Mask probability must lie in [0, 1]; got {}"
                          .format(p))
    rng = make_rng(rng_seed)
    drop = rng.random(X.shape) < p
    X_aug = np.array(X, dtype=np.float64, copy=True)
    X_aug[drop] = 0.
    return X_aug


def gcn_forward(X, A_hat, params, cache=None):
    '''
    Two-layer graph convolution H = A_hat ReLU(A_hat X W1) W2.

    Parameters
    ----------
    X : `~numpy.ndarray`
    A_hat : `~scipy.sparse.spmatrix`
        Normalized propagation matrix.
    params : `ModelParams`
    cache : dict, optional
        Filled with the intermediates backward needs.

    Returns
    -------
    H : `~numpy.ndarray`
    '''
    if X.shape[1] != params.W1.shape[0]:
        raise ContractViolation("Features have {0} columns, W1 expects {1}."
                                .format(X.shape[1], params.W1.shape[0]))
    AX = np.asarray(A_hat @ X)
    P1 = AX @ params.W1
    H1a = np.maximum(P1, 0.)
    AH = np.asarray(A_hat @ H1a)
    H = AH @ params.W2
    check_finite(H, "encoder output")

    if cache is not None:
        cache.update(A_hat=A_hat, AX=AX, P1=P1, AH=AH, H=H)
    return H


def mlp_project(H, params, cache=None):
    '''
    Projection head Z = PReLU(H Wp1 + bp1) Wp2 + bp2.

    Parameters
    ----------
    H : `~numpy.ndarray`
    params : `ModelParams`
    cache : dict, optional

    Returns
    -------
    Z : `~numpy.ndarray`
    '''
    U = H @ params.Wp1 + params.bp1
    V = np.where(U >= 0, U, params.prelu_a * U)
    Z = V @ params.Wp2 + params.bp2
    check_finite(Z, "projection output")

    if cache is not None:
        cache.update(U=U, V=V)
    return Z


def _encode(X, A_hat, params, keep_cache):
    cache = {} if keep_cache else None
    H = gcn_forward(X, A_hat, params, cache=cache)
    Z = mlp_project(H, params, cache=cache)
    return H, Z, cache


def fuse_views(mats, weights=None):
    '''
    Weighted average (1/K) sum_s w_s M_s.

    Parameters
    ----------
    mats : list of `~numpy.ndarray`
    weights : array-like, optional
        Length-K weights, ones by default.

    Returns
    -------
    fused : `~numpy.ndarray`
    '''
    if len(mats) == 0:
        raise ContractViolation("Nothing to fuse.")
    K = len(mats)
    weights = np.ones(K) if weights is None else np.asarray(weights,
                                                            dtype=np.float64)
    if weights.shape != (K,):
        raise ContractViolation("Expected {0} fusion weights, got {1}."
                                .format(K, weights.shape))
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ContractViolation("All views must share one shape.")

    fused = weights[0] * mats[0]
    for w, m in zip(weights[1:], mats[1:]):
        fused = fused + w * m
    return fused / K


def forward_views(graph, X_aug, lifted_adjs, params, weights=None,
                  normalized=False, a_hat=None, keep_cache=True):
    '''
    Run the original view and every augmented view.

    The original view encodes (X, A_hat of the graph). Augmented view s
    encodes (X_aug, normalized lifted adjacency s). The first entry of
    ``lifted_adjs`` is conventionally the original adjacency.

    Parameters
    ----------
    graph : `~coarse_cluster.graphdata.AttributedGraph`
    X_aug : `~numpy.ndarray`
        Masked features.
    lifted_adjs : list of `~scipy.sparse.spmatrix`
        One adjacency per scale.
    params : `ModelParams`
    weights : array-like, optional
        Fusion weights, ones by default.
    normalized : bool, optional
        When True, ``lifted_adjs`` are already propagation matrices.
    a_hat : `~scipy.sparse.spmatrix`, optional
        Precomputed propagation matrix of the original graph.
    keep_cache : bool, optional
        Keep intermediates for `backward`.

    Returns
    -------
    bundle : `ViewBundle`
    '''
    if len(lifted_adjs) == 0:
        raise ConfigError("At least one scale is required.")
    if a_hat is None:
        a_hat = normalize_adjacency(graph.adjacency)

    H1, Z1, cache1 = _encode(graph.features, a_hat, params, keep_cache)

    H2s, Z2s, caches = [], [], [cache1]
    for adj in lifted_adjs:
        A_s = adj if normalized else normalize_adjacency(adj)
        H, Z, cache = _encode(X_aug, A_s, params, keep_cache)
        H2s.append(H)
        Z2s.append(Z)
        caches.append(cache)

    if weights is None:
        weights = np.ones(len(lifted_adjs))
    return ViewBundle(H1, Z1, H2s, Z2s, weights, params,
                      caches=caches if keep_cache else None)


def head_backward(cache, dZ, params, grads):
    '''
    Accumulate head gradients into ``grads`` and return dL/dH.
    '''
    U, V = cache['U'], cache['V']
    grads['Wp2'] += V.T @ dZ
    grads['bp2'] += dZ.sum(axis=0)
    dV = dZ @ params.Wp2.T
    neg = U < 0
    dU = np.where(neg, params.prelu_a * dV, dV)
    grads['prelu_a'] += np.sum(dV[neg] * U[neg])
    grads['Wp1'] += cache['H'].T @ dU
    grads['bp1'] += dU.sum(axis=0)
    return dU @ params.Wp1.T


def encoder_backward(cache, dH, params, grads):
    '''
    Accumulate encoder gradients into ``grads``.
    '''
    grads['W2'] += cache['AH'].T @ dH
    # A_hat is symmetric, so it is its own transpose.
    dH1a = np.asarray(cache['A_hat'] @ (dH @ params.W2.T))
    dP1 = dH1a * (cache['P1'] > 0)
    grads['W1'] += cache['AX'].T @ dP1


def backward(bundle, upstream_grads):
    '''
    Exact parameter gradients for a forward pass.

    Parameters
    ----------
    bundle : `ViewBundle`
        Output of `forward_views` with caches kept.
    upstream_grads : dict
        Gradients of the loss with respect to any of ``'H1'``, ``'Z1'``,
        ``'H2'`` and ``'Z2'`` (fused). Absent keys count as zero.

    Returns
    -------
    grads : dict
        One array per entry of `PARAM_NAMES`.
    '''
    if bundle.caches is None or any(c is None for c in bundle.caches):
        raise ContractViolation("Forward caches are missing; run "
                                "forward_views with keep_cache=True.")
    params = bundle.params
    grads = params.zeros_like()

    def _view(cache, dH, dZ):
        dH = np.zeros_like(cache['H']) if dH is None else np.array(dH)
        if dZ is not None:
            dH = dH + head_backward(cache, dZ, params, grads)
        encoder_backward(cache, dH, params, grads)

    _view(bundle.caches[0], upstream_grads.get('H1'),
          upstream_grads.get('Z1'))

    dH2 = upstream_grads.get('H2')
    dZ2 = upstream_grads.get('Z2')
    K = bundle.n_scales
    for w, cache in zip(bundle.weights, bundle.caches[1:]):
        share = w / K
        _view(cache, None if dH2 is None else share * dH2,
              None if dZ2 is None else share * dZ2)

    return grads
