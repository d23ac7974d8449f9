# Licensed under an MIT open source license - see LICENSE

"""
Training configuration, reconstruction pre-training, centroid
initialization, the joint optimization loop, label extraction and the
finite-difference gradient check.
"""

import time
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
import warnings
from dataclasses import dataclass, field, fields, replace, asdict
from typing import Optional

import numpy as np
from astropy import log
from astropy.table import Table
from threadpoolctl import threadpool_limits

from .coarsen import multi_scale_coarsen, lift_adjacency, N_MIN
from .exceptions import (ConfigError, ContractViolation, IoError,
                         NumericsError, CoarseClusterWarning)
from .graphdata import normalize_adjacency, planted_partition_graph
from .losses import (ClusterState, similarity_matrices, kmeans_cluster,
                     one_to_many_contrastive, soft_assign,
                     target_distribution, clustering_loss,
                     clustering_gradients, reconstruction_loss, total_loss,
                     EPS, DEFAULT_TAU, DEFAULT_DOF)
from .metrics import clustering_metrics
from .netfwd import (ModelParams, augment, gcn_forward, forward_views,
                     backward, encoder_backward, DEFAULT_DIMS,
                     WEIGHT_MATRICES)
from .optim import AdamW
from .utilities import check_finite, row_normalize, thread_limit

__all__ = ['TrainConfig', 'TrainResult', 'EpochConstants', 'DATASET_PRESETS',
           'pretrain', 'init_centroids', 'train', 'predict_labels',
           'prepare_views', 'epoch_constants', 'objective',
           'gradient_check']

DATASET_PRESETS = {
    'acm': dict(mask_p=0.4, lambda_reg=0.1, scales=(0.5, 0.25, 0.1),
                weight_decay=1e-3, learning_rate=5e-4, n_clusters=3),
    'dblp': dict(mask_p=0.2, lambda_reg=0.05, scales=(0.3, 0.15, 0.06),
                 weight_decay=1e-6, learning_rate=5e-4, n_clusters=4),
    'citeseer': dict(mask_p=0.3, lambda_reg=0.1, scales=(0.2, 0.1),
                     weight_decay=1e-2, learning_rate=5e-4, n_clusters=6),
    'cora': dict(mask_p=0.1, lambda_reg=0.0005, scales=(0.2, 0.1),
                 weight_decay=1e-2, learning_rate=5e-4, n_clusters=7),
    'reuters': dict(mask_p=0.2, lambda_reg=0.1, scales=(0.2, 0.05),
                    weight_decay=1e-2, learning_rate=5e-4, n_clusters=4),
}

LABEL_SOURCES = ('mean', 'q1')


@dataclass
class TrainConfig:
    '''
    Hyperparameters of one training run.

    The defaults are the Cora settings. ``n_clusters`` falls back to the
    graph's class count. ``dataset`` is only read by the command line.
    '''
    mask_p: float = 0.1
    lambda_reg: float = 0.0005
    scales: tuple = (0.2, 0.1)
    n_min: int = N_MIN
    weight_decay: float = 1e-2
    learning_rate: float = 5e-4
    pretrain_learning_rate: float = 5e-3
    tau: float = DEFAULT_TAU
    dof_v: float = DEFAULT_DOF
    alpha: float = 1.
    beta: float = 1.
    gamma: float = 1.
    pretrain_epochs: int = 50
    epochs: int = 200
    kmeans_restarts: int = 20
    contrast_kmeans_iters: int = 100
    seed: int = 0
    dims: tuple = DEFAULT_DIMS
    n_clusters: Optional[int] = None
    include_original: bool = True
    fusion_weights: Optional[tuple] = None
    one_to_many: bool = True
    dual_view: bool = True
    label_source: str = 'mean'
    eps: float = EPS
    dataset: Optional[str] = None

    def __post_init__(self):
        self.scales = tuple(float(s) for s in self.scales)
        self.dims = tuple(int(x) for x in self.dims)
        if self.fusion_weights is not None:
            self.fusion_weights = tuple(float(w) for w in self.fusion_weights)

    @classmethod
    def for_dataset(cls, name, **overrides):
        '''
        Published settings for one of the benchmark datasets.
        '''
        try:
            preset = DATASET_PRESETS[name.lower()]
        except KeyError:
            raise ConfigError("No preset for dataset '{0}'. Choose from {1}."
                              .format(name, ", ".join(sorted(DATASET_PRESETS))))
        return cls(**{**preset, **overrides})

    @classmethod
    def from_toml(cls, path):
        '''
        Read a flat ``key = value`` TOML file of `TrainConfig` fields.
        '''
        try:
            with open(path, 'rb') as f:
                raw = tomllib.load(f)
        except FileNotFoundError:
            raise IoError("Config file not found: {}".format(path))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("Could not parse {0}: {1}".format(path, exc))

        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError("Unknown config keys in {0}: {1}"
                              .format(path, ", ".join(unknown)))
        try:
            cfg = cls(**raw)
            cfg.validate()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError("Bad value in {0}: {1}".format(path, exc))
        return cfg

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        out = asdict(self)
        for key in ('scales', 'dims', 'fusion_weights'):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    def validate(self):
        '''
        Raise `~coarse_cluster.exceptions.ConfigError` on any out-of-range
        value.
        '''
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(0. <= self.mask_p <= 1., "mask_p must lie in [0, 1].")
        need(self.learning_rate >= 0., "learning_rate must be non-negative.")
        need(self.pretrain_learning_rate >= 0.,
             "pretrain_learning_rate must be non-negative.")
        need(self.weight_decay >= 0., "weight_decay must be non-negative.")
        need(self.lambda_reg >= 0., "lambda_reg must be non-negative.")
        need(self.epochs >= 1, "epochs must be at least 1.")
        need(self.pretrain_epochs >= 0, "pretrain_epochs must be >= 0.")
        need(len(self.scales) >= 1, "At least one scale is required.")
        need(all(0. < s <= 1. for s in self.scales),
             "scales must lie in (0, 1].")
        need(list(self.scales) == sorted(self.scales, reverse=True),
             "scales must be in non-increasing order.")
        need(self.n_min >= 1, "n_min must be at least 1.")
        need(self.tau > 0., "tau must be positive.")
        need(self.dof_v > 0., "dof_v must be positive.")
        need(min(self.alpha, self.beta, self.gamma) >= 0.,
             "Loss weights must be non-negative.")
        need(self.kmeans_restarts >= 1, "kmeans_restarts must be >= 1.")
        need(self.contrast_kmeans_iters >= 1,
             "contrast_kmeans_iters must be >= 1.")
        need(len(self.dims) == 4 and min(self.dims) >= 1,
             "dims must hold four positive sizes (h1, h2, hp, hz).")
        need(self.n_clusters is None or self.n_clusters >= 1,
             "n_clusters must be at least 1.")
        need(self.label_source in LABEL_SOURCES,
             "label_source must be one of {}.".format(LABEL_SOURCES))
        need(self.eps > 0., "eps must be positive.")
        n_views = len(self.scales) + int(self.include_original)
        need(self.fusion_weights is None or
             len(self.fusion_weights) == n_views,
             "fusion_weights needs one entry per view ({}).".format(n_views))
        if self.learning_rate == 0.:
            warnings.warn("learning_rate is 0; parameters will not move.",
                          CoarseClusterWarning)


@dataclass
class EpochConstants:
    '''
    Quantities held fixed while differentiating one epoch's objective.
    '''
    X_aug: np.ndarray
    Pt: np.ndarray
    labels1: Optional[np.ndarray] = None
    labels2: Optional[np.ndarray] = None
    contrast_centroids1: Optional[np.ndarray] = None
    contrast_centroids2: Optional[np.ndarray] = None


@dataclass
class TrainResult:
    '''
    Parameters, centroids, labels and the loss trace of a training run.
    '''
    params: ModelParams
    centroids: np.ndarray
    labels: np.ndarray
    history: list
    metrics: object = None
    wall_clock: float = 0.
    pretrain_history: list = field(default_factory=list)
    coarse_nodes: list = field(default_factory=list)
    embedding: Optional[np.ndarray] = None
    config: Optional[TrainConfig] = None

    def loss_table(self):
        '''
        Per-epoch loss breakdown as an `~astropy.table.Table`.
        '''
        if not self.history:
            return Table()
        names = list(self.history[0].keys())
        return Table(rows=[[row[k] for k in names] for row in self.history],
                     names=names)

    def report(self):
        '''
        JSON-ready summary.
        '''
        return {'losses': self.history,
                'pretrain_losses': self.pretrain_history,
                'metrics': None if self.metrics is None else
                self.metrics.to_dict(),
                'wall_clock': self.wall_clock,
                'coarse_nodes': self.coarse_nodes,
                'n_nodes': int(self.labels.size),
                'config': None if self.config is None else
                self.config.as_dict()}


def _n_clusters(graph, cfg):
    k = cfg.n_clusters if cfg.n_clusters is not None else graph.n_classes
    if k is None:
        raise ConfigError("Set n_clusters: the graph has no class count.")
    return int(k)


def prepare_views(graph, cfg, verbose=False):
    '''
    Coarsen once and return the propagation matrices of every augmented
    view, the original adjacency first when ``cfg.include_original``.

    Returns
    -------
    coarsened : list of `~coarse_cluster.coarsen.CoarsenedGraph`
    a_hats : list of `~scipy.sparse.csr_matrix`
    '''
    coarsened = multi_scale_coarsen(graph, cfg.scales, n_min=cfg.n_min,
                                    verbose=verbose)
    adjs = [graph.adjacency] if cfg.include_original else []
    adjs += [lift_adjacency(cg, graph.n_nodes) for cg in coarsened]
    return coarsened, [normalize_adjacency(a) for a in adjs]


def pretrain(graph, cfg, params=None, verbose=False, return_history=False):
    '''
    Train the encoder on adjacency reconstruction alone.

    The projection head keeps its random initialization.

    Parameters
    ----------
    graph : `~coarse_cluster.graphdata.AttributedGraph`
    cfg : `TrainConfig`
    params : `ModelParams`, optional
        Starting point; seeded Glorot initialization by default.
    verbose : bool, optional
    return_history : bool, optional
        Also return the per-epoch reconstruction loss.

    Returns
    -------
    params : `ModelParams`
    history : list of float
        Only when ``return_history`` is set.
    '''
    if params is None:
        params = ModelParams.init(cfg.dims, graph.n_features, cfg.seed)
    a_hat = normalize_adjacency(graph.adjacency)
    opt = AdamW(cfg.pretrain_learning_rate, cfg.weight_decay,
                decay_keys=WEIGHT_MATRICES)

    history = []
    for epoch in range(cfg.pretrain_epochs):
        cache = {}
        H = gcn_forward(graph.features, a_hat, params, cache=cache)
        loss, _, dH = reconstruction_loss(H, graph.adjacency,
                                          return_grad=True)
        if not np.isfinite(loss):
            raise NumericsError("Reconstruction loss is not finite",
                                epoch=epoch)
        grads = {'W1': np.zeros_like(params.W1),
                 'W2': np.zeros_like(params.W2)}
        encoder_backward(cache, dH, params, grads)
        opt.step({'W1': params.W1, 'W2': params.W2}, grads)
        params.check_finite(epoch=epoch)
        history.append(loss)
        if verbose:
            log.info("pretrain epoch {0}: reconstruction {1:.6g}"
                     .format(epoch, loss))

    if return_history:
        return params, history
    return params


def init_centroids(H, k, restarts=20, seed=0):
    '''
    Lowest-inertia k-means centroids over ``restarts`` runs.
    '''
    centroids, _, _ = kmeans_cluster(H, k, seed=seed, restarts=restarts)
    return centroids


def predict_labels(Q1, Q2, source='mean'):
    '''
    Cluster label of each node: argmax of (Q1 + Q2) / 2, or of Q1 alone.

    Ties go to the lowest cluster index.
    '''
    if Q1.shape != Q2.shape:
        raise ContractViolation("Q1 and Q2 must share one shape.")
    if source == 'mean':
        scores = (Q1 + Q2) / 2.
    elif source == 'q1':
        scores = Q1
    else:
        raise ConfigError("Unknown label source: {}".format(source))
    return np.argmax(scores, axis=1)


def epoch_constants(bundle, centroids, cfg, X_aug, seed, warm=None):
    '''
    Target distribution and in-loop k-means of the contrastive centroids.

    Parameters
    ----------
    bundle : `~coarse_cluster.netfwd.ViewBundle`
    centroids : `~numpy.ndarray`
        Current clustering centroids.
    cfg : `TrainConfig`
    X_aug : `~numpy.ndarray`
    seed : int or sequence of int
    warm : tuple of `~numpy.ndarray`, optional
        Previous contrast centroids for both views.

    Returns
    -------
    consts : `EpochConstants`
    '''
    Q1 = soft_assign(bundle.H1, centroids, cfg.dof_v)
    consts = EpochConstants(X_aug=X_aug, Pt=target_distribution(Q1))
    if not cfg.one_to_many:
        return consts

    k = centroids.shape[0]
    rng = np.random.default_rng(seed)
    for view, Z in ((1, bundle.Z1), (2, bundle.Z2)):
        normed, _ = row_normalize(Z)
        init = None if warm is None else warm[view - 1]
        mu, labels, _ = kmeans_cluster(normed, k, seed=rng, restarts=1,
                                       max_iters=cfg.contrast_kmeans_iters,
                                       init=init)
        setattr(consts, 'labels{}'.format(view), labels)
        setattr(consts, 'contrast_centroids{}'.format(view), mu)
    return consts


def _loss_and_grads(graph, bundle, centroids, consts, cfg, need_grads=True):
    sim = similarity_matrices(bundle.Z1, bundle.Z2, cfg.tau)
    Q1 = soft_assign(bundle.H1, centroids, cfg.dof_v)
    Q2 = soft_assign(bundle.H2, centroids, cfg.dof_v)
    state = ClusterState(centroids=centroids, Q1=Q1, Q2=Q2, Pt=consts.Pt,
                         H1=bundle.H1, H2=bundle.H2,
                         labels1=consts.labels1, labels2=consts.labels2,
                         contrast_centroids1=consts.contrast_centroids1,
                         contrast_centroids2=consts.contrast_centroids2,
                         dof=cfg.dof_v)

    contrast, cgrads, cparts = one_to_many_contrastive(
        sim, state, lambda_reg=cfg.lambda_reg, eps=cfg.eps,
        one_to_many=cfg.one_to_many, dual_view=cfg.dual_view,
        return_parts=True)
    clu, kparts = clustering_loss(Q1, Q2, consts.Pt)
    recon, _, dH_rec = reconstruction_loss(bundle.H1, graph.adjacency,
                                           return_grad=True)
    total = total_loss(contrast, clu, recon, cfg.alpha, cfg.beta, cfg.gamma)

    parts = {'total': total, 'contrast_total': contrast, 'clustering': clu,
             'reconstruction': recon}
    parts.update(cparts)
    parts.update(kparts)
    if not need_grads:
        return total, parts, None

    dH1_clu, dH2_clu, d_mu = clustering_gradients(state)
    upstream = {'Z1': cfg.alpha * cgrads['Z1'],
                'Z2': cfg.alpha * cgrads['Z2'],
                'H1': cfg.beta * dH1_clu + cfg.gamma * dH_rec,
                'H2': cfg.beta * dH2_clu}
    grads = backward(bundle, upstream)
    grads['centroids'] = cfg.beta * d_mu
    return total, parts, grads


def objective(graph, params, centroids, consts, cfg, a_hat, view_hats,
              need_grads=True):
    '''
    Total loss (and gradients) at ``params`` and ``centroids`` with the
    epoch constants held fixed.

    Returns
    -------
    total : float
    parts : dict
    grads : dict or None
        Keys of `~coarse_cluster.netfwd.PARAM_NAMES` plus ``'centroids'``.
    '''
    bundle = forward_views(graph, consts.X_aug, view_hats, params,
                           weights=cfg.fusion_weights, normalized=True,
                           a_hat=a_hat, keep_cache=need_grads)
    return _loss_and_grads(graph, bundle, centroids, consts, cfg,
                           need_grads=need_grads)


def train(graph, cfg, params=None, verbose=False):
    '''
    Joint training: pre-train, initialize centroids, then optimize the
    contrastive, clustering and reconstruction losses together.

    Each epoch masks the features, runs every view, refreshes the target
    distribution and the contrastive k-means, and takes one AdamW step on
    all parameters and the centroids. Labels come from a final pass on the
    unmasked features.

    Parameters
    ----------
    graph : `~coarse_cluster.graphdata.AttributedGraph`
    cfg : `TrainConfig`
    params : `ModelParams`, optional
        Pre-trained parameters; pre-training runs when omitted.
    verbose : bool, optional

    Returns
    -------
    result : `TrainResult`
    '''
    cfg.validate()
    k = _n_clusters(graph, cfg)
    start = time.perf_counter()

    with threadpool_limits(limits=thread_limit()):
        coarsened, view_hats = prepare_views(graph, cfg, verbose=verbose)
        a_hat = normalize_adjacency(graph.adjacency)

        pretrain_history = []
        if params is None:
            params, pretrain_history = pretrain(graph, cfg, verbose=verbose,
                                                return_history=True)
        else:
            params = params.copy()

        H1 = gcn_forward(graph.features, a_hat, params)
        centroids = init_centroids(H1, k, restarts=cfg.kmeans_restarts,
                                   seed=cfg.seed)

        opt = AdamW(cfg.learning_rate, cfg.weight_decay,
                    decay_keys=WEIGHT_MATRICES)
        history = []
        warm = None
        for epoch in range(cfg.epochs):
            tic = time.perf_counter()
            X_aug = augment(graph.features, cfg.mask_p, [cfg.seed, epoch])
            bundle = forward_views(graph, X_aug, view_hats, params,
                                   weights=cfg.fusion_weights,
                                   normalized=True, a_hat=a_hat)
            consts = epoch_constants(bundle, centroids, cfg, X_aug,
                                     [cfg.seed, epoch, 1], warm=warm)
            if cfg.one_to_many:
                warm = (consts.contrast_centroids1, consts.contrast_centroids2)

            total, parts, grads = _loss_and_grads(graph, bundle, centroids,
                                                  consts, cfg)
            if not np.isfinite(total):
                raise NumericsError("Total loss is not finite", epoch=epoch)
            for name, grad in grads.items():
                check_finite(grad, "gradient of {}".format(name), epoch=epoch)

            variables = params.as_dict()
            variables['centroids'] = centroids
            opt.step(variables, grads)

            parts['epoch'] = epoch
            parts['seconds'] = time.perf_counter() - tic
            history.append(parts)
            if verbose:
                log.info("epoch {0}: total {1:.6g} (contrast {2:.6g}, "
                         "clustering {3:.6g}, reconstruction {4:.6g})"
                         .format(epoch, total, parts['contrast_total'],
                                 parts['clustering'], parts['reconstruction']))

        final = forward_views(graph, graph.features, view_hats, params,
                              weights=cfg.fusion_weights, normalized=True,
                              a_hat=a_hat, keep_cache=False)
        Q1 = soft_assign(final.H1, centroids, cfg.dof_v)
        Q2 = soft_assign(final.H2, centroids, cfg.dof_v)
        labels = predict_labels(Q1, Q2, source=cfg.label_source)

    metrics = None
    if graph.labels is not None:
        metrics = clustering_metrics(labels, graph.labels)

    return TrainResult(params=params, centroids=centroids, labels=labels,
                       history=history, metrics=metrics,
                       wall_clock=time.perf_counter() - start,
                       pretrain_history=pretrain_history,
                       coarse_nodes=[int(cg.n_nodes) for cg in coarsened],
                       embedding=final.H1, config=cfg)


def _near_kink(graph, params, consts, a_hat, view_hats, margin):
    bundle = forward_views(graph, consts.X_aug, view_hats, params,
                           normalized=True, a_hat=a_hat)
    smallest = min(min(np.abs(c['P1']).min(), np.abs(c['U']).min())
                   for c in bundle.caches)
    return smallest < margin


def gradient_check(seed=7, n_nodes=30, n_features=12, n_clusters=3,
                   scales=(0.5, 0.25), dims=(8, 6, 10, 5), step=1e-5,
                   cfg=None, max_tries=20):
    '''
    Compare every analytic gradient of the total loss with central finite
    differences on a small random graph.

    The masked features, the contrastive k-means result and the target
    distribution are frozen before differentiating. Parameter draws that
    put a ReLU or PReLU input within a few steps of its kink are redrawn.

    Parameters
    ----------
    seed : int, optional
    n_nodes, n_features, n_clusters : int, optional
        Size of the random graph.
    scales : tuple of float, optional
        Coarse scales, used alongside the original adjacency.
    dims : tuple of int, optional
        (h1, h2, hp, hz).
    step : float, optional
        Finite-difference step.
    cfg : `TrainConfig`, optional
        Loss settings; small defaults are used otherwise.
    max_tries : int, optional
        Parameter redraws allowed to avoid kinks.

    Returns
    -------
    result : dict
        ``max_rel_error``, per-parameter maxima in ``per_parameter`` and the
        number of checked coordinates in ``n_checked``.
    '''
    if cfg is None:
        cfg = TrainConfig(mask_p=0.2, lambda_reg=0.1, scales=tuple(scales),
                          n_min=4, dims=tuple(dims), tau=DEFAULT_TAU,
                          n_clusters=n_clusters, seed=seed)
    cfg.validate()
    graph = planted_partition_graph(n_nodes, n_features, n_clusters,
                                    seed=seed)
    rng = np.random.default_rng(seed)

    _, view_hats = prepare_views(graph, cfg)
    a_hat = normalize_adjacency(graph.adjacency)
    X_aug = augment(graph.features, cfg.mask_p, rng)

    for _ in range(max_tries):
        params = ModelParams.init(cfg.dims, n_features, rng)
        params.bp1 += rng.normal(scale=0.1, size=params.bp1.shape)
        params.bp2 += rng.normal(scale=0.1, size=params.bp2.shape)
        params.prelu_a[...] = rng.uniform(0.1, 0.4)
        trial = EpochConstants(X_aug=X_aug, Pt=np.zeros((n_nodes, 1)))
        if not _near_kink(graph, params, trial, a_hat, view_hats, 20. * step):
            break
    else:
        raise NumericsError("Could not draw parameters away from the "
                            "activation kinks.")

    bundle = forward_views(graph, X_aug, view_hats, params,
                           weights=cfg.fusion_weights, normalized=True,
                           a_hat=a_hat)
    centroids, _, _ = kmeans_cluster(bundle.H1, cfg.n_clusters, seed=rng,
                                     restarts=2)
    centroids += rng.normal(scale=0.05, size=centroids.shape)
    consts = epoch_constants(bundle, centroids, cfg, X_aug, rng)

    _, _, grads = objective(graph, params, centroids, consts, cfg, a_hat,
                            view_hats)

    variables = params.as_dict()
    variables['centroids'] = centroids

    per_parameter = {}
    n_checked = 0
    for name in sorted(variables):
        value = variables[name]
        worst = 0.
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + step
            up = objective(graph, params, centroids, consts, cfg, a_hat,
                           view_hats, need_grads=False)[0]
            value[idx] = orig - step
            down = objective(graph, params, centroids, consts, cfg, a_hat,
                             view_hats, need_grads=False)[0]
            value[idx] = orig
            fd = (up - down) / (2. * step)
            err = abs(grads[name][idx] - fd) / max(1., abs(fd))
            worst = max(worst, float(err))
            n_checked += 1
        per_parameter[name] = worst

    return {'max_rel_error': max(per_parameter.values()),
            'per_parameter': per_parameter,
            'n_checked': n_checked,
            'seed': seed}
