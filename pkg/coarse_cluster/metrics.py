# Licensed under an MIT open source license - see LICENSE

"""
External clustering quality: Hungarian-matched accuracy, NMI, ARI and
macro-F1.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import (adjusted_rand_score, f1_score,
                             normalized_mutual_info_score)

from .exceptions import ContractViolation, DomainError

__all__ = ['MetricsReport', 'clustering_metrics', 'confusion_matrix',
           'summarize_reports']


@dataclass
class MetricsReport:
    '''
    Clustering scores and the cluster-to-class mapping behind ACC and F1.
    '''
    acc: float
    nmi: float
    ari: float
    f1: float
    n_samples: int
    mapping: dict = field(default_factory=dict)

    def to_dict(self):
        return {'acc': float(self.acc), 'nmi': float(self.nmi),
                'ari': float(self.ari), 'f1': float(self.f1),
                'n_samples': int(self.n_samples),
                'mapping': {str(k): int(v) for k, v in
                            sorted(self.mapping.items())}}


def confusion_matrix(pred, truth):
    '''
    Cluster x class contingency counts.

    Returns
    -------
    counts : `~numpy.ndarray`
    clusters : `~numpy.ndarray`
        Cluster id of each row.
    classes : `~numpy.ndarray`
        Class id of each column.
    '''
    clusters, pred_idx = np.unique(pred, return_inverse=True)
    classes, truth_idx = np.unique(truth, return_inverse=True)
    counts = np.zeros((clusters.size, classes.size), dtype=np.int64)
    np.add.at(counts, (pred_idx, truth_idx), 1)
    return counts, clusters, classes


def clustering_metrics(pred, truth):
    '''
    Score a predicted clustering against ground-truth classes.

    ACC uses the cluster-to-class assignment maximizing matched counts
    (Hungarian method). NMI is normalized by the arithmetic mean of the
    entropies. F1 is macro-averaged over classes after relabelling clusters
    with the ACC mapping; unmatched clusters count as wrong.

    Parameters
    ----------
    pred : array-like
        Predicted cluster ids.
    truth : array-like
        Ground-truth class ids.

    Returns
    -------
    report : `MetricsReport`
    '''
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ContractViolation("pred has {0} labels, truth has {1}."
                                .format(pred.size, truth.size))
    if pred.size == 0:
        raise DomainError("Cannot score an empty labelling.")
    if pred.min() < 0 or truth.min() < 0:
        raise DomainError("Labels must be non-negative.")

    counts, clusters, classes = confusion_matrix(pred, truth)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    mapping = {int(clusters[r]): int(classes[c]) for r, c in zip(rows, cols)}
    acc = counts[rows, cols].sum() / pred.size

    # -1 never matches a class.
    mapped = np.array([mapping.get(int(p), -1) for p in pred])
    f1 = f1_score(truth, mapped, labels=classes, average='macro',
                  zero_division=0)

    nmi = normalized_mutual_info_score(truth, pred,
                                       average_method='arithmetic')
    ari = adjusted_rand_score(truth, pred)

    return MetricsReport(acc=float(acc), nmi=float(nmi), ari=float(ari),
                         f1=float(f1), n_samples=int(pred.size),
                         mapping=mapping)


def summarize_reports(reports):
    '''
    Mean and standard deviation of each score over repeated runs.
    '''
    out = {}
    for key in ('acc', 'nmi', 'ari', 'f1'):
        values = np.array([getattr(r, key) for r in reports])
        out[key] = {'mean': float(values.mean()), 'std': float(values.std()),
                    'values': values.tolist()}
    out['repeats'] = len(reports)
    return out
