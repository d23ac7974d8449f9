# Licensed under an MIT open source license - see LICENSE

"""
Utility functions for the coarse_cluster package


"""

import os
import warnings

import numpy as np
import scipy.sparse as sp

from .exceptions import NumericsError, DomainError, CoarseClusterWarning

##########################################################################
# Simple fcns used throughout module
##########################################################################


def make_rng(seed):
    '''
    Return a `~numpy.random.Generator` for an integer seed (or pass an
    existing generator through).
    '''
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_finite(arr, what, epoch=None):
    '''
    Raise `~coarse_cluster.exceptions.NumericsError` when ``arr`` holds a
    NaN or infinity.
    '''
    if sp.issparse(arr):
        data = arr.data
    else:
        data = np.asarray(arr)
    if not np.all(np.isfinite(data)):
        raise NumericsError("Non-finite values in {}".format(what),
                            epoch=epoch)


def max_asymmetry(mat):
    '''
    Largest absolute entry of ``mat - mat.T``.
    '''
    diff = mat - mat.T
    if sp.issparse(diff):
        return 0.0 if diff.nnz == 0 else float(np.abs(diff.data).max())
    return float(np.abs(diff).max()) if diff.size else 0.0


def check_symmetric(mat, tol=1e-9, what="Matrix"):
    '''
    Raise `~coarse_cluster.exceptions.DomainError` if ``mat`` is not
    symmetric within ``tol``.
    '''
    if mat.shape[0] != mat.shape[1]:
        raise DomainError("{} must be square.".format(what))
    asym = max_asymmetry(mat)
    if asym > tol:
        raise DomainError("{0} is not symmetric (max asymmetry {1:.3e})."
                          .format(what, asym))


def row_normalize(mat):
    '''
    L2-normalize the rows of a dense matrix.

    Zero rows stay zero and are flagged with a warning.

    Returns
    -------
    normed : numpy.ndarray
        Row-normalized matrix.
    norms : numpy.ndarray
        Original row norms.
    '''
    norms = np.linalg.norm(mat, axis=1)
    zero = norms == 0.
    if zero.any():
        warnings.warn("{} zero rows left unnormalized.".format(zero.sum()),
                      CoarseClusterWarning)
    safe = np.where(zero, 1., norms)
    return mat / safe[:, np.newaxis], norms


def row_normalize_backward(grad_normed, normed, norms):
    '''
    Back-propagate a gradient through `row_normalize`.
    '''
    safe = np.where(norms == 0., 1., norms)
    radial = np.sum(grad_normed * normed, axis=1, keepdims=True)
    grad = (grad_normed - normed * radial) / safe[:, np.newaxis]
    grad[norms == 0.] = 0.
    return grad


def thread_limit(default=None):
    '''
    Thread cap from the ``COARSE_CLUSTER_THREADS`` (or ``MPCCL_THREADS``)
    environment variable.
    '''
    for key in ("COARSE_CLUSTER_THREADS", "MPCCL_THREADS"):
        value = os.environ.get(key)
        if value:
            try:
                return max(1, int(value))
            except ValueError:
                warnings.warn("Ignoring non-integer {0}={1}".format(key, value),
                              CoarseClusterWarning)
    return default


def format_scale(scale):
    '''
    Stable text form of a coarsening scale for file names.
    '''
    return "{:g}".format(scale)
