# Licensed under an MIT open source license - see LICENSE

"""
Adaptive-moment optimizer with decoupled weight decay.
"""

import numpy as np

from .exceptions import ConfigError, ContractViolation

__all__ = ['AdamW']


class AdamW(object):
    """
    Adam with decoupled weight decay over a dictionary of arrays.

    Parameters
    ----------
    lr : float
        Learning rate, >= 0.
    weight_decay : float, optional
        Decoupled decay rate.
    decay_keys : iterable of str, optional
        Names that receive weight decay. Everything else (biases, slopes,
        centroids) is only moved by its gradient.
    beta1, beta2, eps : float, optional
        Moment coefficients and denominator guard.
    """
    def __init__(self, lr, weight_decay=0., decay_keys=(), beta1=0.9,
                 beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ConfigError("Learning rate must be non-negative.")
        if weight_decay < 0:
            raise ConfigError("Weight decay must be non-negative.")
        self.lr = lr
        self.weight_decay = weight_decay
        self.decay_keys = frozenset(decay_keys)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params, grads):
        '''
        Update every array of ``params`` in place from ``grads``.

        Parameters
        ----------
        params : dict
            Name to array. Arrays are modified in place.
        grads : dict
            Name to gradient, same keys and shapes as ``params``.
        '''
        if set(params) != set(grads):
            raise ContractViolation("Gradients and parameters disagree: {}"
                                    .format(sorted(set(params) ^ set(grads))))
        self.t += 1
        bias1 = 1. - self.beta1 ** self.t
        bias2 = 1. - self.beta2 ** self.t

        for name in sorted(params):
            value, grad = params[name], grads[name]
            if grad.shape != value.shape:
                raise ContractViolation("Gradient of {0} has shape {1}, "
                                        "expected {2}.".format(name, grad.shape,
                                                               value.shape))
            m = self._m.setdefault(name, np.zeros_like(value))
            v = self._v.setdefault(name, np.zeros_like(value))
            m *= self.beta1
            m += (1. - self.beta1) * grad
            v *= self.beta2
            v += (1. - self.beta2) * grad ** 2

            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            if name in self.decay_keys:
                update = update + self.weight_decay * value
            value -= self.lr * update
