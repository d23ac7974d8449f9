# Licensed under an MIT open source license - see LICENSE

"""
Error and warning vocabulary shared by every coarse_cluster module.
"""

__all__ = ['CoarseClusterError', 'IoError', 'FormatError', 'ConfigError',
           'DomainError', 'ContractViolation', 'NumericsError',
           'CoarseClusterWarning']


class CoarseClusterError(Exception):
    """
    Base class for all errors raised by coarse_cluster.
    """


class IoError(CoarseClusterError, OSError):
    """
    A required input file is missing or unreadable.
    """


class FormatError(CoarseClusterError, ValueError):
    """
    Input data does not follow the dataset directory format.
    """


class ConfigError(CoarseClusterError, ValueError):
    """
    An option or configuration value is outside its allowed range.
    """


class DomainError(CoarseClusterError, ValueError):
    """
    A mathematical precondition of an operation does not hold.
    """


class ContractViolation(CoarseClusterError, ValueError):
    """
    Arguments are inconsistent with each other (shapes, overlapping pairs,
    missing caches).
    """


class NumericsError(CoarseClusterError, FloatingPointError):
    """
    A non-finite value appeared during a computation.

    Parameters
    ----------
    message : str
        Description of the failure.
    epoch : int, optional
        Training epoch at which the failure occurred.
    """
    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = "{0} (epoch {1})".format(message, epoch)
        super(NumericsError, self).__init__(message)
        self.epoch = epoch


class CoarseClusterWarning(UserWarning):
    """
    Recoverable condition that is flagged rather than raised.
    """
