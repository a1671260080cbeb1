"""Exception types raised across the package."""
import numpy as np


class TensorShapeError(ValueError):
    """Operand shapes are inconsistent."""


class FactorizationError(np.linalg.LinAlgError):
    """A covariance matrix could not be Cholesky-factorized."""


class DomainError(ValueError):
    """A parameter lies outside the domain where the quantity is defined."""


class ConfigurationError(ValueError):
    """Inputs to a run are mutually inconsistent."""


class DataFormatError(ValueError):
    """An input file is malformed or disagrees with its declared shape."""


class InsufficientDataError(ValueError):
    """Too few samples for the requested statistic."""


class InitializationError(RuntimeError):
    """The chain cannot start from the requested state."""
