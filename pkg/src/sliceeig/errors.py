"""Exception types raised across the package."""

import numpy as np


class SliceEigError(Exception):
    """Base class for all package errors."""


class DimensionError(SliceEigError, ValueError):
    """Operand sizes do not agree."""


class SymmetryError(SliceEigError, ValueError):
    """A matrix that must be symmetric is not."""


class MatrixMarketError(SliceEigError, ValueError):
    """Malformed MatrixMarket input.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number of the offending line.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NotSPDError(SliceEigError, np.linalg.LinAlgError):
    """Factorization met a non-positive pivot."""

    def __init__(self, pivot, value):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix not SPD: pivot {pivot} has value {value:.3e}")


class FactorizationError(SliceEigError, np.linalg.LinAlgError):
    """A shifted factorization broke down."""


class ConvergenceError(SliceEigError, RuntimeError):
    """An iterative kernel hit its iteration cap."""


class SubspaceTooSmallError(SliceEigError, RuntimeError):
    """Subspace iteration block cannot hold every wanted eigenpair."""
