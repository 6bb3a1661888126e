"""Exception types raised across the package."""

import numpy as np


class SubstructError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SubstructError, ValueError):
    """A configuration value violates its documented bounds."""


class DomainError(SubstructError, ValueError):
    """An argument lies outside the domain of the operation."""


class AssemblyError(SubstructError, ValueError):
    """Substructures or bases cannot be coupled as requested."""


class FactorizationError(SubstructError, np.linalg.LinAlgError):
    """A matrix that must be positive definite is not."""


class SolverError(SubstructError, RuntimeError):
    """An eigensolver failed or returned inaccurate pairs."""


class ParseError(SubstructError, ValueError):
    """A matrix file is malformed.

    Parameters
    ----------
    message : str
        Description of the problem.
    line : int or None
        1-based line number in the offending file.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConvergenceError(SubstructError, RuntimeError):
    """TMCMC did not reach a tempering exponent of one."""

    def __init__(self, message, exponent):
        self.exponent = exponent
        super().__init__(f"{message} (final exponent {exponent:.6g})")
