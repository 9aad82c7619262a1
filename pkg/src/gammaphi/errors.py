"""Exception types shared across the package."""

from __future__ import annotations

from typing import Any


class GammaPhiError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GammaPhiError, ValueError):
    """Invalid parameters, grids, presets or config files."""


class DomainError(GammaPhiError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class DimensionError(GammaPhiError, ValueError):
    """Vector lengths disagree with each other or with the class count."""


class ValidationError(GammaPhiError, ValueError):
    """A structural object (permutation, distribution, ...) is malformed."""


class PreconditionError(GammaPhiError, ValueError):
    """An operation was called outside the situation it is defined for."""


class SolverError(GammaPhiError, RuntimeError):
    """A numerical search failed to converge.

    The best value and witness found before giving up are kept on the
    exception so callers can still report them.
    """

    def __init__(self, message: str, best_value: float = float("nan"), best_witness: Any = None):
        super().__init__(message)
        self.best_value = best_value
        self.best_witness = best_witness
