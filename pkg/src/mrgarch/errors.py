"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so the CLI can emit
structured diagnostics and map failures onto exit codes (data/argument
problems exit 1, numerical problems exit 2).
"""

from __future__ import annotations


class GarchError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class DimensionError(GarchError):
    """Array shapes are inconsistent with each other or with the model."""

    code = "dimension"


class DomainError(GarchError):
    """Input lies outside the mathematical domain of an operation."""

    code = "domain"


class NumericalError(GarchError):
    """An iteration failed to converge or a computation left the float range."""

    code = "numerical"


class DataError(GarchError):
    """Malformed or inconsistent input data (CSV files, configs)."""

    code = "data"


class RankError(GarchError):
    """A matrix that must be full rank is singular (e.g. too few observations)."""

    code = "rank"


class EstimationError(GarchError):
    """Optimization failed to produce a usable fit."""

    code = "estimation"


class ArgumentError(GarchError):
    """An argument value is out of range or otherwise unusable."""

    code = "argument"
