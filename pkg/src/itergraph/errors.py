"""Module to deal with errors."""

from __future__ import annotations

from itergraph.constants import (
    DATASET_ERROR_RC,
    DIVERGENCE_RC,
    GRADCHECK_FAILED_RC,
    INVALID_CONFIG_RC,
    NUMERIC_ERROR_RC,
)


class ItergraphError(RuntimeError):
    """Generic error originating from itergraph library."""

    code = 1  # generic error


class NumericError(ItergraphError):
    """A numeric precondition of an operation does not hold."""

    code = NUMERIC_ERROR_RC


class DimensionError(NumericError):
    """Operand shapes do not compose."""


class ShapeError(NumericError):
    """A value has the wrong shape for the requested operation."""


class DomainError(NumericError):
    """An input lies outside the domain of a function."""


class NonFiniteError(NumericError):
    """NaN or Inf found where only finite values are allowed."""


class DegenerateRowError(NumericError):
    """A row that has to be normalized sums to zero."""


class DegenerateNormError(NumericError):
    """A weighted row has zero norm, so its cosine is undefined."""


class DegenerateFeatureError(NumericError):
    """A feature row has zero norm, so kNN by cosine is undefined."""


class InvalidMaskError(NumericError):
    """A node mask is empty or out of range."""


class SymmetryError(NumericError):
    """An adjacency that must be symmetric is not."""


class IsolatedAnchorError(NumericError):
    """An anchor lost every affinity after sparsification."""


class BarrierDomainError(NumericError):
    """The connectivity log-barrier met a zero-degree node."""


class OracleScaleError(NumericError):
    """A dense recovery oracle was asked for a graph that is too large."""


class TapeError(ItergraphError):
    """Misuse of a gradient tape."""


class DivergenceError(ItergraphError):
    """Training produced a non-finite loss."""

    code = DIVERGENCE_RC

    def __init__(
        self,
        message: str,
        *,
        iteration: int | None = None,
        epoch: int | None = None,
    ) -> None:
        """Construct a divergence error naming where it happened."""
        super().__init__(message)
        self.iteration = iteration
        self.epoch = epoch


class ConfigError(ItergraphError):
    """Invalid run configuration."""

    code = INVALID_CONFIG_RC

    def __init__(self, message: str, *, line: int | None = None) -> None:
        """Construct a configuration error, optionally bound to a line."""
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DatasetError(ItergraphError):
    """Malformed or inconsistent dataset input."""

    code = DATASET_ERROR_RC


class GradcheckError(ItergraphError):
    """Analytic and numeric gradients disagree."""

    code = GRADCHECK_FAILED_RC
