"""Exception hierarchy shared across the package."""


class PauliperError(Exception):
    """Base class for all package errors."""


class DimensionError(PauliperError, ValueError):
    """Operands live on registers of different size."""


class ResourceError(PauliperError):
    """A dense or simulated object would exceed the configured qubit cap."""


class UnsupportedGateError(PauliperError, ValueError):
    """A gate kind is not understood by the operation."""


class ParseError(PauliperError, ValueError):
    """A circuit could not be decomposed into dressed layers."""


class BasisError(PauliperError, ValueError):
    """A Pauli is not diagonal in the basis an instance was measured in."""


class FitError(PauliperError):
    """An exponential fit had too few usable points."""


class CoverageError(PauliperError):
    """Required tomography data or a layer noise model is missing."""


class NumericError(PauliperError):
    """An iterative solver failed to converge."""


class DecompositionError(PauliperError):
    """A target channel lies outside the span of the basis channels."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class MitigationError(PauliperError, ValueError):
    """Readout mitigation would divide by a non-positive coefficient."""


class ExecutorError(PauliperError):
    """The executor failed or has not produced results yet."""
