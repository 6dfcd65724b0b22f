"""Exception types with stable machine-readable codes.

Every error raised by this package carries a short stable ``code`` string for
tooling plus human-readable text. The CLI maps exception classes to process
exit codes: validation problems exit 2, compute failures exit 3, violated
acceptance gates exit 4.
"""

from __future__ import annotations


class SdoatError(Exception):
    """Base class for package errors."""

    code = "error"
    exit_code = 3

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ValidationError(SdoatError):
    """Invalid input, configuration, or precondition violation."""

    code = "validation"
    exit_code = 2


class ComputeError(SdoatError):
    """A computation could not produce a valid result."""

    code = "compute"
    exit_code = 3


class NoCarrierError(ComputeError):
    """Demodulation input carries no usable carrier."""

    code = "no_carrier"


class GateError(SdoatError):
    """A configured acceptance threshold was violated."""

    code = "gate"
    exit_code = 4
