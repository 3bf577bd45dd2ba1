"""Exception hierarchy shared by all thermosa modules.

Exit-code mapping used by the CLI: usage/parameter problems -> 2,
file-format problems -> 3, external-backend problems -> 4, anything
else -> 5.
"""


class ThermosaError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(ThermosaError, ValueError):
    """Invalid argument or inconsistent configuration."""


class FormatError(ThermosaError):
    """Malformed on-disk data; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptySelectionError(ThermosaError):
    """A statistic or metric was requested over zero valid pixels."""


class CapabilityError(ThermosaError):
    """A correction backend was invoked without a required input."""


class BackendError(ThermosaError):
    """An external correction backend failed, timed out, or replied badly."""
