"""Exception types shared across the package.

Every failure mode maps onto one of four families so callers (and the CLI)
can translate them into stable exit codes without matching on messages.
"""


class DimensionError(ValueError):
    """Array rank or shape does not match what an operation requires."""


class NumericsError(ArithmeticError):
    """A computation produced NaN or Inf, or was asked to divide by ~0."""


class StateError(RuntimeError):
    """An object was used out of order (e.g. optimizer step with no gradients)."""


class FormatError(ValueError):
    """A serialized artifact could not be decoded."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionError(FormatError):
    """File declares a format version this code does not read."""


class TruncatedFileError(FormatError):
    """File ends before the declared payload does."""


class IntegrityError(FormatError):
    """Checksum mismatch or internal inconsistency in a decoded artifact."""
