"""Exception hierarchy shared by the library and the command line.

Every error carries an ``exit_code`` so the CLI can map it onto a process
status without string matching.
"""


class HoaDoaError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DomainError(HoaDoaError, ValueError):
    """An argument lies outside the domain of an operation."""


class InfeasibleRoomError(DomainError):
    """Sabine inversion produced an absorption coefficient outside (0, 1)."""


class ConfigError(HoaDoaError, ValueError):
    """A model, training or generation configuration is inconsistent."""


class FormatError(HoaDoaError):
    """A file could not be parsed (bad magic, version, truncation...)."""


class DatasetFormatError(FormatError):
    pass


class ModelFormatError(FormatError):
    pass


class GeometryError(ModelFormatError):
    """Model geometry does not match what the caller expects."""


class WavFormatError(FormatError):
    pass


class NumericalError(HoaDoaError, ArithmeticError):
    """Factorisation failure, non-finite loss and similar."""

    exit_code = 3
