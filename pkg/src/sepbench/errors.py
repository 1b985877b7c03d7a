"""Exception hierarchy shared by every sepbench module.

Anything deriving from :class:`SepbenchError` is a validation or precondition
failure (CLI exit code 1). File-system problems surface as plain ``OSError``
(exit code 2).
"""


class SepbenchError(ValueError):
    """Base class for validation and precondition failures."""


class FormatError(SepbenchError):
    pass


class UnsupportedCodecError(SepbenchError):
    pass


class ConfigError(SepbenchError):
    pass


class ShapeError(SepbenchError):
    pass


class DegenerateSignalError(SepbenchError):
    pass


class DomainError(SepbenchError):
    pass


class InsufficientPoolError(SepbenchError):
    pass


class InvalidOperatorError(SepbenchError):
    pass


class AssetValidationError(SepbenchError):
    pass


class MissingCaptionError(SepbenchError):
    pass


class IncompletePairError(SepbenchError):
    pass


class DataError(SepbenchError):
    pass
