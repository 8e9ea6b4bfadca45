"""Exception hierarchy shared by every module of the package."""


class SerError(Exception):
    """Base class for all errors raised by serpann."""


class FormatError(SerError, ValueError):
    """A file is malformed (bad RIFF header, bad CSV, bad checkpoint magic)."""


class UnsupportedError(SerError, ValueError):
    """A file is well-formed but uses an encoding we do not decode."""


class InsufficientClassError(SerError, ValueError):
    pass


class EmptyInputError(SerError, ValueError):
    pass


class DegenerateFilterError(SerError, ValueError):
    pass


class BoundsError(SerError, IndexError):
    pass


class ShapeError(SerError, ValueError):
    pass


class NumericError(SerError, FloatingPointError):
    """NaN or Inf appeared in a forward value or a gradient."""


class DegenerateBatchError(SerError, ValueError):
    pass


class RankError(SerError, ValueError):
    pass


class DomainError(SerError, ValueError):
    pass


class ConfigError(SerError, ValueError):
    pass


class LabelError(SerError, ValueError):
    pass


class IntegrityError(SerError, ValueError):
    """Checkpoint CRC mismatch."""


class VersionError(SerError, ValueError):
    pass
