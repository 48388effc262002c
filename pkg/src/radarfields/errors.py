"""Exception hierarchy. Every error raised by the package derives from RadarFieldsError."""


class RadarFieldsError(Exception):
    pass


class ConfigError(RadarFieldsError, ValueError):
    """Invalid configuration value."""


class DegenerateConfig(ConfigError):
    pass


class RangeOutOfSweep(RadarFieldsError, ValueError):
    pass


class BinOutOfRange(RadarFieldsError, IndexError):
    pass


class ZeroRange(RadarFieldsError, ValueError):
    pass


class OffsetOutOfFov(RadarFieldsError, ValueError):
    pass


class OutOfBounds(RadarFieldsError, ValueError):
    pass


class NotUnitVector(RadarFieldsError, ValueError):
    pass


class ShapeMismatch(RadarFieldsError, ValueError):
    pass


class NonFiniteGradient(RadarFieldsError, FloatingPointError):
    pass


class ZeroWeightSum(RadarFieldsError, ArithmeticError):
    pass


class DegenerateSplit(RadarFieldsError, ValueError):
    pass


class EmptySequence(RadarFieldsError, ValueError):
    pass


class EmptySet(RadarFieldsError, ValueError):
    pass


class MemoryBudgetExceeded(RadarFieldsError, MemoryError):
    pass


class InvalidFrame(RadarFieldsError, ValueError):
    """Frame violates the stored-sequence invariants (rigid pose, non-negative power)."""


class IoError(RadarFieldsError, OSError):
    """File could not be read or written."""


class FormatError(IoError):
    """Base for on-disk format problems."""


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class CorruptHeader(FormatError):
    pass
