"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DhaError(Exception):
    exit_code = 1


class ConfigError(DhaError):
    exit_code = 1


class ConfigInvalid(ConfigError):
    pass


class ConfigMismatch(ConfigError):
    pass


class ConfigNotFound(ConfigError):
    pass


class DataError(DhaError):
    exit_code = 2


class MissingFile(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, path, lineno, msg=""):
        self.path, self.lineno = path, lineno
        super().__init__(f"{path}:{lineno}: malformed line{': ' + msg if msg else ''}")


class EmptyData(DataError):
    pass


class HeaderMismatch(DataError):
    pass


class DimMismatch(DataError):
    pass


class UnknownField(DataError):
    pass


class UnknownUser(DataError):
    pass


class TokenOutOfVocab(DataError):
    pass


class NegativeRating(DataError):
    pass


class RatioOutOfRange(DataError):
    pass


class CheckpointError(DataError):
    pass


class VersionMismatch(CheckpointError):
    pass


class ChecksumMismatch(CheckpointError):
    pass


class NumericError(DhaError):
    exit_code = 3


class NotPositiveDefinite(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class DimensionMismatch(NumericError, ValueError):
    pass


# backward passes raise this when a cache does not match the parameters
ShapeMismatch = DimensionMismatch


class RateOutOfRange(NumericError, ValueError):
    pass


class MissingComponent(NumericError, KeyError):
    pass


class IndexOutOfRange(NumericError, IndexError):
    pass


class EmptyRelevant(DhaError, ValueError):
    pass


class MonotonicityViolation(NumericError):
    pass
