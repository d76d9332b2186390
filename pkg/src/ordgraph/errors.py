"""Exception hierarchy shared by every module of the package."""


class OrdGraphError(Exception):
    """Base class for all package errors."""


class ConfigError(OrdGraphError, ValueError):
    pass


class DataError(OrdGraphError, ValueError):
    pass


class DuplicateEntry(DataError):
    pass


class LevelOutOfRange(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class ValueOutOfRange(DataError):
    pass


class NonPositiveCount(DataError):
    pass


class NonPositiveParameter(OrdGraphError, ValueError):
    pass


class NonPositiveDelta(NonPositiveParameter):
    pass


class AllZeroWeights(OrdGraphError, ValueError):
    pass


class EmptyDenominator(OrdGraphError, ValueError):
    pass


class ZeroRateEdge(OrdGraphError, RuntimeError):
    pass


class BadDimensions(OrdGraphError, ValueError):
    pass


class EmptyStateList(OrdGraphError, ValueError):
    pass


class NoEvaluableUsers(OrdGraphError, ValueError):
    pass


class MissingCheckpoint(OrdGraphError, FileNotFoundError):
    pass


class UnknownUser(OrdGraphError, KeyError):
    pass
