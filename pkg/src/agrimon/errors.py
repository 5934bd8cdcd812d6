"""Exception hierarchy shared by all modules."""


class AgrimonError(Exception):
    """Base class for every error raised by the package."""


class DataError(AgrimonError):
    """Problem with input data (maps to CLI exit code 1)."""


class ConfigError(AgrimonError):
    """Problem with run configuration (maps to CLI exit code 2)."""


# minicube
class InvalidGeometry(DataError):
    pass


class GridMismatch(DataError):
    pass


# sits / pheno_metrics
class InsufficientData(DataError):
    pass


class InvalidWindow(ConfigError):
    pass


class InvalidBounds(ConfigError):
    pass


class MissingDaily(DataError):
    pass


class InvalidParams(ConfigError):
    pass


class NoSeasonStart(DataError):
    pass


class NoSeasonEnd(DataError):
    pass


# indices
class MissingBand(DataError):
    pass


class UnknownIndex(ConfigError):
    pass


class InvalidTemps(DataError):
    pass


# ml
class TooManyClusters(DataError):
    pass


class InvalidFuzzifier(ConfigError):
    pass


class EmptyData(DataError):
    pass


class KTooLarge(DataError):
    pass


class UndefinedStatistic(DataError):
    """A statistic whose denominator is zero (e.g. McNemar with no discordant pairs)."""


# rice pipeline
class MissingFeature(DataError):
    pass


class NoQualifyingClustering(DataError):
    pass


# phenology pipeline
class AmbiguousStageOrder(DataError):
    pass


class EmptyEval(DataError):
    pass


class OutOfSeason(DataError):
    pass


# cap compliance
class InvalidScores(DataError):
    pass


class InvalidCount(DataError):
    pass


class MissingParcel(DataError):
    pass


class InvalidArea(DataError):
    pass


class NoWaterData(DataError):
    pass


class UnknownCrop(DataError):
    pass


# ingest
class ParseError(DataError):
    pass


class EmptyInput(DataError):
    pass


class DuplicateId(DataError):
    pass
