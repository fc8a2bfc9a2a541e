"""Exception hierarchy shared by every module of the package."""


class FuzzyLocError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FuzzyLocError):
    """Invalid static configuration (bad spec, bad file, bad parameter)."""


class DataError(FuzzyLocError):
    """Input data that cannot be processed."""


# fuzzy core
class InvalidMembershipError(ConfigurationError):
    pass


class ZeroFiringError(DataError):
    """No rule fired: the total firing strength is zero."""


# channel
class InsufficientDataError(DataError):
    pass


class DegenerateFitError(DataError):
    pass


class NonPositiveDistanceError(DataError):
    pass


class ZeroSlopeError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class ZeroRssiError(DataError):
    pass


# localization
class MedianUndefinedError(DataError):
    pass


class NegativeDistanceError(DataError):
    pass


class MismatchedLengthsError(DataError):
    pass


class NoUsableSamplesError(DataError):
    pass


class AllWeightsZeroError(DataError):
    pass


class OutOfRangeError(DataError):
    pass


# baselines
class TooFewAnchorsError(DataError):
    pass


class CollinearAnchorsError(DataError):
    pass


# pso
class EmptyIntervalError(ConfigurationError):
    pass


class DegenerateOldIntervalError(DataError):
    pass


class InfeasibleChromosomeError(DataError):
    pass


# simulator / eval
class InvalidRoomError(ConfigurationError):
    pass


class ZeroDistanceError(DataError):
    pass


class InvalidProbabilityError(DataError):
    pass
