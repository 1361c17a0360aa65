"""Exception hierarchy shared by all fintact modules.

ConfigError maps to CLI exit code 2, DataError (and subclasses) to exit
code 3. Anything else escaping the CLI is a bug.
"""


class FintactError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FintactError):
    """Bad configuration, missing artifact files, unparsable inputs."""


class DataError(FintactError):
    """Input data violates an operation's precondition."""


# geometry
class NonPositiveDepth(DataError):
    pass


# image processing
class BadTarget(DataError):
    pass


class DegenerateHistogram(DataError):
    pass


class NoRegion(DataError):
    pass


class MultipleRegions(DataError):
    pass


# global reconstruction
class DegenerateWidth(DataError):
    pass


class InsufficientRows(DataError):
    pass


class ExtremeIncline(DataError):
    pass


# markers
class TooManyBlobs(DataError):
    pass


class TrackingLost(DataError):
    pass


class GroupBlind(DataError):
    pass


class LayoutMismatch(DataError):
    pass


# reference store
class SparseMarkers(DataError):
    pass


class EmptyStore(DataError):
    pass


# local reconstruction
class SizeMismatch(DataError):
    pass


class GridMismatch(DataError):
    pass


# calibration
class NoDarkRegion(DataError):
    pass


class DegenerateBoundary(DataError):
    pass


class DegenerateTangent(DataError):
    pass


class NoIntersections(DataError):
    pass


class IllConditioned(DataError):
    pass


# contact / force
class TooFewSamples(DataError):
    pass


class UntrainedNet(ConfigError):
    pass


class TooFewPoints(DataError):
    pass


class IsotropicCloud(DataError):
    pass


class ZeroOffset(DataError):
    pass


# simulator
class StateOutOfView(DataError):
    pass
