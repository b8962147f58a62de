"""Exception and warning types raised across the package."""


class RootEmbedError(Exception):
    """Base class for all package errors."""


class InvalidMeasure(RootEmbedError, ValueError):
    pass


class ViolatesEllipticity(RootEmbedError, ValueError):
    pass


class ViolatesLipschitz(RootEmbedError, ValueError):
    pass


class DomainTooNarrow(RootEmbedError, ValueError):
    pass


class ObstacleAboveInitial(RootEmbedError, ValueError):
    """The shift constant is below C*, so the obstacle pokes above the initial potential."""


class TimeOutOfRange(RootEmbedError, ValueError):
    pass


class IOFailure(RootEmbedError, OSError):
    pass


class ParseFailure(RootEmbedError, ValueError):
    """Malformed barrier CSV."""


class ParseError(RootEmbedError, ValueError):
    """Malformed run configuration."""


class MissingField(ParseError):
    pass


class InvalidConstant(RootEmbedError, ValueError):
    pass


class AllPathsCensored(RootEmbedError, RuntimeError):
    pass


class MissingCheckpoint(RootEmbedError, KeyError):
    pass


class TooManyCensored(RootEmbedError, RuntimeError):
    pass


class LatticeMismatch(RootEmbedError, ValueError):
    pass


class NotConcave(RootEmbedError, ValueError):
    pass


class InfiniteInitialSlope(RootEmbedError, ValueError):
    pass


class HorizonExceeded(RootEmbedError, ValueError):
    pass


class MismatchedProblem(RootEmbedError, ValueError):
    pass


class InvalidTreeParameters(RootEmbedError, ValueError):
    pass


class TrivialBarrierWarning(UserWarning):
    """No grid node reached the obstacle inside the solve window."""
