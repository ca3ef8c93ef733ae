"""Exception hierarchy shared by every mstpath module."""


class MstPathError(Exception):
    """Base class for all errors raised by mstpath."""


class ParseError(MstPathError):
    """A file or document could not be parsed."""


class ValidationError(MstPathError):
    """Input parsed but violates a structural invariant."""


class DisconnectedGraph(ValidationError):
    pass


class UnknownNode(MstPathError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownRoot(UnknownNode):
    pass


class UnknownSwitch(UnknownNode):
    pass


class UnknownStation(UnknownNode):
    pass


class TooLarge(MstPathError):
    pass


class UnreachableHost(MstPathError):
    pass


class UnknownAction(ParseError):
    pass


class MissingHeader(MstPathError):
    pass


class HopLimitExceeded(MstPathError):
    """A packet visited more switches than the topology has nodes.

    The partial trace is kept on ``trace`` so callers can show the loop.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EmptyCoverage(ValidationError):
    pass


class StationOutsideCoverage(ValidationError):
    pass
