"""Exception hierarchy shared by all modules."""


class GdcError(Exception):
    """Base class for library errors."""


class InvalidDepth(GdcError, ValueError):
    pass


class InsufficientSupport(GdcError):
    """A depth-gradient stencil touched an invalid depth sample."""


class DegenerateGradient(GdcError):
    """The radial-map gradient vanishes, so the point-to-curve distance is undefined."""


class DegenerateSample(GdcError):
    """A minimal sample cannot determine a pose (collinear, coincident or invalid depth)."""


class DomainError(GdcError, ValueError):
    pass


class ConfigError(GdcError, ValueError):
    pass


class NoValidHypothesis(GdcError):
    pass


class NoVeridicalReference(GdcError):
    pass


class LevelSetNotFound(GdcError):
    pass


class BehindCamera(GdcError):
    pass


class OutOfFrame(GdcError):
    pass


class LengthMismatch(GdcError, ValueError):
    pass


class ParseError(GdcError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class NonUnitQuaternion(ParseError):
    pass
