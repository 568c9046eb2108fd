"""Exception types shared across the package."""


class AeannError(Exception):
    """Base class for all package errors."""


class InvalidInputError(AeannError, ValueError):
    """Malformed points, datasets or mismatched dimensions."""


class InvalidParameterError(AeannError, ValueError):
    """A numeric parameter is outside its admissible range."""


class UndefinedRatioError(AeannError, ValueError):
    """A ratio over a degenerate dataset (all points identical) was requested."""


class CalibrationError(AeannError, RuntimeError):
    """LSH width bisection could not bracket the requested collision probability."""


class GenerationError(AeannError, RuntimeError):
    """The planted-instance generator ran out of rejection budget."""


class ParseError(AeannError, ValueError):
    """Base class for binary file parse failures."""


class BadMagicError(ParseError):
    pass


class VersionMismatchError(ParseError):
    pass


class TruncatedPayloadError(ParseError):
    pass


class NonFiniteValueError(ParseError):
    pass
