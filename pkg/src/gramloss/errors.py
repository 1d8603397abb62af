"""Exception types shared across the package."""


class GramlossError(Exception):
    """Base class for all package errors."""


class InvalidInputError(GramlossError, ValueError):
    """An argument violates an operation's precondition."""


class ProbeRejectedError(GramlossError):
    """A gradient-check probe point sits too close to an argmax tie.

    Raised before any differencing happens; this is not a gradient failure.
    """


class TrainingDivergedError(GramlossError):
    """The training loss became non-finite."""


class CorpusFormatError(GramlossError, ValueError):
    """A corpus file failed to parse or validate.

    Attributes:
        line_number: 1-based line of the offending record, when known.
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
