"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Input data is malformed (non-finite coordinates, degenerate frame, ...)."""


class InvalidArgumentError(ValueError):
    """A parameter is outside its allowed range."""


class ParseError(ValueError):
    """Annotation or record text could not be parsed.

    ``where`` is the 1-based line number (or record index) of the offending entry.
    """

    def __init__(self, message, where=None):
        self.where = where
        if where is not None:
            message = f"line {where}: {message}"
        super().__init__(message)
