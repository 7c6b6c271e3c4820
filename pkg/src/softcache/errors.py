"""Exception hierarchy shared by all softcache modules."""


class SoftCacheError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameter(SoftCacheError, ValueError):
    pass


class InvalidDataset(SoftCacheError, ValueError):
    pass


class ParseError(SoftCacheError, ValueError):
    """A malformed line in an input file.

    The offending path and 1-based line number are kept as attributes so
    callers can report them.
    """

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class ConstraintViolation(SoftCacheError, ValueError):
    pass


class WrongCase(SoftCacheError, ValueError):
    pass


class NumericFailure(SoftCacheError, ArithmeticError):
    pass


class NotApplicable(SoftCacheError, ValueError):
    pass


class ConfigurationError(SoftCacheError, ValueError):
    pass


class EstimationError(SoftCacheError, ValueError):
    pass


class AssignmentError(SoftCacheError, ValueError):
    pass


class ReportError(SoftCacheError, ValueError):
    pass


class StageError(SoftCacheError):
    """Wraps a failure inside one stage of an experiment run."""

    def __init__(self, stage, config_path, cause):
        self.stage = stage
        self.config_path = config_path
        self.cause = cause
        where = f" ({config_path})" if config_path else ""
        super().__init__(f"[{stage}]{where} {type(cause).__name__}: {cause}")
