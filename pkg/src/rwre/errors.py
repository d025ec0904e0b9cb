"""Exception hierarchy for the package."""


class RwreError(Exception):
    """Base class for all errors raised by rwre."""


class InvalidSpec(RwreError, ValueError):
    pass


class HorizonTooSmall(RwreError):
    pass


class IncompleteValley(RwreError):
    pass


class BeyondHorizon(RwreError):
    pass


class ScanCapExceeded(RwreError):
    pass


class BadOrdering(RwreError, ValueError):
    pass


class WindowTooLarge(RwreError, ValueError):
    pass


class Singular(RwreError):
    pass


class StepCapExceeded(RwreError):
    pass


class ParseError(RwreError):
    pass


class ValidationError(RwreError, ValueError):
    """Config validation failure; ``errors`` lists every ``(field_path, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        msg = "; ".join(f"{path}: {message}" for path, message in self.errors)
        super().__init__(msg or "invalid configuration")


class IoError(RwreError, OSError):
    """An output directory or artifact could not be written."""
