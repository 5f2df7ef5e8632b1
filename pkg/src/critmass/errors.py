"""Exception types raised across the package."""


class CritmassError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(CritmassError, ValueError):
    pass


class NegativeDensityError(CritmassError, ValueError):
    pass


class DegenerateProfileError(CritmassError, ValueError):
    """Zero mass or zero L^m norm where a ratio needs both positive."""


class NoZeroFoundError(CritmassError, RuntimeError):
    """A shooting trajectory stayed positive up to the integration cap."""


class MassNotBracketedError(CritmassError, RuntimeError):
    pass


class SupportExceedsDomainError(CritmassError, ValueError):
    pass


class CFLViolationError(CritmassError, RuntimeError):
    pass


class ConfigInvalidError(CritmassError, ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))
